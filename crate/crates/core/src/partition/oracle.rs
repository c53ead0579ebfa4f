//! Exhaustive reference solver over all set partitions.

use super::{
    candidate_better, edge_vector, objective_value, PartitionError, PartitionProblem,
    PartitionSolution,
};
use crate::fairness::balance;

/// Bell(12) ≈ 4.2 million partitions is the largest enumeration allowed.
pub const ORACLE_MAX_N: usize = 12;

/// Tolerance on the balance lower bound when filtering candidates.
const BALANCE_TOL: f64 = 1e-9;

/// Visits every restricted growth string of length `n` in lexicographic
/// order.
fn for_each_rgs(n: usize, mut visit: impl FnMut(&[usize])) {
    if n == 0 {
        return;
    }
    let mut a = vec![0usize; n];
    // maxes[i]: largest label among a[0..i].
    let mut maxes = vec![0usize; n];
    loop {
        visit(&a);
        // Find the rightmost position that can be incremented.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] <= maxes[i] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        for j in (i + 1)..n {
            a[j] = 0;
            maxes[j] = maxes[j - 1].max(a[j - 1]);
        }
    }
}

fn admissible(problem: &PartitionProblem, assignment: &[usize]) -> bool {
    let n = assignment.len();
    let groups = assignment.iter().copied().max().map_or(0, |g| g + 1);
    let mut sizes = vec![0usize; groups];
    for &g in assignment {
        sizes[g] += 1;
    }
    if sizes
        .iter()
        .any(|&s| s < problem.min_size || s > problem.max_size)
    {
        return false;
    }
    for (name, &lower) in &problem.balance_bounds {
        if lower <= 0.0 {
            continue;
        }
        let col = problem.attrs.column(name).expect("validated problem");
        let population = col.iter().filter(|&&b| b).count() as f64 / n as f64;
        let mut hits = vec![0usize; groups];
        for (m, &g) in assignment.iter().enumerate() {
            hits[g] += usize::from(col[m]);
        }
        for g in 0..groups {
            let ratio = hits[g] as f64 / sizes[g] as f64;
            if balance(ratio, population) < lower - BALANCE_TOL {
                return false;
            }
        }
    }
    true
}

/// Number of partitions satisfying the size and balance constraints.
pub fn count_candidates(problem: &PartitionProblem) -> Result<usize, PartitionError> {
    guard(problem)?;
    let mut count = 0;
    for_each_rgs(problem.n(), |a| {
        if admissible(problem, a) {
            count += 1;
        }
    });
    Ok(count)
}

/// Optimal partition by full enumeration, with the same canonical tie-break
/// as the branch-and-bound solver.
pub fn brute_force_oracle(problem: &PartitionProblem) -> Result<PartitionSolution, PartitionError> {
    guard(problem)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_rgs(problem.n(), |a| {
        if !admissible(problem, a) {
            return;
        }
        let obj = objective_value(&edge_vector(a), &problem.distances).expect("same n");
        let replace = match &best {
            None => true,
            Some((b, ba)) => candidate_better(problem.sense, obj, a, *b, ba),
        };
        if replace {
            best = Some((obj, a.to_vec()));
        }
    });
    let (_, a) = best.ok_or_else(|| {
        PartitionError::InfeasibleProblem("no partition satisfies the constraints".into())
    })?;
    Ok(PartitionSolution::from_assignment(
        &a,
        &problem.distances,
        problem.sense,
        true,
    ))
}

fn guard(problem: &PartitionProblem) -> Result<(), PartitionError> {
    problem.validate()?;
    if problem.n() > ORACLE_MAX_N {
        return Err(PartitionError::TooLarge {
            n: problem.n(),
            max: ORACLE_MAX_N,
        });
    }
    Ok(())
}
