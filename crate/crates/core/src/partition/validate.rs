//! Constraint checker that works from the pair-indicator vector alone.

use super::{edge_vector, objective_value, PartitionProblem, PartitionSolution};
use crate::fairness::balance;

/// Re-checks a solution against the edge formulation: binary pairs,
/// triangle closure, size bounds from pair degrees, balance from the
/// vertex-centric ratio, and the reported objective. Returns every
/// violation found.
pub fn validate_solution(
    problem: &PartitionProblem,
    solution: &PartitionSolution,
) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    let n = problem.n();
    let w = &solution.w;
    if w.n() != n || solution.assignment.len() != n {
        return Err(vec![format!(
            "solution covers {} vertices, problem has {n}",
            w.n()
        )]);
    }
    if w.bits().iter().any(|&b| b > 1) {
        errors.push("pair vector is not binary".into());
    }
    if *w != edge_vector(&solution.assignment) {
        errors.push("pair vector does not match the assignment".into());
    }

    for m in 0..n {
        for k in 0..n {
            for o in 0..n {
                if m == k || k == o || m == o {
                    continue;
                }
                if i32::from(w.get(m, k)) + i32::from(w.get(m, o)) - i32::from(w.get(k, o)) > 1 {
                    errors.push(format!("triangle inequality violated at ({m},{k},{o})"));
                }
            }
        }
    }

    for m in 0..n {
        let size = w.degree(m) + 1;
        if size < problem.min_size || size > problem.max_size {
            errors.push(format!(
                "vertex {m} sits in a group of {size}, outside [{}, {}]",
                problem.min_size, problem.max_size
            ));
        }
    }

    for (name, &lower) in &problem.balance_bounds {
        let Ok(col) = problem.attrs.column(name) else {
            errors.push(format!("unknown attribute {name}"));
            continue;
        };
        let population = col.iter().filter(|&&b| b).count() as f64 / n as f64;
        for m in 0..n {
            let linked_attr = (0..n)
                .filter(|&k| k != m && w.get(m, k) == 1 && col[k])
                .count();
            let ratio = (linked_attr + usize::from(col[m])) as f64 / (w.degree(m) + 1) as f64;
            let b = balance(ratio, population);
            if b < lower - 1e-9 {
                errors.push(format!(
                    "balance of {name} around vertex {m} is {b}, below {lower}"
                ));
            }
        }
    }

    match objective_value(w, &problem.distances) {
        Ok(obj) => {
            let tol = 1e-9 * obj.abs().max(1.0);
            if (obj - solution.objective).abs() > tol {
                errors.push(format!(
                    "reported objective {} differs from recomputed {obj}",
                    solution.objective
                ));
            }
        }
        Err(e) => errors.push(e.to_string()),
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{DistanceMatrix, EdgeVector, Sense};

    #[test]
    fn catches_broken_solutions() {
        let d = DistanceMatrix::from_fn(4, |i, j| (i + j) as f64).unwrap();
        let p = PartitionProblem::unconstrained(d.clone(), 2, 2, Sense::Maximize).unwrap();
        let good = PartitionSolution::from_assignment(&[0, 0, 1, 1], &d, Sense::Maximize, true);
        validate_solution(&p, &good).unwrap();

        let mut bad = good.clone();
        // 01 and 02 on, 12 off: not transitive.
        bad.w = EdgeVector::from_bits(4, vec![1, 1, 0, 0, 0, 1]).unwrap();
        let errs = validate_solution(&p, &bad).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("triangle")));

        let mut bad = good.clone();
        bad.objective += 1.0;
        assert!(validate_solution(&p, &bad).is_err());

        let big = PartitionSolution::from_assignment(&[0, 0, 0, 1], &d, Sense::Maximize, true);
        let errs = validate_solution(&p, &big).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("outside")));
    }
}
