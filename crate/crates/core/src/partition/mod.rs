//! Size- and balance-constrained graph partitioning over the complete
//! distance graph of the embedded students.
//!
//! A partition is stored as a canonical assignment vector: groups are
//! numbered by their smallest member, so the vector is a restricted growth
//! string. The pair-indicator view `w` used by the edge formulation is
//! derived from it on demand.

mod feasibility;
mod oracle;
mod solver;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::AttributeTable;
use crate::fairness::{count_window, CountWindow};
use crate::spectral::SpectralEmbedding;

pub use feasibility::{feasibility_check, Feasibility};
pub use oracle::{brute_force_oracle, count_candidates, ORACLE_MAX_N};
pub use solver::{solve_exact, SolveOptions, SolveStats};
pub use validate::validate_solution;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("infeasible: {0}")]
    InfeasibleProblem(String),
    #[error("time budget exceeded before optimality was proven")]
    TimeoutBudgetExceeded {
        incumbent: Option<Box<PartitionSolution>>,
    },
    #[error("brute force is limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Sense {
    #[default]
    #[serde(rename = "max")]
    Maximize,
    #[serde(rename = "min")]
    Minimize,
}

impl Sense {
    /// Whether objective `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Maximize => a > b,
            Sense::Minimize => a < b,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Maximize => "max",
            Sense::Minimize => "min",
        })
    }
}

impl std::str::FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" | "maximize" => Ok(Sense::Maximize),
            "min" | "minimize" => Ok(Sense::Minimize),
            other => Err(format!("unknown sense {other:?} (expected max or min)")),
        }
    }
}

/// Symmetric nonnegative pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_dense(n: usize, d: Vec<f64>) -> Result<Self, PartitionError> {
        if d.len() != n * n {
            return Err(PartitionError::DimensionMismatch(format!(
                "{} entries for n = {n}",
                d.len()
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(PartitionError::InvalidProblem(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..n {
                let x = d[i * n + j];
                if !(x >= 0.0 && x.is_finite()) || x != d[j * n + i] {
                    return Err(PartitionError::InvalidProblem(format!(
                        "distance ({i},{j}) = {x} is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { n, d })
    }

    /// Builds the matrix from a closure evaluated on pairs `i < j`.
    pub fn from_fn(
        n: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, PartitionError> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let x = f(i, j);
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        Self::from_dense(n, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Euclidean distances between spectral vectors.
pub fn distance_matrix(e: &SpectralEmbedding) -> DistanceMatrix {
    let n = e.n();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = e
                .point(i)
                .iter()
                .zip(e.point(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = x;
            d[j * n + i] = x;
        }
    }
    DistanceMatrix { n, d }
}

/// Binary indicator over unordered pairs `{m, n}`, `m < n`, in row order
/// (01, 02, …, 0(n-1), 12, …).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeVector {
    n: usize,
    bits: Vec<u8>,
}

impl EdgeVector {
    pub fn from_bits(n: usize, bits: Vec<u8>) -> Result<Self, PartitionError> {
        if bits.len() != n * n.saturating_sub(1) / 2 {
            return Err(PartitionError::DimensionMismatch(format!(
                "{} pair bits for n = {n}",
                bits.len()
            )));
        }
        Ok(Self { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
        let (m, k) = if a < b { (a, b) } else { (b, a) };
        debug_assert!(m != k && k < n);
        m * n - m * (m + 1) / 2 + (k - m - 1)
    }

    pub fn get(&self, a: usize, b: usize) -> u8 {
        self.bits[Self::pair_index(self.n, a, b)]
    }

    /// |w(δ(m))|: number of pairs at `m` switched on.
    pub fn degree(&self, m: usize) -> usize {
        (0..self.n)
            .filter(|&k| k != m && self.get(m, k) == 1)
            .count()
    }
}

/// Pair indicator of an assignment: 1 iff both vertices share a group.
pub fn edge_vector(assignment: &[usize]) -> EdgeVector {
    let n = assignment.len();
    let mut bits = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for m in 0..n {
        for k in (m + 1)..n {
            bits.push(u8::from(assignment[m] == assignment[k]));
        }
    }
    EdgeVector { n, bits }
}

/// Σ d_mn·w_mn over pairs in row order.
pub fn objective_value(w: &EdgeVector, d: &DistanceMatrix) -> Result<f64, PartitionError> {
    if w.n != d.n {
        return Err(PartitionError::DimensionMismatch(format!(
            "edge vector over {} vertices, distances over {}",
            w.n, d.n
        )));
    }
    let n = d.n;
    let mut total = 0.0;
    let mut idx = 0;
    for m in 0..n {
        for k in (m + 1)..n {
            total += d.get(m, k) * f64::from(w.bits[idx]);
            idx += 1;
        }
    }
    Ok(total)
}

/// Same value as `objective_value(&edge_vector(a), d)`, bit for bit, summing
/// only the pairs that are switched on.
pub(crate) fn assignment_objective(assignment: &[usize], d: &DistanceMatrix) -> f64 {
    let n = assignment.len();
    let mut total = 0.0;
    for m in 0..n {
        for k in (m + 1)..n {
            if assignment[m] == assignment[k] {
                total += d.get(m, k);
            }
        }
    }
    total
}

/// Renumbers groups by first appearance.
pub fn canonicalize(assignment: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    assignment
        .iter()
        .map(|&g| {
            let next = map.len();
            *map.entry(g).or_insert(next)
        })
        .collect()
}

/// Member lists for a canonical assignment.
pub fn groups_of(assignment: &[usize]) -> Vec<Vec<usize>> {
    let k = assignment.iter().copied().max().map_or(0, |g| g + 1);
    let mut groups = vec![Vec::new(); k];
    for (m, &g) in assignment.iter().enumerate() {
        groups[g].push(m);
    }
    groups
}

/// The full problem: distances, size bounds, balance lower bounds and sense.
#[derive(Debug, Clone)]
pub struct PartitionProblem {
    pub distances: DistanceMatrix,
    pub min_size: usize,
    pub max_size: usize,
    pub balance_bounds: BTreeMap<String, f64>,
    pub attrs: AttributeTable,
    pub sense: Sense,
}

/// A balance bound that actually restricts the search.
#[derive(Debug, Clone)]
pub(crate) struct ActiveBalance {
    pub name: String,
    pub lower: f64,
    pub column: Vec<bool>,
    pub total: usize,
    /// Count window per final group size, indexed by size.
    pub windows: Vec<Option<CountWindow>>,
}

impl PartitionProblem {
    pub fn new(
        distances: DistanceMatrix,
        min_size: usize,
        max_size: usize,
        balance_bounds: BTreeMap<String, f64>,
        attrs: AttributeTable,
        sense: Sense,
    ) -> Result<Self, PartitionError> {
        let p = Self {
            distances,
            min_size,
            max_size,
            balance_bounds,
            attrs,
            sense,
        };
        p.validate()?;
        Ok(p)
    }

    /// Problem without fairness constraints.
    pub fn unconstrained(
        distances: DistanceMatrix,
        min_size: usize,
        max_size: usize,
        sense: Sense,
    ) -> Result<Self, PartitionError> {
        let ids = (0..distances.n()).map(|i| i.to_string()).collect();
        Self::new(
            distances,
            min_size,
            max_size,
            BTreeMap::new(),
            AttributeTable::empty(ids),
            sense,
        )
    }

    pub fn n(&self) -> usize {
        self.distances.n()
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let n = self.n();
        if n == 0 {
            return Err(PartitionError::InvalidProblem("no vertices".into()));
        }
        if !(1 <= self.min_size && self.min_size <= self.max_size && self.max_size <= n) {
            return Err(PartitionError::InvalidProblem(format!(
                "size bounds must satisfy 1 <= F_L <= F_U <= n (got F_L = {}, F_U = {}, n = {n})",
                self.min_size, self.max_size
            )));
        }
        if self.attrs.len() != n {
            return Err(PartitionError::DimensionMismatch(format!(
                "attribute table has {} rows, problem has {n} vertices",
                self.attrs.len()
            )));
        }
        for (s, &b) in &self.balance_bounds {
            if !(0.0..=1.0).contains(&b) {
                return Err(PartitionError::InvalidProblem(format!(
                    "balance bound for {s} must lie in [0, 1], got {b}"
                )));
            }
            self.attrs
                .column(s)
                .map_err(|e| PartitionError::InvalidProblem(e.to_string()))?;
        }
        Ok(())
    }

    /// Same constraints over a different distance matrix.
    pub fn with_distances(&self, distances: DistanceMatrix) -> Self {
        Self {
            distances,
            ..self.clone()
        }
    }

    /// Balance bounds that constrain anything: B_L > 0 and a population ratio
    /// strictly between 0 and 1. Others are skipped with a warning.
    pub(crate) fn active_balances(&self) -> Vec<ActiveBalance> {
        let n = self.n();
        let mut out = Vec::new();
        for (s, &lower) in &self.balance_bounds {
            let column = self.attrs.column(s).expect("validated").to_vec();
            let total = column.iter().filter(|&&b| b).count();
            if lower <= 0.0 {
                continue;
            }
            if total == 0 || total == n {
                log::warn!(
                    "attribute {s} has population ratio {}; balance bound skipped",
                    total as f64 / n as f64
                );
                continue;
            }
            let pop = total as f64 / n as f64;
            let windows = (0..=self.max_size)
                .map(|g| {
                    if g == 0 {
                        None
                    } else {
                        count_window(g, pop, lower)
                    }
                })
                .collect();
            out.push(ActiveBalance {
                name: s.clone(),
                lower,
                column,
                total,
                windows,
            });
        }
        out
    }
}

/// An optimal (or best-found) partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSolution {
    pub assignment: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub w: EdgeVector,
    pub objective: f64,
    pub sense: Sense,
    pub proven_optimal: bool,
}

impl PartitionSolution {
    pub fn from_assignment(
        assignment: &[usize],
        d: &DistanceMatrix,
        sense: Sense,
        proven_optimal: bool,
    ) -> Self {
        let assignment = canonicalize(assignment);
        let w = edge_vector(&assignment);
        let objective = assignment_objective(&assignment, d);
        Self {
            groups: groups_of(&assignment),
            assignment,
            w,
            objective,
            sense,
            proven_optimal,
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

/// Total order on candidate solutions: better objective first, then the
/// lexicographically smaller assignment.
pub(crate) fn candidate_better(
    sense: Sense,
    obj: f64,
    assignment: &[usize],
    best_obj: f64,
    best: &[usize],
) -> bool {
    sense.better(obj, best_obj) || (obj == best_obj && assignment < best)
}
