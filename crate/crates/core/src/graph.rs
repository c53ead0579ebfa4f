//! Student similarity graph built from pairwise mark correlations.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::MarkMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors need at least 2 entries")]
    TooShort,
    #[error("exponent scale A must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("correlation threshold B must lie in [-1, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("adjacency matrix is not a valid weighted graph: {0}")]
    InvalidAdjacency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(format!("unknown correlation kind {other:?}")),
        }
    }
}

/// Pearson product-moment correlation. Zero-variance input yields 0.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(GraphError::TooShort);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman_corr(x: &[f64], y: &[f64]) -> Result<f64, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::LengthMismatch(x.len(), y.len()));
    }
    pearson_corr(&average_ranks(x), &average_ranks(y))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn correlation(kind: CorrelationKind, x: &[f64], y: &[f64]) -> Result<f64, GraphError> {
    match kind {
        CorrelationKind::Pearson => pearson_corr(x, y),
        CorrelationKind::Spearman => spearman_corr(x, y),
    }
}

/// Parameters of the exponential correlation kernel: an edge exists when the
/// correlation is at least `threshold`, with weight `exp(corr² / scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub scale: f64,
    pub threshold: f64,
    pub correlation: CorrelationKind,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            scale: 10.0,
            threshold: 0.5,
            correlation: CorrelationKind::Pearson,
        }
    }
}

impl GraphParams {
    pub fn new(scale: f64, threshold: f64) -> Result<Self, GraphError> {
        let p = Self {
            scale,
            threshold,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(GraphError::InvalidScale(self.scale));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(GraphError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }

    /// Edge weight for a given correlation; 0 below the threshold.
    pub fn weight(&self, corr: f64) -> f64 {
        if corr >= self.threshold {
            (corr * corr / self.scale).exp()
        } else {
            0.0
        }
    }
}

/// Symmetric, nonnegative, zero-diagonal adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Builds a graph from a dense row-major matrix, rejecting asymmetry,
    /// negative or non-finite weights and self-loops.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self, GraphError> {
        if weights.len() != n * n {
            return Err(GraphError::InvalidAdjacency(format!(
                "expected {} entries, got {}",
                n * n,
                weights.len()
            )));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(GraphError::InvalidAdjacency(format!("self-loop at {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(GraphError::InvalidAdjacency(format!(
                        "weight ({i},{j}) = {w}"
                    )));
                }
                if w != weights[j * n + i] {
                    return Err(GraphError::InvalidAdjacency(format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { n, weights })
    }

    /// Graph on `n` vertices with the given undirected weighted edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut w = vec![0.0; n * n];
        for &(a, b, x) in edges {
            if a >= n || b >= n {
                return Err(GraphError::InvalidAdjacency(format!(
                    "edge ({a},{b}) out of range"
                )));
            }
            w[a * n + b] = x;
            w[b * n + a] = x;
        }
        Self::from_dense(n, w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Full n×n matrix as CSV, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.weights.chunks(self.n.max(1)) {
            let line: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Similarity graph over the students of `marks`.
pub fn build_similarity_graph(
    marks: &MarkMatrix,
    params: &GraphParams,
) -> Result<WeightedGraph, GraphError> {
    params.validate()?;
    let n = marks.n_students();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = correlation(params.correlation, marks.row(i), marks.row(j))?;
            let x = params.weight(c);
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
    }
    Ok(WeightedGraph { n, weights: w })
}

/// Row sums of the adjacency matrix.
pub fn degree_vector(g: &WeightedGraph) -> Vec<f64> {
    g.weights
        .chunks(g.n.max(1))
        .take(g.n)
        .map(|r| r.iter().sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(
            pearson_corr(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0
        );
        assert_eq!(
            pearson_corr(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        assert_eq!(
            pearson_corr(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        // Hand computation: deviations (-1.5,-.5,.5,1.5) and (-1.5,-.5,1.5,.5);
        // covariance sum 4, each variance sum 5.
        let r = pearson_corr(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(
            pearson_corr(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(GraphError::LengthMismatch(2, 3))
        );
    }

    #[test]
    fn spearman_uses_ranks() {
        let r = spearman_corr(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn kernel_weights() {
        let p = GraphParams::default();
        assert!((p.weight(1.0) - 1.105_170_918).abs() < 1e-9);
        assert_eq!(p.weight(0.49), 0.0);
        assert!((p.weight(0.5) - 1.025_315_121).abs() < 1e-9);
        assert_eq!(p.weight(-0.9), 0.0);
        assert!(GraphParams::new(0.0, 0.5).is_err());
        assert!(GraphParams::new(10.0, 1.5).is_err());
    }

    #[test]
    fn degrees() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 1.1)]).unwrap();
        assert_eq!(degree_vector(&g), vec![1.1, 1.1]);
        let g = WeightedGraph::from_edges(3, &[]).unwrap();
        assert_eq!(degree_vector(&g), vec![0.0; 3]);
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 2.0)]).unwrap();
        assert_eq!(degree_vector(&g), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_adjacency() {
        assert!(WeightedGraph::from_dense(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(WeightedGraph::from_dense(2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(WeightedGraph::from_dense(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
    }

    fn marks_strategy() -> impl Strategy<Value = MarkMatrix> {
        (2usize..9, 2usize..8).prop_flat_map(|(n, l)| {
            proptest::collection::vec(0.0f64..100.0, n * l).prop_map(move |v| {
                MarkMatrix::new(
                    (0..n).map(|i| format!("s{i}")).collect(),
                    (0..l).map(|k| format!("c{k}")).collect(),
                    v,
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn graph_invariants(marks in marks_strategy(), b in -1.0f64..1.0, a in 0.1f64..50.0) {
            let p = GraphParams::new(a, b).unwrap();
            let g = build_similarity_graph(&marks, &p).unwrap();
            let n = g.n();
            let upper = (1.0 / a).exp();
            let lower = if b >= 0.0 { (b * b / a).exp() } else { 1.0 };
            for i in 0..n {
                prop_assert_eq!(g.weight(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(g.weight(i, j), g.weight(j, i));
                    if i == j { continue; }
                    let c = pearson_corr(marks.row(i), marks.row(j)).unwrap();
                    let w = g.weight(i, j);
                    prop_assert_eq!(w == 0.0, c < b);
                    if w != 0.0 {
                        prop_assert!(w <= upper * (1.0 + 1e-15));
                        prop_assert!(w >= lower * (1.0 - 1e-15));
                    }
                }
            }
        }

        #[test]
        fn permutation_conjugates_adjacency(marks in marks_strategy(), seed in any::<u64>()) {
            let n = marks.n_students();
            let mut perm: Vec<usize> = (0..n).collect();
            // Fisher-Yates driven by a simple LCG keeps the test self-contained.
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let p = GraphParams::default();
            let g = build_similarity_graph(&marks, &p).unwrap();
            let gp = build_similarity_graph(&marks.select_rows(&perm).unwrap(), &p).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(gp.weight(i, j), g.weight(perm[i], perm[j]));
                }
            }
        }

        #[test]
        fn weight_monotone_above_threshold(c1 in 0.5f64..1.0, c2 in 0.5f64..1.0) {
            let p = GraphParams::default();
            if c1 < c2 {
                prop_assert!(p.weight(c1) < p.weight(c2));
            }
        }
    }
}
