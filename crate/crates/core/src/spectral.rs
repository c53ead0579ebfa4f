//! Graph Laplacians and the Laplacian-eigenmap embedding.

use thiserror::Error;

use crate::graph::{degree_vector, WeightedGraph};
use crate::linalg::{symmetric_eigendecomposition, EigenError, EigenSystem, Matrix, JACOBI_TOL};

/// Eigenvalues at or below this are counted as zero when diagnosing
/// disconnected graphs.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

pub const DEFAULT_DIMENSION: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("embedding dimension {m} must be between 1 and n - 1 = {max}")]
    MTooLarge { m: usize, max: usize },
    #[error("RGB conversion needs a 3-dimensional embedding, got {0}")]
    WrongDimension(usize),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedWarning {
    /// The normalized Laplacian has more than one zero eigenvalue.
    Disconnected { zero_eigenvalues: usize },
    /// Vertices with zero degree; their rows of the normalized Laplacian are
    /// zero.
    IsolatedVertices(Vec<usize>),
}

impl std::fmt::Display for EmbedWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Disconnected { zero_eigenvalues } => write!(
                f,
                "similarity graph is disconnected ({zero_eigenvalues} zero eigenvalues)"
            ),
            Self::IsolatedVertices(v) => write!(f, "isolated vertices: {v:?}"),
        }
    }
}

/// L = D − W.
pub fn laplacian(g: &WeightedGraph) -> Matrix {
    let n = g.n();
    let d = degree_vector(g);
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] = if i == j {
                d[i] - g.weight(i, i)
            } else {
                -g.weight(i, j)
            };
        }
    }
    l
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLaplacian {
    pub matrix: Matrix,
    /// Zero-degree vertices, whose rows and columns were left at zero.
    pub isolated: Vec<usize>,
}

/// D^{-1/2} (D − W) D^{-1/2}, with zero rows and columns for isolated
/// vertices.
pub fn normalized_laplacian(g: &WeightedGraph) -> NormalizedLaplacian {
    let n = g.n();
    let d = degree_vector(g);
    let inv_sqrt: Vec<f64> = d
        .iter()
        .map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 })
        .collect();
    let isolated = (0..n).filter(|&i| d[i] <= 0.0).collect();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        if d[i] > 0.0 {
            m[(i, i)] = (d[i] - g.weight(i, i)) * inv_sqrt[i] * inv_sqrt[i];
        }
        for j in (i + 1)..n {
            let x = -g.weight(i, j) * (inv_sqrt[i] * inv_sqrt[j]);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    NormalizedLaplacian {
        matrix: m,
        isolated,
    }
}

/// Spectral coordinates: row `m` of `coords` is the spectral vector of
/// vertex `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub coords: Matrix,
    pub retained_eigenvalues: Vec<f64>,
    /// Full ascending spectrum of the normalized Laplacian.
    pub spectrum: Vec<f64>,
    pub warnings: Vec<EmbedWarning>,
}

impl SpectralEmbedding {
    pub fn dimension(&self) -> usize {
        self.coords.cols()
    }

    pub fn n(&self) -> usize {
        self.coords.rows()
    }

    pub fn point(&self, m: usize) -> &[f64] {
        self.coords.row(m)
    }

    /// Builds an embedding from explicit coordinates (no spectral metadata).
    pub fn from_coords(coords: Matrix) -> Self {
        Self {
            coords,
            retained_eigenvalues: Vec::new(),
            spectrum: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let data = self.coords.as_slice().iter().map(|x| x * factor).collect();
        Self {
            coords: Matrix::from_row_major(self.coords.rows(), self.coords.cols(), data),
            ..self.clone()
        }
    }
}

/// Eigen-decomposes the normalized Laplacian and keeps eigenvectors
/// 1..=`dim` in ascending eigenvalue order, dropping the smoothest one.
pub fn embed(g: &WeightedGraph, dim: usize) -> Result<SpectralEmbedding, SpectralError> {
    let n = g.n();
    if dim == 0 || dim + 1 > n {
        return Err(SpectralError::MTooLarge {
            m: dim,
            max: n.saturating_sub(1),
        });
    }
    let lap = normalized_laplacian(g);
    let eig = symmetric_eigendecomposition(&lap.matrix, JACOBI_TOL)?;
    Ok(from_eigensystem(&eig, dim, lap.isolated))
}

fn from_eigensystem(eig: &EigenSystem, dim: usize, isolated: Vec<usize>) -> SpectralEmbedding {
    let n = eig.values.len();
    let mut coords = Matrix::zeros(n, dim);
    for j in 0..dim {
        for i in 0..n {
            coords[(i, j)] = eig.vectors[(i, j + 1)];
        }
    }
    let mut warnings = Vec::new();
    if !isolated.is_empty() {
        warnings.push(EmbedWarning::IsolatedVertices(isolated));
    }
    let zeros = eig
        .values
        .iter()
        .filter(|&&v| v.abs() <= ZERO_EIGENVALUE_TOL)
        .count();
    if zeros > 1 {
        warnings.push(EmbedWarning::Disconnected {
            zero_eigenvalues: zeros,
        });
    }
    SpectralEmbedding {
        coords,
        retained_eigenvalues: eig.values[1..=dim].to_vec(),
        spectrum: eig.values.clone(),
        warnings,
    }
}

/// Per-column affine rescale of a 3-D embedding into [0, 1]³; a constant
/// column maps to 0.5.
pub fn embedding_to_rgb(e: &SpectralEmbedding) -> Result<Vec<[f64; 3]>, SpectralError> {
    if e.dimension() != 3 {
        return Err(SpectralError::WrongDimension(e.dimension()));
    }
    let n = e.n();
    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for m in 0..n {
        for (c, r) in ranges.iter_mut().enumerate() {
            let x = e.coords[(m, c)];
            r.0 = r.0.min(x);
            r.1 = r.1.max(x);
        }
    }
    Ok((0..n)
        .map(|m| {
            let mut rgb = [0.0; 3];
            for c in 0..3 {
                let (lo, hi) = ranges[c];
                rgb[c] = if hi > lo {
                    ((e.coords[(m, c)] - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                };
            }
            rgb
        })
        .collect())
}
