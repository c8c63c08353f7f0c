//! Compressed sparse rows plus a thin wrapper over faer's sparse Cholesky.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::mesh::Vec3;

/// Dense eigen-decomposition is only attempted below this size when a
/// factorization fails.
const INERTIA_LIMIT: usize = 1500;

const SINGULARITY_PROBE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; explicit zeros are kept so the sparsity
    /// pattern only depends on which entries were pushed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        CsrMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_scalars(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Applies the matrix to each coordinate of a vertex field.
    pub fn mul_vec3(&self, x: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).fold(Vec3::zeros(), |acc, (c, v)| acc + x[c] * v))
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.cols,
            self.rows,
            self.triplets().map(|(r, c, v)| (c, r, v)).collect(),
        )
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.cols, other.rows);
        let mut triplets = Vec::new();
        let mut accum = vec![0.0; other.cols];
        let mut touched = vec![false; other.cols];
        let mut pattern = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        pattern.push(c);
                    }
                    accum[c] += a * b;
                }
            }
            for &c in &pattern {
                triplets.push((r, c, accum[c]));
                accum[c] = 0.0;
                touched[c] = false;
            }
            pattern.clear();
        }
        CsrMatrix::from_triplets(self.rows, other.cols, triplets)
    }

    /// `alpha * self + beta * other` for equally shaped matrices.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let triplets = self
            .triplets()
            .map(|(r, c, v)| (r, c, alpha * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, beta * v)))
            .collect();
        CsrMatrix::from_triplets(self.rows, self.cols, triplets)
    }

    /// Scales row `r` by `scale[r]`.
    pub fn scale_rows(&self, scale: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (r, &sr) in scale.iter().enumerate().take(self.rows) {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.values[k] *= sr;
            }
        }
        out
    }

    /// Rows `rows` and columns `cols` of `self`, renumbered in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.cols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    triplets.push((new_r, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), triplets)
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Counts of positive, negative and (numerically) zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl std::fmt::Display for Inertia {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(+{}, -{}, 0×{})", self.positive, self.negative, self.zero)
    }
}

pub fn inertia(matrix: &CsrMatrix) -> Inertia {
    let eig = SymmetricEigen::new(matrix.to_dense()).eigenvalues;
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    Inertia {
        positive: eig.iter().filter(|&&v| v > tol).count(),
        negative: eig.iter().filter(|&&v| v < -tol).count(),
        zero: eig.iter().filter(|&&v| v.abs() <= tol).count(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite (failed at pivot {pivot:?}, inertia {})",
        .inertia.map(|i| i.to_string()).unwrap_or_else(|| "not computed".into()))]
    NotPositiveDefinite {
        pivot: Option<usize>,
        inertia: Option<Inertia>,
    },
    #[error("sparse factorization failed: {0}")]
    Backend(String),
}

/// Sparse LLᵀ factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    size: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl Cholesky {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self, FactorError> {
        assert_eq!(matrix.rows, matrix.cols);
        let n = matrix.rows;
        if n == 0 {
            return Ok(Cholesky { size: 0, llt: None });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = matrix
            .triplets()
            .filter(|&(r, c, _)| r >= c)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| FactorError::Backend(format!("{e:?}")))?;
        match csc.sp_cholesky(faer::Side::Lower) {
            Ok(llt) => {
                let chol = Cholesky {
                    size: n,
                    llt: Some(llt),
                };
                if chol.probe_error(matrix) > SINGULARITY_PROBE_TOL {
                    // Rounding let a (numerically) zero pivot through.
                    return Err(FactorError::NotPositiveDefinite {
                        pivot: None,
                        inertia: (n <= INERTIA_LIMIT).then(|| inertia(matrix)),
                    });
                }
                Ok(chol)
            }
            Err(faer::sparse::linalg::LltError::Numeric(
                faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index },
            )) => Err(FactorError::NotPositiveDefinite {
                pivot: Some(index),
                inertia: (n <= INERTIA_LIMIT).then(|| inertia(matrix)),
            }),
            Err(e) => Err(FactorError::Backend(format!("{e:?}"))),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Relative error of recovering a fixed pseudo-random vector `v` from
    /// `A v`. Near-singular factors amplify rounding in the null space.
    fn probe_error(&self, matrix: &CsrMatrix) -> f64 {
        let v: Vec<Vec3> = (0..self.size)
            .map(|i| {
                let t = i as f64;
                Vec3::new((1.3 * t + 0.7).sin(), (0.37 * t + 2.1).cos(), (2.9 * t).sin() + 0.5)
            })
            .collect();
        let mut x = matrix.mul_vec3(&v);
        self.solve_vec3(&mut x);
        let err: f64 = x.iter().zip(&v).map(|(a, b)| (a - b).norm_squared()).sum();
        let norm: f64 = v.iter().map(|a| a.norm_squared()).sum();
        (err / norm).sqrt()
    }

    /// Solves in place for every coordinate of a vertex field.
    pub fn solve_vec3(&self, rhs: &mut [Vec3]) {
        assert_eq!(rhs.len(), self.size);
        let Some(llt) = &self.llt else {
            return;
        };
        let mut b = Mat::<f64>::from_fn(self.size, 3, |i, j| rhs[i][j]);
        llt.solve_in_place(b.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = Vec3::new(b[(i, 0)], b[(i, 1)], b[(i, 2)]);
        }
    }
}
