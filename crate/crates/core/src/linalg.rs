//! Dense symmetric linear algebra used by the scoring routines.
//!
//! The systems solved here are small (k domains, usually well under a few
//! thousand) and symmetric positive definite, so a plain Cholesky
//! factorization is all that is needed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MixError, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factor a symmetric matrix. Only the lower triangle of `a` is read.
    /// Returns `None` on a non-positive (or non-finite) pivot.
    pub fn factor(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = (&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let s = a[(i, j)] - dot;
                if i == j {
                    if !s.is_finite() || s <= 0.0 {
                        return None;
                    }
                    lower[i * n + i] = s.sqrt();
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
        Some(Cholesky { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length does not match factor order");
        let l = &self.lower;
        // L y = b
        let mut y = b.clone();
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / l[i * n + i];
        }
        // Lᵀ x = y, sweeping rows of L from the bottom
        for i in (0..n).rev() {
            let xi = y[i] / l[i * n + i];
            y[i] = xi;
            let row = &l[i * n..i * n + i];
            for (p, lip) in row.iter().enumerate() {
                y[p] -= lip * xi;
            }
        }
        y
    }

    /// Explicit inverse, column by column.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut inv = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        inv
    }
}

/// `A + shift·I` for a symmetric `A`, factored once and reused for every
/// right-hand side. Falls back to one retry with a tiny diagonal jitter when
/// roundoff breaks positive definiteness.
#[derive(Debug, Clone)]
pub struct ShiftedSpd {
    matrix: DMatrix<f64>,
    factor: Cholesky,
    jitter: f64,
}

/// Relative jitter added to the diagonal on the single factorization retry.
pub const JITTER_SCALE: f64 = 1e-10;

impl ShiftedSpd {
    pub fn new(a: &DMatrix<f64>, shift: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(MixError::validation(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut matrix = symmetrized(a);
        for i in 0..n {
            matrix[(i, i)] += shift;
        }
        if let Some(factor) = Cholesky::factor(&matrix) {
            return Ok(ShiftedSpd {
                matrix,
                factor,
                jitter: 0.0,
            });
        }
        let jitter = JITTER_SCALE * matrix.trace().abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            matrix[(i, i)] += jitter;
        }
        match Cholesky::factor(&matrix) {
            Some(factor) => {
                log::warn!("cholesky needed diagonal jitter {jitter:e}");
                Ok(ShiftedSpd { matrix, factor, jitter })
            }
            None => Err(MixError::numerical(
                "cholesky factorization failed after jitter; kernel is not positive semidefinite",
            )),
        }
    }

    /// Solution of the shifted system with one step of iterative refinement.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.factor.solve(rhs);
        let r = rhs - &self.matrix * &x;
        x += self.factor.solve(&r);
        x
    }

    pub fn residual_norm(&self, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
        (&self.matrix * x - rhs).norm()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrized(&self.factor.inverse())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Ratio of the extreme eigenvalues of the (shifted) matrix. The largest
    /// comes from power iteration, the smallest from inverse iteration on the
    /// existing factor.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.matrix.nrows();
        if n == 0 {
            return 1.0;
        }
        let largest = power_iteration(n, |v| &self.matrix * v);
        let inv_smallest = power_iteration(n, |v| self.factor.solve(v));
        if inv_smallest > 0.0 {
            largest * inv_smallest
        } else {
            f64::INFINITY
        }
    }
}

pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOLERANCE: f64 = 1e-6;

/// Dominant eigenvalue magnitude of a symmetric operator by power iteration,
/// started from a fixed non-degenerate vector so results are reproducible.
fn power_iteration<F>(n: usize, apply: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = apply(&v);
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let converged = (rayleigh - estimate).abs() <= POWER_TOLERANCE * rayleigh.abs();
        estimate = rayleigh;
        if converged {
            break;
        }
    }
    estimate
}

pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenpairs ordered by
/// descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are the orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SortedEigen> {
    if !a.is_square() {
        return Err(MixError::validation("eigendecomposition needs a square matrix"));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(symmetrized(a), f64::EPSILON, 0)
        .ok_or_else(|| MixError::numerical("symmetric eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SortedEigen { values, vectors })
}
