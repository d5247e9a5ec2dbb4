//! Alternative routes to the same scores (dual, primal, spectral) and the
//! orthogonal-score variant.

use nalgebra::{DMatrix, DVector};

use super::{check_lambda, check_target, softmax};
use crate::error::{MixError, Result};
use crate::kernels::{Kernel, KernelSet, PSD_TOLERANCE};
use crate::linalg::{symmetric_eigen, ShiftedSpd};

/// Single-modality dual score `K (K + λI)^{-1} y`.
pub fn unimodal_score(kern: &Kernel, lambda: f64, target: &DVector<f64>) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if target.len() != kern.order() {
        return Err(MixError::validation("target length does not match kernel order"));
    }
    let system = ShiftedSpd::new(kern.values(), lambda)?;
    Ok(kern.values() * system.solve(target))
}

/// Primal ridge form `X (XᵀX + λI_d)^{-1} Xᵀ y` on the k×d centroid matrix.
pub fn primal_score(centroids: &DMatrix<f64>, lambda: f64, target: &DVector<f64>) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if target.len() != centroids.nrows() {
        return Err(MixError::validation("target length does not match centroid rows"));
    }
    let covariance = centroids.transpose() * centroids;
    let system = ShiftedSpd::new(&covariance, lambda)?;
    let w = system.solve(&(centroids.transpose() * target));
    Ok(centroids * w)
}

/// Scores expressed in the eigenbasis of `K_MM`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScores {
    /// Descending; roundoff-level eigenvalues are reported as exactly 0.
    pub eigenvalues: DVector<f64>,
    /// σ_j / (σ_j + λ).
    pub filter: DVector<f64>,
    /// u_jᵀ δ.
    pub projections: DVector<f64>,
    /// Columns u_j.
    pub eigenvectors: DMatrix<f64>,
    /// S_i = Σ_j filter_j · projection_j · (u_j)_i.
    pub scores_total: DVector<f64>,
    /// Per-modality split `K^[v] U (Σ + λI)^{-1} Uᵀ δ`, when modality kernels
    /// are supplied.
    pub per_modality: Option<Vec<DVector<f64>>>,
}

pub fn spectral_score(
    kmm: &Kernel,
    delta: &DVector<f64>,
    lambda: f64,
    modality_kernels: Option<&[Kernel]>,
) -> Result<SpectralScores> {
    check_lambda(lambda)?;
    check_target(delta, kmm.order())?;
    let k = kmm.order();
    let eig = symmetric_eigen(kmm.values())?;
    let trace = kmm.trace().abs();
    let sigma_max = eig.values.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * trace.max(f64::MIN_POSITIVE) {
        return Err(MixError::validation(format!(
            "multimodal kernel is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    let floor = (k as f64) * f64::EPSILON * sigma_max;
    let eigenvalues = eig.values.map(|s| if s <= floor { 0.0 } else { s });
    let filter = eigenvalues.map(|s| s / (s + lambda));
    let projections = eig.vectors.transpose() * delta;
    let scores_total = &eig.vectors * filter.component_mul(&projections);

    let per_modality = match modality_kernels {
        None => None,
        Some(kernels) => {
            let inv_shift = eigenvalues.map(|s| 1.0 / (s + lambda));
            let alpha = &eig.vectors * inv_shift.component_mul(&projections);
            let parts = kernels
                .iter()
                .map(|kv| {
                    if kv.order() != k {
                        Err(MixError::validation("modality kernel order does not match K_MM"))
                    } else {
                        Ok(kv.values() * &alpha)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Some(parts)
        }
    };

    Ok(SpectralScores {
        eigenvalues,
        filter,
        projections,
        eigenvectors: eig.vectors,
        scores_total,
        per_modality,
    })
}

/// Orthogonal score `S_j^[v] = δ_j [K^[v] (K_MM + λI)^{-1}]_jj`, one vector
/// per modality. `delta` holds the per-domain modality counts.
pub fn orthogonal_score(kernels: &KernelSet, delta: &DVector<f64>, lambda: f64) -> Result<Vec<DVector<f64>>> {
    check_lambda(lambda)?;
    check_target(delta, kernels.order())?;
    let k = kernels.order();
    let inverse = ShiftedSpd::new(kernels.multimodal.values(), lambda)?.inverse();
    Ok(kernels
        .per_modality
        .iter()
        .map(|kv| {
            let kv = kv.values();
            DVector::from_fn(k, |j, _| {
                let diag: f64 = (0..k).map(|p| kv[(j, p)] * inverse[(p, j)]).sum();
                delta[j] * diag
            })
        })
        .collect())
}

/// Softmax of the summed orthogonal scores.
pub fn orthogonal_weights(kernels: &KernelSet, delta: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let parts = orthogonal_score(kernels, delta, lambda)?;
    Ok(softmax(&super::aggregate(&parts)?, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Normalization;

    fn ones(k: usize) -> DVector<f64> {
        DVector::from_element(k, 1.0)
    }

    #[test]
    fn unimodal_identity_shrinkage() {
        let s = unimodal_score(&Kernel::identity(3), 1.0, &ones(3)).unwrap();
        assert!((s - ones(3) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn unimodal_full_shrinkage() {
        let x = DMatrix::from_row_slice(3, 2, &[0.6, 0.1, -0.2, 0.5, 0.3, 0.3]);
        let s = unimodal_score(&Kernel::gram(&x), 1e12, &ones(3)).unwrap();
        assert!(s.amax() <= 1e-10);
    }

    #[test]
    fn primal_identity() {
        let s = primal_score(&DMatrix::identity(2, 2), 1.0, &ones(2)).unwrap();
        assert!((s - ones(2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn primal_zero_row_scores_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, -1.0, 0.5]);
        let s = primal_score(&x, 1.0, &ones(3)).unwrap();
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn spectral_identity() {
        let s = spectral_score(&Kernel::identity(3), &ones(3), 1.0, None).unwrap();
        assert!((s.scores_total - ones(3) * 0.5).amax() < 1e-15);
        assert!(s.filter.iter().all(|&f| (f - 0.5).abs() < 1e-15));
    }

    #[test]
    fn spectral_small_lambda_passes_target() {
        let kmm = Kernel::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let delta = DVector::from_column_slice(&[2.0, 1.0]);
        let s = spectral_score(&kmm, &delta, 1e-9, None).unwrap();
        assert!(((&s.scores_total - &delta).norm() / delta.norm()) < 1e-6);
    }

    #[test]
    fn spectral_rank_deficient_reports_zero() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let s = spectral_score(&Kernel::gram(&x), &ones(3), 1.0, None).unwrap();
        assert_eq!(s.eigenvalues[1], 0.0);
        assert_eq!(s.eigenvalues[2], 0.0);
        assert_eq!(s.filter[1], 0.0);
        assert_eq!(s.filter[2], 0.0);
    }

    #[test]
    fn orthogonal_identity_is_half() {
        let ks = KernelSet::from_kernels(vec![Kernel::identity(4)], Normalization::None).unwrap();
        let s = orthogonal_score(&ks, &ones(4), 1.0).unwrap();
        assert!((&s[0] - ones(4) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn orthogonal_missing_row_is_zero() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.4, 0.7]);
        let b = DMatrix::from_row_slice(3, 1, &[0.5, 1.0, 0.2]);
        let ks = KernelSet::from_kernels(vec![Kernel::gram(&a), Kernel::gram(&b)], Normalization::None).unwrap();
        let delta = DVector::from_column_slice(&[2.0, 1.0, 2.0]);
        let s = orthogonal_score(&ks, &delta, 1.0).unwrap();
        assert_eq!(s[0][1], 0.0);
        assert!(s[1][1] > 0.0);
    }
}
