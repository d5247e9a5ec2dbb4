use nalgebra::{DMatrix, DVector};

use super::{check_lambda, softmax, unimodal_score};
use crate::error::{MixError, Result};
use crate::kernels::{unit_trace_normalize, Kernel, Normalization};
use crate::manifest::DomainEmbeddingSet;

/// Allowed deviation of a weight vector's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

pub fn baseline_uniform(k: usize) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(MixError::validation("uniform weights need at least one domain"));
    }
    Ok(DVector::from_element(k, 1.0 / k as f64))
}

/// Weights from a single modality: domains carrying modality `v` are scored
/// against the all-ones target on their own sub-kernel and softmaxed; the
/// remaining domains get weight 0.
pub fn baseline_single_modality(
    emb: &DomainEmbeddingSet,
    v: usize,
    lambda: f64,
    normalization: Normalization,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if v >= emb.modality_count() {
        return Err(MixError::validation(format!("modality index {v} out of range")));
    }
    let present: Vec<usize> = (0..emb.k()).filter(|&i| emb.is_present(i, v)).collect();
    if present.is_empty() {
        return Err(MixError::validation(format!(
            "modality '{}' is present in no domain",
            emb.modality_names()[v]
        )));
    }
    let centroids = emb.centroids(v);
    let sub = DMatrix::from_fn(present.len(), centroids.ncols(), |r, c| centroids[(present[r], c)]);
    let mut kernel = Kernel::gram(&sub);
    if normalization == Normalization::UnitTrace {
        kernel = unit_trace_normalize(&kernel)?;
    }
    let scores = unimodal_score(&kernel, lambda, &DVector::from_element(present.len(), 1.0))?;
    let sub_weights = softmax(&scores, 1.0);
    let mut weights = DVector::zeros(emb.k());
    for (r, &i) in present.iter().enumerate() {
        weights[i] = sub_weights[r];
    }
    Ok(weights)
}

/// Arithmetic mean of per-modality weight vectors.
pub fn baseline_avg(per_modality_weights: &[DVector<f64>]) -> Result<DVector<f64>> {
    baseline_avg_with_tolerance(per_modality_weights, SIMPLEX_TOLERANCE)
}

/// As [`baseline_avg`], accepting inputs whose sums deviate from 1 by up to
/// `tolerance` (e.g. weight tables rounded for publication).
pub fn baseline_avg_with_tolerance(per_modality_weights: &[DVector<f64>], tolerance: f64) -> Result<DVector<f64>> {
    let first = per_modality_weights
        .first()
        .ok_or_else(|| MixError::validation("average needs at least one weight vector"))?;
    let k = first.len();
    let mut acc = DVector::zeros(k);
    for (idx, w) in per_modality_weights.iter().enumerate() {
        if w.len() != k {
            return Err(MixError::validation(format!(
                "weight vector {idx} has length {} instead of {k}",
                w.len()
            )));
        }
        if w.iter().any(|&p| !p.is_finite() || p < 0.0) || (w.sum() - 1.0).abs() > tolerance {
            return Err(MixError::validation(format!(
                "weight vector {idx} is not on the simplex"
            )));
        }
        acc += w;
    }
    Ok(acc / per_modality_weights.len() as f64)
}
