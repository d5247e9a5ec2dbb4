//! Coupled closed-form alignment scores and domain weights.
//!
//! Per modality `v`, the domain kernel `K^[v]` is summed into `K_MM`. The
//! shared latent variables solve `(K_MM + λI) α = δ`, where `δ_i` counts the
//! modalities present in domain `i`. The score of domain `i` for modality
//! `v` is `(K^[v] α)_i`, totals are summed over modalities, and weights are
//! the softmax of the totals.

mod baselines;
mod method;
mod variants;

use indexmap::IndexMap;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};
use crate::kernels::{Kernel, KernelSet, Normalization};
use crate::linalg::ShiftedSpd;
use crate::manifest::{Aggregation, DomainEmbeddingSet};

pub use baselines::{
    baseline_avg, baseline_avg_with_tolerance, baseline_single_modality, baseline_uniform, SIMPLEX_TOLERANCE,
};
pub use method::{compare, Method, MethodWeights, VALID_METHODS};
pub use variants::{
    orthogonal_score, orthogonal_weights, primal_score, spectral_score, unimodal_score, SpectralScores,
};

pub const DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureConfig {
    pub lambda: f64,
    pub aggregation: Aggregation,
    pub normalization: Normalization,
    /// Replaces the modality-count target δ when set.
    pub target: Option<DVector<f64>>,
    /// Softmax temperature; 1 is the plain softmax.
    pub temperature: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            lambda: DEFAULT_LAMBDA,
            aggregation: Aggregation::Equal,
            normalization: Normalization::None,
            target: None,
            temperature: 1.0,
        }
    }
}

impl MixtureConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        MixtureConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(MixError::validation("temperature must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(MixError::validation(format!("lambda must be positive (got {lambda})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// ‖(K_MM + λI)α − δ‖₂.
    pub residual: f64,
    /// Estimated condition number of K_MM + λI.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureResult {
    pub domains: Vec<String>,
    pub modalities: Vec<String>,
    pub delta: DVector<f64>,
    pub alpha: DVector<f64>,
    /// One length-k vector per modality.
    pub scores_per_modality: Vec<DVector<f64>>,
    pub scores_total: DVector<f64>,
    pub weights: DVector<f64>,
    pub config: MixtureConfig,
    pub diagnostics: Diagnostics,
}

/// JSON form of a [`MixtureResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub lambda: f64,
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub scores: IndexMap<String, Vec<f64>>,
    pub scores_total: Vec<f64>,
    pub weights: IndexMap<String, f64>,
    pub diagnostics: Diagnostics,
}

impl MixtureResult {
    pub fn report(&self) -> MixtureReport {
        MixtureReport {
            lambda: self.config.lambda,
            delta: self.delta.iter().copied().collect(),
            alpha: self.alpha.iter().copied().collect(),
            scores: self
                .modalities
                .iter()
                .cloned()
                .zip(self.scores_per_modality.iter().map(|s| s.iter().copied().collect()))
                .collect(),
            scores_total: self.scores_total.iter().copied().collect(),
            weights: self.domains.iter().cloned().zip(self.weights.iter().copied()).collect(),
            diagnostics: self.diagnostics,
        }
    }

    pub fn to_json(&self) -> String {
        self.report().to_json()
    }
}

impl MixtureReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MixError::validation(format!("malformed mixture report: {e}")))
    }
}

/// Latent variables of the coupled system and the solve residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSolution {
    pub alpha: DVector<f64>,
    pub residual: f64,
}

fn check_target(delta: &DVector<f64>, k: usize) -> Result<()> {
    if delta.len() != k {
        return Err(MixError::validation(format!(
            "target has length {} but the kernel has order {k}",
            delta.len()
        )));
    }
    if delta.iter().any(|d| !d.is_finite() || *d < 0.0) || delta.iter().all(|&d| d == 0.0) {
        return Err(MixError::validation(
            "target must be finite, nonnegative and not all zero",
        ));
    }
    Ok(())
}

/// `α = (K_MM + λI)^{-1} δ` by Cholesky.
pub fn solve_latent(kmm: &Kernel, delta: &DVector<f64>, lambda: f64) -> Result<LatentSolution> {
    check_lambda(lambda)?;
    check_target(delta, kmm.order())?;
    let system = ShiftedSpd::new(kmm.values(), lambda)?;
    let alpha = system.solve(delta);
    let residual = system.residual_norm(&alpha, delta);
    Ok(LatentSolution { alpha, residual })
}

/// `S^[v] = K^[v] α`.
pub fn modality_scores(kv: &Kernel, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if kv.order() != alpha.len() {
        return Err(MixError::validation(format!(
            "kernel order {} does not match latent length {}",
            kv.order(),
            alpha.len()
        )));
    }
    Ok(kv.values() * alpha)
}

/// Max-shifted softmax of `scores / temperature`.
pub fn softmax(scores: &DVector<f64>, temperature: f64) -> DVector<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.map(|s| ((s - max) / temperature).exp());
    let total: f64 = exp.sum();
    exp / total
}

/// Sum scores across modalities, then softmax.
pub fn aggregate_and_softmax(scores_per_modality: &[DVector<f64>]) -> Result<DVector<f64>> {
    let total = aggregate(scores_per_modality)?;
    Ok(softmax(&total, 1.0))
}

pub(crate) fn aggregate(scores_per_modality: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = scores_per_modality
        .first()
        .ok_or_else(|| MixError::validation("no modality scores to aggregate"))?;
    let mut total = DVector::zeros(first.len());
    for s in scores_per_modality {
        if s.len() != first.len() {
            return Err(MixError::validation("modality score vectors differ in length"));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(MixError::numerical("non-finite alignment score"));
        }
        total += s;
    }
    Ok(total)
}

/// Full pipeline on a prebuilt embedding set: kernels, coupled solve,
/// per-modality scores, softmax weights.
pub fn madmix(emb: &DomainEmbeddingSet, cfg: &MixtureConfig) -> Result<MixtureResult> {
    cfg.validate()?;
    let kernels = KernelSet::build(emb, cfg.normalization)?;
    madmix_with_kernels(emb, &kernels, cfg)
}

pub fn madmix_with_kernels(
    emb: &DomainEmbeddingSet,
    kernels: &KernelSet,
    cfg: &MixtureConfig,
) -> Result<MixtureResult> {
    cfg.validate()?;
    let k = emb.k();
    if kernels.order() != k || kernels.per_modality.len() != emb.modality_count() {
        return Err(MixError::validation("kernel set does not match the embedding set"));
    }
    let delta = cfg.target.clone().unwrap_or_else(|| emb.modality_counts());
    check_target(&delta, k)?;

    let system = ShiftedSpd::new(kernels.multimodal.values(), cfg.lambda)?;
    let alpha = system.solve(&delta);
    let residual = system.residual_norm(&alpha, &delta);
    let condition = system.condition_estimate();

    let scores_per_modality = kernels
        .per_modality
        .iter()
        .map(|kv| modality_scores(kv, &alpha))
        .collect::<Result<Vec<_>>>()?;
    let scores_total = aggregate(&scores_per_modality)?;
    let weights = softmax(&scores_total, cfg.temperature);
    if let Some(i) = weights.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(MixError::numerical(format!(
            "softmax weight for domain '{}' is {} (score spread too large for temperature {})",
            emb.domain_names()[i],
            weights[i],
            cfg.temperature
        )));
    }

    Ok(MixtureResult {
        domains: emb.domain_names().to_vec(),
        modalities: emb.modality_names().to_vec(),
        delta,
        alpha,
        scores_per_modality,
        scores_total,
        weights,
        config: cfg.clone(),
        diagnostics: Diagnostics { residual, condition },
    })
}

/// Run [`madmix`] once per λ. Rows follow the input order.
pub fn lambda_sweep(
    emb: &DomainEmbeddingSet,
    cfg: &MixtureConfig,
    lambdas: &[f64],
) -> Result<Vec<(f64, MixtureResult)>> {
    if lambdas.is_empty() {
        return Err(MixError::validation("lambda list is empty"));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    let kernels = KernelSet::build(emb, cfg.normalization)?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = MixtureConfig { lambda, ..cfg.clone() };
            madmix_with_kernels(emb, &kernels, &cfg).map(|r| (lambda, r))
        })
        .collect()
}
