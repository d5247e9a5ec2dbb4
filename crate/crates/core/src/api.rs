//! Path-based entry points shared by the CLI and language bindings, so both
//! go through one ingestion and scoring path.

use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DVector;

use crate::error::{MixError, Result};
use crate::kernels::Normalization;
use crate::manifest::{
    build_domain_embeddings_with, load_manifest, Aggregation, DomainEmbeddingSet, Manifest, Preprocessing,
};
use crate::mixer::{madmix, MixtureConfig, MixtureReport, MixtureResult};
use crate::sampling::{build_plan, SamplingPlan};

/// A validated manifest together with its aggregated embeddings.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub manifest: Manifest,
    /// All declared modalities, including the fused pseudo-modality.
    pub embeddings: DomainEmbeddingSet,
}

impl LoadedInputs {
    pub fn load(path: impl AsRef<Path>, aggregation: Aggregation, prep: Preprocessing) -> Result<Self> {
        let manifest = load_manifest(path)?;
        let embeddings = build_domain_embeddings_with(&manifest, aggregation, prep)?;
        Ok(LoadedInputs { manifest, embeddings })
    }

    /// The modalities that enter the coupled score.
    pub fn scoring(&self) -> Result<DomainEmbeddingSet> {
        self.embeddings.scoring_view()
    }

    pub fn score(&self, cfg: &MixtureConfig) -> Result<MixtureResult> {
        madmix(&self.scoring()?, cfg)
    }
}

pub fn compute_weights(
    manifest_path: impl AsRef<Path>,
    lambda: f64,
    aggregation: Aggregation,
    normalization: Normalization,
) -> Result<MixtureReport> {
    let cfg = MixtureConfig {
        lambda,
        aggregation,
        normalization,
        ..MixtureConfig::default()
    };
    cfg.validate()?;
    let inputs = LoadedInputs::load(manifest_path, aggregation, Preprocessing::default())?;
    Ok(inputs.score(&cfg)?.report())
}

/// Order a domain → weight mapping by the manifest's domain order.
pub fn weights_in_manifest_order(manifest: &Manifest, weights: &IndexMap<String, f64>) -> Result<DVector<f64>> {
    if weights.len() != manifest.domain_count() {
        return Err(MixError::validation(format!(
            "{} weights supplied for {} domains",
            weights.len(),
            manifest.domain_count()
        )));
    }
    let ordered = manifest
        .domains
        .iter()
        .map(|d| {
            weights
                .get(&d.name)
                .copied()
                .ok_or_else(|| MixError::validation(format!("no weight supplied for domain '{}'", d.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(ordered))
}

pub fn compute_plan(
    manifest_path: impl AsRef<Path>,
    weights: &IndexMap<String, f64>,
    seed: u64,
) -> Result<SamplingPlan> {
    let manifest = load_manifest(manifest_path)?;
    build_plan(&weights_in_manifest_order(&manifest, weights)?, &manifest, seed)
}
