use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use super::baselines::{baseline_avg, baseline_single_modality, baseline_uniform};
use super::{madmix, orthogonal_weights, MixtureConfig};
use crate::error::{MixError, Result};
use crate::kernels::KernelSet;
use crate::manifest::{DomainEmbeddingSet, FUSED_MODALITY};

/// A weighting rule selectable from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Uniform,
    Madmix,
    Single(String),
    Avg,
    Fused,
    Orthogonal,
}

pub const VALID_METHODS: &str = "uniform, madmix, single:<modality>, avg, fused, orthogonal";

impl FromStr for Method {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform" => Ok(Method::Uniform),
            "madmix" => Ok(Method::Madmix),
            "avg" => Ok(Method::Avg),
            "fused" => Ok(Method::Fused),
            "orthogonal" => Ok(Method::Orthogonal),
            _ => match s.strip_prefix("single:") {
                Some(m) if !m.is_empty() => Ok(Method::Single(m.to_string())),
                _ => Err(MixError::validation(format!(
                    "unknown method '{s}'; valid methods: {VALID_METHODS}"
                ))),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Uniform => f.write_str("uniform"),
            Method::Madmix => f.write_str("madmix"),
            Method::Single(m) => write!(f, "single:{m}"),
            Method::Avg => f.write_str("avg"),
            Method::Fused => f.write_str("fused"),
            Method::Orthogonal => f.write_str("orthogonal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodWeights {
    pub method: Method,
    pub weights: DVector<f64>,
}

impl Method {
    /// Domain weights for this rule. `emb` is the full embedding set,
    /// including the fused pseudo-modality when the manifest supplies one.
    pub fn weights(&self, emb: &DomainEmbeddingSet, cfg: &MixtureConfig) -> Result<DVector<f64>> {
        cfg.validate()?;
        match self {
            Method::Uniform => baseline_uniform(emb.k()),
            Method::Madmix => Ok(madmix(&emb.scoring_view()?, cfg)?.weights),
            Method::Single(name) => {
                let v = emb.modality_index(name).ok_or_else(|| {
                    MixError::validation(format!(
                        "unknown modality '{name}' (available: {})",
                        emb.modality_names().join(", ")
                    ))
                })?;
                baseline_single_modality(emb, v, cfg.lambda, cfg.normalization)
            }
            Method::Fused => {
                let v = emb.modality_index(FUSED_MODALITY).ok_or_else(|| {
                    MixError::validation(format!(
                        "the fused baseline needs a '{FUSED_MODALITY}' modality in the manifest"
                    ))
                })?;
                baseline_single_modality(emb, v, cfg.lambda, cfg.normalization)
            }
            Method::Avg => {
                let per_modality = (0..emb.modality_count())
                    .filter(|&v| emb.modality_names()[v] != FUSED_MODALITY)
                    .map(|v| baseline_single_modality(emb, v, cfg.lambda, cfg.normalization))
                    .collect::<Result<Vec<_>>>()?;
                baseline_avg(&per_modality)
            }
            Method::Orthogonal => {
                let view = emb.scoring_view()?;
                let kernels = KernelSet::build(&view, cfg.normalization)?;
                let delta = cfg.target.clone().unwrap_or_else(|| view.modality_counts());
                orthogonal_weights(&kernels, &delta, cfg.lambda)
            }
        }
    }
}

/// Evaluate several methods on the same embeddings.
pub fn compare(emb: &DomainEmbeddingSet, cfg: &MixtureConfig, methods: &[Method]) -> Result<Vec<MethodWeights>> {
    methods
        .iter()
        .map(|m| {
            Ok(MethodWeights {
                method: m.clone(),
                weights: m.weights(emb, cfg)?,
            })
        })
        .collect()
}
