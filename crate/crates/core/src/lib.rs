//! Multi-modal domain-mixture weights from domain embeddings.
//!
//! The pipeline reads a [`manifest::Manifest`] of domains, datasets and
//! per-modality embedding files, reduces them to per-domain centroids,
//! builds linear kernels per modality, solves one coupled ridge system
//! shared by all modalities, and softmaxes the resulting alignment scores
//! into domain weights. [`sampling`] turns the weights into a per-dataset
//! plan and a seeded draw stream.

pub mod api;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod manifest;
pub mod mixer;
pub mod sampling;

pub use error::{ErrorCategory, MixError, Result};
pub use kernels::{Kernel, KernelSet, Normalization};
pub use manifest::{
    build_domain_embeddings, load_manifest, read_embedding_file, Aggregation, DomainEmbeddingSet, EmbeddingMatrix,
    Manifest, Preprocessing,
};
pub use mixer::{madmix, Method, MixtureConfig, MixtureReport, MixtureResult};
pub use sampling::{build_plan, DrawStream, SamplingPlan};
