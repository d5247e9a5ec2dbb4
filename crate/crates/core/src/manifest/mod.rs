//! Manifest loading and validation, embedding-file I/O, and aggregation of
//! raw sample embeddings into per-domain, per-modality centroids.

mod aggregate;
mod embedding_file;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};

pub use aggregate::{
    build_domain_embeddings, build_domain_embeddings_with, dataset_centroid, domain_centroid, Aggregation,
    DomainEmbeddingSet, Preprocessing,
};
pub use embedding_file::{read_embedding_file, write_embedding_file, EmbeddingMatrix, MAGIC};

/// Name of the pseudo-modality that carries fused (joint) embeddings. It is
/// only consumed by the fused baseline and never enters the coupled score.
pub const FUSED_MODALITY: &str = "fused";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub size: u64,
    /// Modality name to embedding file. Paths are stored as written; use
    /// [`Manifest::resolve`] to get the on-disk location.
    #[serde(rename = "embeddings", default)]
    pub embedding_files: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub datasets: Vec<DatasetSpec>,
}

impl DomainSpec {
    /// Total number of training samples, |D_i|.
    pub fn total_size(&self) -> u64 {
        self.datasets.iter().map(|d| d.size).sum()
    }

    /// Whether the domain carries modality `name` (a domain-level property).
    pub fn has_modality(&self, name: &str) -> bool {
        self.datasets
            .first()
            .is_some_and(|d| d.embedding_files.contains_key(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub modalities: Vec<String>,
    pub domains: Vec<DomainSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_json_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest: Manifest = serde_json::from_str(text).map_err(|source| MixError::ManifestParse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        manifest.base_dir = base_dir.into();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m == name)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(MixError::validation("manifest declares no modalities"));
        }
        if self.domains.is_empty() {
            return Err(MixError::validation("manifest declares no domains"));
        }
        let mut seen = HashSet::new();
        for m in &self.modalities {
            if !seen.insert(m.as_str()) {
                return Err(MixError::validation(format!("duplicate modality name '{m}'")));
            }
        }
        let declared: HashSet<&str> = self.modalities.iter().map(String::as_str).collect();
        let mut domain_names = HashSet::new();
        for domain in &self.domains {
            if !domain_names.insert(domain.name.as_str()) {
                return Err(MixError::validation(format!("duplicate domain name '{}'", domain.name)));
            }
            if domain.datasets.is_empty() {
                return Err(MixError::validation(format!(
                    "domain '{}' has no datasets",
                    domain.name
                )));
            }
            let mut dataset_names = HashSet::new();
            let first_keys: Vec<&String> = domain.datasets[0].embedding_files.keys().collect();
            for ds in &domain.datasets {
                if !dataset_names.insert(ds.name.as_str()) {
                    return Err(MixError::validation(format!(
                        "duplicate dataset name '{}' in domain '{}'",
                        ds.name, domain.name
                    )));
                }
                if ds.size == 0 {
                    return Err(MixError::validation(format!(
                        "dataset '{}' in domain '{}' has size 0",
                        ds.name, domain.name
                    )));
                }
                for key in ds.embedding_files.keys() {
                    if !declared.contains(key.as_str()) {
                        return Err(MixError::validation(format!(
                            "dataset '{}' in domain '{}' references undeclared modality '{key}'",
                            ds.name, domain.name
                        )));
                    }
                }
                let keys: Vec<&String> = ds.embedding_files.keys().collect();
                if keys != first_keys {
                    return Err(MixError::validation(format!(
                        "datasets in domain '{}' disagree on modalities ('{}' vs '{}')",
                        domain.name, domain.datasets[0].name, ds.name
                    )));
                }
            }
            let scoring_present = first_keys.iter().any(|k| k.as_str() != FUSED_MODALITY);
            if !scoring_present {
                return Err(MixError::validation(format!(
                    "domain '{}' has no present modality",
                    domain.name
                )));
            }
        }
        Ok(())
    }
}

/// Read and validate a manifest file. Relative embedding paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MixError::io(path, e))?;
    let mut manifest: Manifest = serde_json::from_str(&text).map_err(|source| MixError::ManifestParse {
        path: path.to_path_buf(),
        source,
    })?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate()?;
    Ok(manifest)
}
