use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_embedding_file, EmbeddingMatrix, Manifest, FUSED_MODALITY};
use crate::error::{MixError, Result};

/// How dataset-level centroids combine into a domain centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Equal,
    SizeWeighted,
}

impl FromStr for Aggregation {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(Aggregation::Equal),
            "size_weighted" | "size-weighted" => Ok(Aggregation::SizeWeighted),
            other => Err(MixError::validation(format!(
                "unknown aggregation '{other}' (expected equal or size_weighted)"
            ))),
        }
    }
}

/// Optional embedding preprocessing. Both steps are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Preprocessing {
    /// Scale every sample embedding to unit L2 norm before averaging.
    pub l2_normalize: bool,
    /// Subtract, per modality, the mean of the present domain centroids.
    /// Absent modalities stay exactly zero.
    pub center: bool,
}

/// Arithmetic mean of the rows, in double precision.
pub fn dataset_centroid(m: &EmbeddingMatrix) -> DVector<f64> {
    let values = m.values();
    let mut sum = DVector::zeros(m.dim());
    for row in values.row_iter() {
        for (acc, v) in sum.iter_mut().zip(row.iter()) {
            *acc += v;
        }
    }
    sum / m.rows() as f64
}

pub fn domain_centroid(centroids: &[(DVector<f64>, u64)], strategy: Aggregation) -> Result<DVector<f64>> {
    let (first, _) = centroids
        .first()
        .ok_or_else(|| MixError::validation("domain centroid needs at least one dataset centroid"))?;
    let dim = first.len();
    if let Some((c, _)) = centroids.iter().find(|(c, _)| c.len() != dim) {
        return Err(MixError::validation(format!(
            "dataset centroid dimension mismatch: {} vs {dim}",
            c.len()
        )));
    }
    if centroids.iter().any(|&(_, size)| size == 0) {
        return Err(MixError::validation("dataset size must be at least 1"));
    }
    let mut acc = DVector::zeros(dim);
    let total = match strategy {
        Aggregation::Equal => {
            for (c, _) in centroids {
                acc += c;
            }
            centroids.len() as f64
        }
        Aggregation::SizeWeighted => {
            for (c, size) in centroids {
                acc.axpy(*size as f64, c, 1.0);
            }
            centroids.iter().map(|&(_, s)| s as f64).sum()
        }
    };
    Ok(acc / total)
}

/// Per-domain, per-modality centroids `x_i^[v]` with presence flags.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEmbeddingSet {
    domains: Vec<String>,
    modalities: Vec<String>,
    /// One k×d_v matrix per modality; row i is domain i's centroid.
    centroids: Vec<DMatrix<f64>>,
    /// `presence[v][i]` is δ_i^[v].
    presence: Vec<Vec<bool>>,
}

impl DomainEmbeddingSet {
    /// Assemble a set from per-modality centroid matrices. Rows of absent
    /// (domain, modality) pairs are forced to exactly zero.
    pub fn new(
        domains: Vec<String>,
        modalities: Vec<String>,
        mut centroids: Vec<DMatrix<f64>>,
        presence: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let k = domains.len();
        let v_count = modalities.len();
        if k == 0 || v_count == 0 {
            return Err(MixError::validation(
                "embedding set needs at least one domain and one modality",
            ));
        }
        if centroids.len() != v_count || presence.len() != v_count {
            return Err(MixError::validation(
                "one centroid matrix and presence row per modality expected",
            ));
        }
        for (v, (c, p)) in centroids.iter_mut().zip(&presence).enumerate() {
            if c.nrows() != k || p.len() != k {
                return Err(MixError::validation(format!(
                    "modality '{}' has {} centroid rows for {k} domains",
                    modalities[v],
                    c.nrows()
                )));
            }
            if c.ncols() == 0 {
                return Err(MixError::validation(format!(
                    "modality '{}' has dimension 0",
                    modalities[v]
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(MixError::validation(format!(
                    "modality '{}' has a non-finite centroid entry",
                    modalities[v]
                )));
            }
            for (i, &present) in p.iter().enumerate() {
                if !present {
                    c.row_mut(i).fill(0.0);
                }
            }
        }
        for (i, name) in domains.iter().enumerate() {
            if !presence.iter().any(|p| p[i]) {
                return Err(MixError::validation(format!("domain '{name}' has no present modality")));
            }
        }
        Ok(DomainEmbeddingSet {
            domains,
            modalities,
            centroids,
            presence,
        })
    }

    pub fn k(&self) -> usize {
        self.domains.len()
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domains
    }

    pub fn modality_names(&self) -> &[String] {
        &self.modalities
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m == name)
    }

    pub fn dim(&self, v: usize) -> usize {
        self.centroids[v].ncols()
    }

    /// k×d_v matrix of centroids for modality `v`.
    pub fn centroids(&self, v: usize) -> &DMatrix<f64> {
        &self.centroids[v]
    }

    pub fn centroid(&self, domain: usize, v: usize) -> DVector<f64> {
        self.centroids[v].row(domain).transpose()
    }

    pub fn is_present(&self, domain: usize, v: usize) -> bool {
        self.presence[v][domain]
    }

    pub fn presence(&self, v: usize) -> &[bool] {
        &self.presence[v]
    }

    /// δ_i = number of present modalities per domain.
    pub fn modality_counts(&self) -> DVector<f64> {
        DVector::from_fn(self.k(), |i, _| self.presence.iter().filter(|p| p[i]).count() as f64)
    }

    /// A new set restricted to the given modality indices, in that order.
    pub fn select_modalities(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&v| v >= self.modality_count()) {
            return Err(MixError::validation(format!("modality index {bad} out of range")));
        }
        DomainEmbeddingSet::new(
            self.domains.clone(),
            indices.iter().map(|&v| self.modalities[v].clone()).collect(),
            indices.iter().map(|&v| self.centroids[v].clone()).collect(),
            indices.iter().map(|&v| self.presence[v].clone()).collect(),
        )
    }

    /// The modalities that enter the coupled score, i.e. everything except
    /// the fused pseudo-modality.
    pub fn scoring_view(&self) -> Result<Self> {
        let indices: Vec<usize> = (0..self.modality_count())
            .filter(|&v| self.modalities[v] != FUSED_MODALITY)
            .collect();
        if indices.len() == self.modality_count() {
            return Ok(self.clone());
        }
        self.select_modalities(&indices)
    }

    /// Reorder domains: entry `j` of the result is domain `order[j]` here.
    pub fn permute_domains(&self, order: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
            return Err(MixError::validation("domain order must be a permutation"));
        }
        DomainEmbeddingSet::new(
            order.iter().map(|&i| self.domains[i].clone()).collect(),
            self.modalities.clone(),
            self.centroids
                .iter()
                .map(|c| DMatrix::from_fn(k, c.ncols(), |r, col| c[(order[r], col)]))
                .collect(),
            self.presence
                .iter()
                .map(|p| order.iter().map(|&i| p[i]).collect())
                .collect(),
        )
    }

    fn center(&mut self) {
        for (c, p) in self.centroids.iter_mut().zip(&self.presence) {
            let present: Vec<usize> = (0..p.len()).filter(|&i| p[i]).collect();
            let mut mean = DVector::zeros(c.ncols());
            for &i in &present {
                mean += c.row(i).transpose();
            }
            mean /= present.len() as f64;
            for &i in &present {
                let mut row = c.row_mut(i);
                row -= mean.transpose();
            }
        }
    }
}

pub fn build_domain_embeddings(manifest: &Manifest, strategy: Aggregation) -> Result<DomainEmbeddingSet> {
    build_domain_embeddings_with(manifest, strategy, Preprocessing::default())
}

struct Job {
    domain: usize,
    dataset: usize,
    modality: usize,
}

pub fn build_domain_embeddings_with(
    manifest: &Manifest,
    strategy: Aggregation,
    prep: Preprocessing,
) -> Result<DomainEmbeddingSet> {
    let mut jobs = Vec::new();
    for (i, domain) in manifest.domains.iter().enumerate() {
        for (j, ds) in domain.datasets.iter().enumerate() {
            for (v, name) in manifest.modalities.iter().enumerate() {
                if ds.embedding_files.contains_key(name) {
                    jobs.push(Job {
                        domain: i,
                        dataset: j,
                        modality: v,
                    });
                }
            }
        }
    }

    let dataset_centroids: Vec<DVector<f64>> = jobs
        .par_iter()
        .map(|job| {
            let ds = &manifest.domains[job.domain].datasets[job.dataset];
            let path = manifest.resolve(&ds.embedding_files[&manifest.modalities[job.modality]]);
            let mut m = read_embedding_file(&path)?;
            if prep.l2_normalize {
                for mut row in m.values_mut().row_iter_mut() {
                    let norm = row.norm();
                    if norm > 0.0 {
                        row /= norm;
                    }
                }
            }
            Ok(dataset_centroid(&m))
        })
        .collect::<Result<_>>()?;

    let k = manifest.domain_count();
    let v_count = manifest.modalities.len();
    let mut dims: Vec<Option<usize>> = vec![None; v_count];
    for (job, c) in jobs.iter().zip(&dataset_centroids) {
        let dim = dims[job.modality].get_or_insert(c.len());
        if *dim != c.len() {
            let domain = &manifest.domains[job.domain];
            return Err(MixError::validation(format!(
                "modality '{}' has dimension {} in dataset '{}' of domain '{}', expected {}",
                manifest.modalities[job.modality],
                c.len(),
                domain.datasets[job.dataset].name,
                domain.name,
                dim
            )));
        }
    }

    let mut centroids = Vec::with_capacity(v_count);
    let mut presence = Vec::with_capacity(v_count);
    for (v, name) in manifest.modalities.iter().enumerate() {
        let dim =
            dims[v].ok_or_else(|| MixError::validation(format!("modality '{name}' is not present in any domain")))?;
        let mut mat = DMatrix::zeros(k, dim);
        let mut present = vec![false; k];
        for (i, domain) in manifest.domains.iter().enumerate() {
            let parts: Vec<(DVector<f64>, u64)> = jobs
                .iter()
                .zip(&dataset_centroids)
                .filter(|(job, _)| job.domain == i && job.modality == v)
                .map(|(job, c)| (c.clone(), domain.datasets[job.dataset].size))
                .collect();
            if parts.is_empty() {
                continue;
            }
            present[i] = true;
            mat.set_row(i, &domain_centroid(&parts, strategy)?.transpose());
        }
        centroids.push(mat);
        presence.push(present);
    }

    let mut set = DomainEmbeddingSet::new(
        manifest.domain_names(),
        manifest.modalities.clone(),
        centroids,
        presence,
    )?;
    if prep.center {
        set.center();
    }
    Ok(set)
}
