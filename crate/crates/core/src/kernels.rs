//! Linear domain-affinity kernels per modality and their coupled sum.

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};
use crate::linalg::{symmetric_eigen, symmetrized};
use crate::manifest::DomainEmbeddingSet;

/// Allowed negative eigenvalue, relative to the trace.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Allowed asymmetry for kernels supplied from outside.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    UnitTrace,
}

impl FromStr for Normalization {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "unit_trace" | "unit-trace" => Ok(Normalization::UnitTrace),
            other => Err(MixError::validation(format!(
                "unknown normalization '{other}' (expected none or unit_trace)"
            ))),
        }
    }
}

/// Symmetric k×k kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    values: DMatrix<f64>,
}

impl Kernel {
    /// Wrap an externally supplied matrix, checking symmetry and (up to
    /// tolerance) positive semidefiniteness.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(MixError::validation(format!(
                "kernel must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(MixError::validation("kernel has a non-finite entry"));
        }
        let asym = (&values - values.transpose()).abs().max();
        if asym > SYMMETRY_TOLERANCE * values.abs().max().max(1.0) {
            return Err(MixError::validation(format!(
                "kernel is not symmetric (max deviation {asym:e})"
            )));
        }
        let kernel = Kernel::from_symmetrized(values);
        if !kernel.is_psd()? {
            return Err(MixError::validation("kernel is not positive semidefinite"));
        }
        Ok(kernel)
    }

    /// Symmetrize without further checks. Gram matrices land here.
    pub(crate) fn from_symmetrized(values: DMatrix<f64>) -> Self {
        Kernel {
            values: symmetrized(&values),
        }
    }

    pub fn zeros(k: usize) -> Self {
        Kernel {
            values: DMatrix::zeros(k, k),
        }
    }

    pub fn identity(k: usize) -> Self {
        Kernel {
            values: DMatrix::identity(k, k),
        }
    }

    /// Gram matrix `X Xᵀ` of the rows of `x`.
    pub fn gram(x: &DMatrix<f64>) -> Self {
        Kernel::from_symmetrized(x * x.transpose())
    }

    pub fn order(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Kernel {
            values: &self.values * c,
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        if self.order() == 0 {
            return Ok(0.0);
        }
        let eig = symmetric_eigen(&self.values)?;
        Ok(eig.values[self.order() - 1])
    }

    pub fn is_psd(&self) -> Result<bool> {
        let floor = -PSD_TOLERANCE * self.trace().abs().max(f64::MIN_POSITIVE);
        Ok(self.min_eigenvalue()? >= floor)
    }
}

/// `K^[v]_ij = ⟨x_i^[v], x_j^[v]⟩`.
pub fn modality_kernel(emb: &DomainEmbeddingSet, v: usize) -> Result<Kernel> {
    if v >= emb.modality_count() {
        return Err(MixError::validation(format!(
            "modality index {v} out of range for {} modalities",
            emb.modality_count()
        )));
    }
    Ok(Kernel::gram(emb.centroids(v)))
}

/// Elementwise sum of kernels of equal order.
pub fn multimodal_kernel(kernels: &[Kernel]) -> Result<Kernel> {
    let first = kernels
        .first()
        .ok_or_else(|| MixError::validation("multimodal kernel needs at least one modality kernel"))?;
    let k = first.order();
    let mut sum = DMatrix::zeros(k, k);
    for kern in kernels {
        if kern.order() != k {
            return Err(MixError::validation(format!(
                "kernel order mismatch: {} vs {k}",
                kern.order()
            )));
        }
        sum += &kern.values;
    }
    Ok(Kernel { values: sum })
}

pub fn unit_trace_normalize(kern: &Kernel) -> Result<Kernel> {
    let trace = kern.trace();
    if trace.is_nan() || trace <= 0.0 {
        return Err(MixError::validation(format!(
            "cannot normalize a kernel with nonpositive trace ({trace})"
        )));
    }
    Ok(kern.scaled(1.0 / trace))
}

/// Per-modality kernels plus their coupled sum `K_MM`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub per_modality: Vec<Kernel>,
    pub multimodal: Kernel,
    pub normalization: Normalization,
}

impl KernelSet {
    pub fn from_kernels(per_modality: Vec<Kernel>, normalization: Normalization) -> Result<Self> {
        let per_modality = match normalization {
            Normalization::None => per_modality,
            Normalization::UnitTrace => per_modality.iter().map(unit_trace_normalize).collect::<Result<_>>()?,
        };
        let multimodal = multimodal_kernel(&per_modality)?;
        Ok(KernelSet {
            per_modality,
            multimodal,
            normalization,
        })
    }

    pub fn build(emb: &DomainEmbeddingSet, normalization: Normalization) -> Result<Self> {
        let per_modality = (0..emb.modality_count())
            .into_par_iter()
            .map(|v| modality_kernel(emb, v))
            .collect::<Result<Vec<_>>>()?;
        KernelSet::from_kernels(per_modality, normalization)
    }

    pub fn order(&self) -> usize {
        self.multimodal.order()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], present: &[bool]) -> DomainEmbeddingSet {
        let k = rows.len();
        let d = rows[0].len();
        DomainEmbeddingSet::new(
            (0..k).map(|i| format!("d{i}")).collect(),
            vec!["m".into()],
            vec![DMatrix::from_fn(k, d, |i, j| rows[i][j])],
            vec![present.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn orthonormal_centroids_give_identity() {
        let emb = set(&[&[1.0, 0.0], &[0.0, 1.0]], &[true, true]);
        assert_eq!(modality_kernel(&emb, 0).unwrap(), Kernel::identity(2));
    }

    #[test]
    fn missing_domain_zero_row_and_column() {
        // second domain needs some other modality to be valid
        let emb = DomainEmbeddingSet::new(
            vec!["a".into(), "b".into()],
            vec!["m".into(), "n".into()],
            vec![DMatrix::from_element(2, 2, 0.5), DMatrix::from_element(2, 1, 1.0)],
            vec![vec![true, false], vec![true, true]],
        )
        .unwrap();
        let k = modality_kernel(&emb, 0).unwrap();
        assert!(k.values().row(1).iter().all(|&x| x == 0.0));
        assert!(k.values().column(1).iter().all(|&x| x == 0.0));
        assert!(modality_kernel(&emb, 2).is_err());
    }

    #[test]
    fn sum_of_identities() {
        let k = multimodal_kernel(&[Kernel::identity(2), Kernel::identity(2)]).unwrap();
        assert_eq!(k.values(), &(DMatrix::identity(2, 2) * 2.0));
    }

    #[test]
    fn additive_identity() {
        let emb = set(&[&[1.0, 2.0], &[0.5, -1.0]], &[true, true]);
        let kern = modality_kernel(&emb, 0).unwrap();
        assert_eq!(multimodal_kernel(&[kern.clone(), Kernel::zeros(2)]).unwrap(), kern);
    }

    #[test]
    fn order_mismatch() {
        assert!(multimodal_kernel(&[Kernel::identity(2), Kernel::identity(3)]).is_err());
        assert!(multimodal_kernel(&[]).is_err());
    }

    #[test]
    fn unit_trace_cases() {
        let k = unit_trace_normalize(&Kernel::identity(2).scaled(2.0)).unwrap();
        assert_eq!(k.values(), &(DMatrix::identity(2, 2) * 0.5));

        let fixed = Kernel::from_matrix(DMatrix::from_row_slice(2, 2, &[0.25, 0.1, 0.1, 0.75])).unwrap();
        let again = unit_trace_normalize(&fixed).unwrap();
        assert!((again.values() - fixed.values()).abs().max() <= 1e-15);

        let err = unit_trace_normalize(&Kernel::zeros(3)).unwrap_err();
        assert_eq!(err.category(), crate::ErrorCategory::Validation);
    }

    #[test]
    fn from_matrix_rejects_bad_input() {
        assert!(Kernel::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(Kernel::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(Kernel::from_matrix(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn kernel_set_sum_matches_after_normalization() {
        let emb = DomainEmbeddingSet::new(
            vec!["a".into(), "b".into()],
            vec!["m".into(), "n".into()],
            vec![
                DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 1.0, 1.0]),
                DMatrix::from_row_slice(2, 1, &[0.2, 0.1]),
            ],
            vec![vec![true, true], vec![true, true]],
        )
        .unwrap();
        let ks = KernelSet::build(&emb, Normalization::UnitTrace).unwrap();
        for kern in &ks.per_modality {
            assert!((kern.trace() - 1.0).abs() < 1e-12);
        }
        let sum = &ks.per_modality[0].values + &ks.per_modality[1].values;
        assert!((sum - ks.multimodal.values()).abs().max() <= 1e-12);
    }
}
