//! Path-based entry points used by language bindings.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use madmix::api::{compute_plan, compute_weights};
use madmix::sampling::weights_checksum;
use madmix::{Aggregation, ErrorCategory, Normalization, SamplingPlan};
use nalgebra::DVector;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_domain/manifest.json")
}

#[test]
fn weights_feed_a_plan_with_matching_marginals() {
    let report = compute_weights(fixture(), 1.0, Aggregation::Equal, Normalization::None).unwrap();
    let plan = compute_plan(fixture(), &report.weights, 7).unwrap();
    assert_eq!(plan.entries.len(), 3);
    for ((name, w), (domain, m)) in report.weights.iter().zip(plan.domain_marginals()) {
        assert_eq!(name, &domain);
        assert!((w - m).abs() <= 1e-12);
    }
    // sizes 3 and 1 split the first domain 3:1
    assert!((plan.entries[0].p - 0.75 * report.weights["first"]).abs() <= 1e-15);
    let ordered = DVector::from_iterator(2, report.weights.values().copied());
    assert_eq!(plan.weights_checksum, weights_checksum(&ordered));
    assert_eq!(SamplingPlan::from_jsonl(&plan.to_jsonl(None)).unwrap(), plan);
}

#[test]
fn plan_weights_are_matched_by_name_not_position() {
    let mut reversed = IndexMap::new();
    reversed.insert("second".to_string(), 0.4);
    reversed.insert("first".to_string(), 0.6);
    let plan = compute_plan(fixture(), &reversed, 0).unwrap();
    let marginals = plan.domain_marginals();
    assert_eq!(marginals[0].0, "first");
    assert!((marginals[0].1 - 0.6).abs() <= 1e-12);
}

#[test]
fn plan_rejects_unknown_or_missing_domains() {
    let mut weights = IndexMap::new();
    weights.insert("first".to_string(), 0.5);
    weights.insert("elsewhere".to_string(), 0.5);
    let err = compute_plan(fixture(), &weights, 0).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Validation);
    assert!(err.to_string().contains("second"));

    weights.shift_remove("elsewhere");
    assert_eq!(
        compute_plan(fixture(), &weights, 0).unwrap_err().category(),
        ErrorCategory::Validation
    );
}

#[test]
fn weights_errors_carry_categories() {
    let missing = compute_weights("/no/such/manifest.json", 1.0, Aggregation::Equal, Normalization::None).unwrap_err();
    assert_eq!(missing.category(), ErrorCategory::Io);
    assert!(missing.to_string().contains("/no/such/manifest.json"));
    let bad_lambda = compute_weights(fixture(), -1.0, Aggregation::Equal, Normalization::None).unwrap_err();
    assert_eq!(bad_lambda.category(), ErrorCategory::Validation);
}
