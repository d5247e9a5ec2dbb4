//! Hierarchical sampling plans and a reproducible draw stream.
//!
//! A domain weight `p_i` is split across the domain's datasets in proportion
//! to their sizes: `P(DS) = |DS| / |D_i| · p_i`. Draws are independent
//! categorical draws with replacement over the plan entries.
//!
//! The generator is xoshiro256** seeded from the 64-bit seed through
//! SplitMix64 (the reference seeding procedure). Worker `w` uses the base
//! state advanced by `w` calls of the generator's 2^128-step jump. Each
//! draw consumes one 64-bit output `x` and maps it to `u = (x >> 11) · 2^-53`
//! in `[0, 1)`; entry `i` owns the half-open interval `[C_{i-1}, C_i)` of
//! the cumulative probabilities, so zero-probability entries are never
//! drawn and a `u` on a boundary goes to the later entry.

use std::io::Write;

use nalgebra::DVector;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MixError, Result};
use crate::manifest::Manifest;

/// Plan probabilities below this are treated as roundoff and dropped.
pub const MIN_PROBABILITY: f64 = 1e-15;
/// Allowed deviation of the input weights' sum from 1.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub domain: String,
    pub dataset: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub entries: Vec<PlanEntry>,
    pub seed: u64,
    /// SHA-256 over the little-endian bytes of the input weights.
    pub weights_checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanHeader {
    seed: u64,
    weights_checksum: String,
    entries: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    steps: Option<u64>,
}

#[derive(Serialize)]
struct PlanLine<'a> {
    domain: &'a str,
    dataset: &'a str,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected: Option<f64>,
}

pub fn weights_checksum(weights: &DVector<f64>) -> String {
    let mut hasher = Sha256::new();
    for w in weights.iter() {
        hasher.update(w.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub fn build_plan(weights: &DVector<f64>, manifest: &Manifest, seed: u64) -> Result<SamplingPlan> {
    let k = manifest.domain_count();
    if weights.len() != k {
        return Err(MixError::validation(format!(
            "{} weights supplied for {k} domains",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) || (weights.sum() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(MixError::validation(
            "domain weights must lie on the probability simplex",
        ));
    }

    let mut entries = Vec::new();
    for (domain, &pi) in manifest.domains.iter().zip(weights.iter()) {
        let total = domain.total_size() as f64;
        for ds in &domain.datasets {
            entries.push(PlanEntry {
                domain: domain.name.clone(),
                dataset: ds.name.clone(),
                p: ds.size as f64 / total * pi,
            });
        }
    }

    let dropped = entries.iter().filter(|e| e.p > 0.0 && e.p < MIN_PROBABILITY).count();
    if dropped > 0 {
        log::warn!("clamping {dropped} plan entries below {MIN_PROBABILITY:e} to zero");
        for e in entries.iter_mut().filter(|e| e.p < MIN_PROBABILITY) {
            e.p = 0.0;
        }
        let total: f64 = entries.iter().map(|e| e.p).sum();
        for e in &mut entries {
            e.p /= total;
        }
    }

    Ok(SamplingPlan {
        entries,
        seed,
        weights_checksum: weights_checksum(weights),
    })
}

/// `n · P` per entry, in plan order.
pub fn expected_counts(plan: &SamplingPlan, n: u64) -> Vec<f64> {
    plan.entries.iter().map(|e| n as f64 * e.p).collect()
}

impl SamplingPlan {
    /// Sum of entry probabilities per domain, in first-appearance order.
    pub fn domain_marginals(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some((name, acc)) if *name == e.domain => *acc += e.p,
                _ => out.push((e.domain.clone(), e.p)),
            }
        }
        out
    }

    /// JSON lines: a header with the seed and weights checksum, then one
    /// object per entry. `steps` adds expected counts.
    pub fn to_jsonl(&self, steps: Option<u64>) -> String {
        let header = PlanHeader {
            seed: self.seed,
            weights_checksum: self.weights_checksum.clone(),
            entries: self.entries.len(),
            steps,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            let line = PlanLine {
                domain: &e.domain,
                dataset: &e.dataset,
                p: e.p,
                expected: steps.map(|n| n as f64 * e.p),
            };
            out.push_str(&serde_json::to_string(&line).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| MixError::validation(format!("malformed plan: {e}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: PlanHeader =
            serde_json::from_str(lines.next().ok_or_else(|| MixError::validation("empty plan file"))?).map_err(bad)?;
        let entries = lines
            .map(|l| serde_json::from_str::<PlanEntry>(l).map_err(bad))
            .collect::<Result<Vec<_>>>()?;
        if entries.len() != header.entries {
            return Err(MixError::validation(format!(
                "plan header announces {} entries but {} follow",
                header.entries,
                entries.len()
            )));
        }
        Ok(SamplingPlan {
            entries,
            seed: header.seed,
            weights_checksum: header.weights_checksum,
        })
    }
}

/// Stateful, single-consumer stream of categorical draws over a plan.
#[derive(Debug, Clone)]
pub struct DrawStream<'a> {
    plan: &'a SamplingPlan,
    cumulative: Vec<f64>,
    last_reachable: usize,
    rng: Xoshiro256StarStar,
    drawn: u64,
}

impl<'a> DrawStream<'a> {
    pub fn new(plan: &'a SamplingPlan) -> Result<Self> {
        Self::for_worker(plan, 0)
    }

    /// Independent stream for worker `worker`, derived from the plan seed.
    pub fn for_worker(plan: &'a SamplingPlan, worker: u64) -> Result<Self> {
        let last_reachable = plan
            .entries
            .iter()
            .rposition(|e| e.p > 0.0)
            .ok_or_else(|| MixError::validation("plan has no entry with positive probability"))?;
        let mut acc = 0.0;
        let cumulative = plan
            .entries
            .iter()
            .map(|e| {
                acc += e.p;
                acc
            })
            .collect();
        let mut rng = Xoshiro256StarStar::seed_from_u64(plan.seed);
        for _ in 0..worker {
            rng.jump();
        }
        Ok(DrawStream {
            plan,
            cumulative,
            last_reachable,
            rng,
            drawn: 0,
        })
    }

    pub fn plan(&self) -> &SamplingPlan {
        self.plan
    }

    /// Number of draws taken so far.
    pub fn position(&self) -> u64 {
        self.drawn
    }

    fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index of the next drawn plan entry.
    pub fn next_index(&mut self) -> usize {
        let u = self.next_uniform();
        self.drawn += 1;
        self.cumulative.partition_point(|&c| c <= u).min(self.last_reachable)
    }

    pub fn draw(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.next_index()).collect()
    }

    /// Write `n` draws as CSV rows `step,domain,dataset`, with a header.
    /// Steps continue from the stream's current position.
    pub fn write_csv<W: Write>(&mut self, n: u64, out: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "step,domain,dataset")?;
        for _ in 0..n {
            let step = self.drawn;
            let e = &self.plan.entries[self.next_index()];
            writeln!(out, "{step},{},{}", csv_field(&e.domain), csv_field(&e.dataset))?;
        }
        out.flush()
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
