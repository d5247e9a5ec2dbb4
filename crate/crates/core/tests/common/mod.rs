#![allow(dead_code)]

//! Fixtures and independent reference computations for the integration
//! tests. Oracles work on plain `Vec`s and never call into the library's
//! numerical code.

use std::path::{Path, PathBuf};

use madmix::manifest::{write_embedding_file, EmbeddingMatrix};
use madmix::DomainEmbeddingSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random embedding set: `dims[v]` per modality, each (domain, modality)
/// missing with probability `missing`, but every domain keeps at least one
/// and every modality appears somewhere.
pub fn random_set(rng: &mut ChaCha8Rng, k: usize, dims: &[usize], missing: f64) -> DomainEmbeddingSet {
    let v_count = dims.len();
    let mut presence = vec![vec![true; k]; v_count];
    for i in 0..k {
        for p in presence.iter_mut() {
            p[i] = rng.gen::<f64>() >= missing;
        }
        if !presence.iter().any(|p| p[i]) {
            let keep = rng.gen_range(0..v_count);
            presence[keep][i] = true;
        }
    }
    // a modality present nowhere is rejected at ingestion
    for p in presence.iter_mut() {
        if !p.iter().any(|&x| x) {
            p[rng.gen_range(0..k)] = true;
        }
    }
    let centroids = dims.iter().map(|&d| normal_matrix(rng, k, d)).collect();
    DomainEmbeddingSet::new(
        (0..k).map(|i| format!("domain{i}")).collect(),
        (0..v_count).map(|v| format!("mod{v}")).collect(),
        centroids,
        presence,
    )
    .unwrap()
}

/// Random PSD kernel of order k with rank at most r.
pub fn random_psd(rng: &mut ChaCha8Rng, k: usize, r: usize) -> DMatrix<f64> {
    let x = normal_matrix(rng, k, r);
    let g = &x * x.transpose();
    (&g + g.transpose()) * 0.5
}

// ----- oracles ---------------------------------------------------------

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn naive_gram(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = x.len();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for t in 0..x[i].len() {
                s += x[i][t] * x[j][t];
            }
            g[i][j] = s;
        }
    }
    g
}

pub fn naive_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| {
            let mut s = 0.0;
            for (aij, xj) in row.iter().zip(x) {
                s += aij * xj;
            }
            s
        })
        .collect()
}

pub fn add_diag(a: &[Vec<f64>], c: f64) -> Vec<Vec<f64>> {
    let mut out = a.to_vec();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += c;
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        assert!(m[col][col].abs() > 0.0, "singular system in oracle");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    x
}

/// Softmax written as p_i = 1 / Σ_j exp(S_j − S_i), with compensated sums.
pub fn softmax_oracle(s: &[f64]) -> Vec<f64> {
    s.iter()
        .map(|&si| {
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for &sj in s {
                let y = (sj - si).exp() - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            1.0 / sum
        })
        .collect()
}

/// Weights for the coupled method recomputed from scratch on plain vectors.
pub fn madmix_oracle(emb: &DomainEmbeddingSet, lambda: f64) -> Vec<f64> {
    let k = emb.k();
    let kernels: Vec<Vec<Vec<f64>>> = (0..emb.modality_count())
        .map(|v| naive_gram(&rows(emb.centroids(v))))
        .collect();
    let mut kmm = vec![vec![0.0; k]; k];
    for kv in &kernels {
        for i in 0..k {
            for j in 0..k {
                kmm[i][j] += kv[i][j];
            }
        }
    }
    let delta: Vec<f64> = (0..k)
        .map(|i| (0..emb.modality_count()).filter(|&v| emb.is_present(i, v)).count() as f64)
        .collect();
    let alpha = gauss_solve(&add_diag(&kmm, lambda), &delta);
    let totals = naive_matvec(&kmm, &alpha);
    softmax_oracle(&totals)
}

pub fn rel_err(a: &DVector<f64>, b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

pub fn max_abs_diff(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ----- on-disk fixtures ------------------------------------------------

pub struct DatasetFixture {
    pub name: String,
    pub size: u64,
    /// Per modality sample rows; `None` when the modality is absent.
    pub rows: Vec<Option<Vec<Vec<f32>>>>,
}

pub struct DomainFixture {
    pub name: String,
    pub datasets: Vec<DatasetFixture>,
}

/// Write binary embedding files plus `manifest.json` into `dir`.
pub fn write_fixture(dir: &Path, modalities: &[&str], domains: &[DomainFixture]) -> PathBuf {
    let mut domain_json = Vec::new();
    for (i, dom) in domains.iter().enumerate() {
        let mut ds_json = Vec::new();
        for (j, ds) in dom.datasets.iter().enumerate() {
            let mut emb = Vec::new();
            for (v, rows) in ds.rows.iter().enumerate() {
                if let Some(rows) = rows {
                    let file = format!("d{i}_s{j}_m{v}.bin");
                    let m = EmbeddingMatrix::from_rows(
                        &rows
                            .iter()
                            .map(|r| r.iter().map(|&x| f64::from(x)).collect())
                            .collect::<Vec<_>>(),
                    )
                    .unwrap();
                    write_embedding_file(dir.join(&file), &m).unwrap();
                    emb.push(format!("\"{}\": \"{file}\"", modalities[v]));
                }
            }
            ds_json.push(format!(
                "{{\"name\": \"{}\", \"size\": {}, \"embeddings\": {{{}}}}}",
                ds.name,
                ds.size,
                emb.join(", ")
            ));
        }
        domain_json.push(format!(
            "{{\"name\": \"{}\", \"datasets\": [{}]}}",
            dom.name,
            ds_json.join(", ")
        ));
    }
    let mods: Vec<String> = modalities.iter().map(|m| format!("\"{m}\"")).collect();
    let text = format!(
        "{{\"modalities\": [{}], \"domains\": [{}]}}\n",
        mods.join(", "),
        domain_json.join(", ")
    );
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
        .collect()
}

pub const FIVE_DOMAINS: [&str; 5] = [
    "General",
    "Doc/Chart/Screen",
    "Math/Reasoning",
    "General OCR",
    "Language",
];

/// Five domains, text + image, with the last domain text-only. Dataset
/// sizes equal their row counts.
pub fn five_domain_fixture(dir: &Path, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    let domains: Vec<DomainFixture> = FIVE_DOMAINS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let n_datasets = 1 + (i % 3);
            DomainFixture {
                name: name.to_string(),
                datasets: (0..n_datasets)
                    .map(|j| {
                        let n = 3 + 2 * j + i;
                        let text = Some(random_rows(&mut r, n, 6));
                        let image = if i == 4 { None } else { Some(random_rows(&mut r, n, 4)) };
                        DatasetFixture {
                            name: format!("ds{j}"),
                            size: n as u64,
                            rows: vec![text, image],
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    write_fixture(dir, &["text", "image"], &domains)
}

/// Two domains, two modalities; the second domain lacks the image modality.
/// At lambda = 1 the weights are (0.6971, 0.3029).
pub fn two_domain_fixture(dir: &Path) -> PathBuf {
    let domains = vec![
        DomainFixture {
            name: "first".into(),
            datasets: vec![DatasetFixture {
                name: "a".into(),
                size: 1,
                rows: vec![Some(vec![vec![1.0, 0.0]]), Some(vec![vec![1.0, 0.0]])],
            }],
        },
        DomainFixture {
            name: "second".into(),
            datasets: vec![DatasetFixture {
                name: "b".into(),
                size: 1,
                rows: vec![Some(vec![vec![0.0, 1.0]]), None],
            }],
        },
    ];
    write_fixture(dir, &["text", "image"], &domains)
}

/// Synthetic manifest with `k` single-dataset domains and the given
/// per-modality dimensions; every domain has every modality.
pub fn synthetic_fixture(dir: &Path, k: usize, dims: &[usize], rows_per_file: usize, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    let modalities: Vec<String> = (0..dims.len()).map(|v| format!("mod{v}")).collect();
    let mod_refs: Vec<&str> = modalities.iter().map(String::as_str).collect();
    let domains: Vec<DomainFixture> = (0..k)
        .map(|i| DomainFixture {
            name: format!("domain{i:04}"),
            datasets: vec![DatasetFixture {
                name: "ds".into(),
                size: rows_per_file as u64,
                rows: dims
                    .iter()
                    .map(|&d| Some(random_rows(&mut r, rows_per_file, d)))
                    .collect(),
            }],
        })
        .collect();
    write_fixture(dir, &mod_refs, &domains)
}
