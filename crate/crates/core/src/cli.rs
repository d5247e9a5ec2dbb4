//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 I/O failure, 3 numerical
//! failure. Results go to `--output` (or stdout); diagnostics to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::api::LoadedInputs;
use crate::error::{MixError, Result};
use crate::kernels::{KernelSet, Normalization};
use crate::manifest::{Aggregation, Preprocessing};
use crate::mixer::{
    compare, lambda_sweep, madmix_with_kernels, spectral_score, Method, MixtureConfig, MixtureReport, DEFAULT_LAMBDA,
};
use crate::sampling::{build_plan, csv_field, DrawStream};

pub const THREADS_ENV: &str = "MADMIX_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "madmix",
    version,
    about = "Multi-modal domain-mixture weights and sampling plans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute domain weights at one lambda.
    Score(ScoreArgs),
    /// Domain weights across several lambdas, one row per lambda.
    Sweep(SweepArgs),
    /// Eigen-spectrum of the coupled kernel, filter factors and spectral scores.
    Spectrum(SpectrumArgs),
    /// Per-dataset sampling plan, optionally with seeded draws.
    Plan(PlanArgs),
    /// Weights from several methods side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "equal", value_parser = parse_aggregation)]
    pub aggregation: Aggregation,
    #[arg(long, default_value = "none", value_parser = parse_normalization)]
    pub normalization: Normalization,
    /// Scale each sample embedding to unit L2 norm before averaging.
    #[arg(long)]
    pub l2_normalize: bool,
    /// Center domain centroids per modality.
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Softmax temperature.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Print the wall-clock time of the score computation to stderr.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated lambdas, e.g. 1,10,100.
    #[arg(long, allow_hyphen_values = true)]
    pub lambdas: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Also write per-modality and coupled kernels (CSV and JSON) into this directory.
    #[arg(long)]
    pub export_kernels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value = "madmix")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Annotate each entry with its expected count over this many steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Emit this many seeded draws as CSV.
    #[arg(long)]
    pub draw: Option<u64>,
    /// Draw CSV destination (stdout when omitted).
    #[arg(long)]
    pub draw_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Comma-separated: uniform, madmix, single:<modality>, avg, fused, orthogonal.
    #[arg(long, default_value = "uniform,madmix")]
    pub methods: String,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
}

fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    s.parse().map_err(|e: MixError| e.to_string())
}

fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    s.parse().map_err(|e: MixError| e.to_string())
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|()| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| MixError::validation(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a global pool may already exist when embedded; that is not an error
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn config(input: &InputArgs, lambda: f64) -> Result<MixtureConfig> {
    let cfg = MixtureConfig {
        lambda,
        aggregation: input.aggregation,
        normalization: input.normalization,
        ..MixtureConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(input: &InputArgs) -> Result<LoadedInputs> {
    let prep = Preprocessing {
        l2_normalize: input.l2_normalize,
        center: input.center,
    };
    LoadedInputs::load(&input.manifest, input.aggregation, prep)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| MixError::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| MixError::io("<stdout>", e))
        }
    }
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let mut cfg = config(&a.input, a.lambda)?;
    cfg.temperature = a.temperature;
    cfg.validate()?;
    let inputs = load(&a.input)?;
    let scoring = inputs.scoring()?;
    let start = Instant::now();
    let result = crate::mixer::madmix(&scoring, &cfg)?;
    let elapsed = start.elapsed();
    if a.timing {
        eprintln!(
            "timing: score computation {:.6} s (k={}, V={})",
            elapsed.as_secs_f64(),
            scoring.k(),
            scoring.modality_count()
        );
    }
    let text = match a.format {
        Format::Json => result.to_json(),
        Format::Human => human_weights(&result.report()),
        Format::Csv => {
            let mut s = String::from("domain,weight\n");
            for (d, w) in result.domains.iter().zip(result.weights.iter()) {
                let _ = writeln!(s, "{},{w}", csv_field(d));
            }
            s
        }
    };
    emit(a.input.output.as_deref(), &text)
}

fn human_weights(report: &MixtureReport) -> String {
    let width = report.weights.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut s = format!(
        "lambda = {}\n{:<width$}  {:>8}  {:>7}\n",
        report.lambda, "domain", "weight", "percent"
    );
    for (d, w) in &report.weights {
        let _ = writeln!(s, "{d:<width$}  {w:>8.6}  {:>7.2}", w * 100.0);
    }
    let _ = writeln!(
        s,
        "residual {:.3e}, condition {:.3e}",
        report.diagnostics.residual, report.diagnostics.condition
    );
    s
}

pub fn parse_lambdas(s: &str) -> Result<Vec<f64>> {
    let lambdas = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| MixError::validation(format!("'{t}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if lambdas.is_empty() {
        return Err(MixError::validation("lambda list is empty"));
    }
    for &l in &lambdas {
        crate::mixer::check_lambda(l)?;
    }
    Ok(lambdas)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let lambdas = parse_lambdas(&a.lambdas)?;
    let cfg = config(&a.input, lambdas[0])?;
    let inputs = load(&a.input)?;
    let rows = lambda_sweep(&inputs.scoring()?, &cfg, &lambdas)?;
    let text = match a.format {
        Format::Csv => {
            let mut s = String::from("lambda");
            for d in inputs.manifest.domain_names() {
                s.push(',');
                s.push_str(&csv_field(&d));
            }
            s.push('\n');
            for (l, r) in &rows {
                s.push_str(&l.to_string());
                for w in r.weights.iter() {
                    let _ = write!(s, ",{w}");
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let reports: Vec<MixtureReport> = rows.iter().map(|(_, r)| r.report()).collect();
            let mut s = serde_json::to_string_pretty(&reports).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Human => {
            let mut s = String::new();
            for (_, r) in &rows {
                s.push_str(&human_weights(&r.report()));
                s.push('\n');
            }
            s
        }
    };
    emit(a.input.output.as_deref(), &text)
}

#[derive(Serialize)]
struct SpectrumReport {
    lambda: f64,
    eigenvalues: Vec<f64>,
    filter: Vec<f64>,
    projections: Vec<f64>,
    spectral_scores: IndexMap<String, f64>,
    direct_scores: IndexMap<String, f64>,
}

#[derive(Serialize)]
struct KernelExport {
    domains: Vec<String>,
    normalization: Normalization,
    modalities: IndexMap<String, Vec<Vec<f64>>>,
    multimodal: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn kernel_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn export_kernels(dir: &Path, domains: &[String], modalities: &[String], kernels: &KernelSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MixError::io(dir, e))?;
    let write = |name: String, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| MixError::io(&path, e))
    };
    for (m, k) in modalities.iter().zip(&kernels.per_modality) {
        write(format!("kernel_{}.csv", file_stem(m)), kernel_csv(k.values()))?;
    }
    write("kernel_multimodal.csv".into(), kernel_csv(kernels.multimodal.values()))?;
    let export = KernelExport {
        domains: domains.to_vec(),
        normalization: kernels.normalization,
        modalities: modalities
            .iter()
            .cloned()
            .zip(kernels.per_modality.iter().map(|k| rows_of(k.values())))
            .collect(),
        multimodal: rows_of(kernels.multimodal.values()),
    };
    let mut json = serde_json::to_string_pretty(&export).expect("kernels serialize");
    json.push('\n');
    write("kernels.json".into(), json)
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let cfg = config(&a.input, a.lambda)?;
    let inputs = load(&a.input)?;
    let scoring = inputs.scoring()?;
    let kernels = KernelSet::build(&scoring, cfg.normalization)?;
    let delta = scoring.modality_counts();
    let spectral = spectral_score(&kernels.multimodal, &delta, cfg.lambda, None)?;
    let direct = madmix_with_kernels(&scoring, &kernels, &cfg)?;
    if let Some(dir) = &a.export_kernels {
        export_kernels(dir, scoring.domain_names(), scoring.modality_names(), &kernels)?;
    }
    let domains = scoring.domain_names();
    let text = match a.format {
        Format::Csv | Format::Human => {
            let mut s = String::from("component,eigenvalue,filter,projection\n");
            for j in 0..spectral.eigenvalues.len() {
                let _ = writeln!(
                    s,
                    "{j},{},{},{}",
                    spectral.eigenvalues[j], spectral.filter[j], spectral.projections[j]
                );
            }
            s.push_str("\ndomain,spectral_score,direct_score\n");
            for (i, d) in domains.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    csv_field(d),
                    spectral.scores_total[i],
                    direct.scores_total[i]
                );
            }
            s
        }
        Format::Json => {
            let report = SpectrumReport {
                lambda: cfg.lambda,
                eigenvalues: spectral.eigenvalues.iter().copied().collect(),
                filter: spectral.filter.iter().copied().collect(),
                projections: spectral.projections.iter().copied().collect(),
                spectral_scores: domains
                    .iter()
                    .cloned()
                    .zip(spectral.scores_total.iter().copied())
                    .collect(),
                direct_scores: domains
                    .iter()
                    .cloned()
                    .zip(direct.scores_total.iter().copied())
                    .collect(),
            };
            let mut s = serde_json::to_string_pretty(&report).expect("spectrum serializes");
            s.push('\n');
            s
        }
    };
    emit(a.input.output.as_deref(), &text)
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let cfg = config(&a.input, a.lambda)?;
    let method: Method = a.method.parse()?;
    if a.draw.is_some() && a.draw_output.is_none() && a.input.output.is_none() {
        return Err(MixError::validation(
            "plan and draws would both go to stdout; pass --output or --draw-output",
        ));
    }
    let inputs = load(&a.input)?;
    let weights = method.weights(&inputs.embeddings, &cfg)?;
    let plan = build_plan(&weights, &inputs.manifest, a.seed)?;
    let plan_text = plan.to_jsonl(a.steps);
    let draws = match a.draw {
        None => None,
        Some(n) => {
            let mut buf = Vec::new();
            DrawStream::new(&plan)?
                .write_csv(n, &mut buf)
                .map_err(|e| MixError::io("<draw buffer>", e))?;
            Some(String::from_utf8(buf).expect("draw csv is utf-8"))
        }
    };
    emit(a.input.output.as_deref(), &plan_text)?;
    if let Some(draws) = draws {
        emit(a.draw_output.as_deref(), &draws)?;
    }
    Ok(())
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(MixError::validation(format!(
            "no methods given; valid methods: {}",
            crate::mixer::VALID_METHODS
        )));
    }
    Ok(methods)
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let cfg = config(&a.input, a.lambda)?;
    let methods = parse_methods(&a.methods)?;
    let inputs = load(&a.input)?;
    let columns = compare(&inputs.embeddings, &cfg, &methods)?;
    let domains = inputs.manifest.domain_names();
    let text = match a.format {
        Format::Csv => {
            let mut s = String::from("domain");
            for c in &columns {
                let _ = write!(s, ",{}", csv_field(&c.method.to_string()));
            }
            s.push('\n');
            for (i, d) in domains.iter().enumerate() {
                s.push_str(&csv_field(d));
                for c in &columns {
                    let _ = write!(s, ",{}", c.weights[i]);
                }
                s.push('\n');
            }
            s
        }
        Format::Human => {
            let width = domains.iter().map(String::len).max().unwrap_or(6).max(6);
            let labels: Vec<String> = columns.iter().map(|c| c.method.to_string()).collect();
            let mut s = format!("{:<width$}", "domain");
            for l in &labels {
                let w = l.len().max(7);
                let _ = write!(s, "  {l:>w$}");
            }
            s.push('\n');
            for (i, d) in domains.iter().enumerate() {
                let _ = write!(s, "{d:<width$}");
                for (c, l) in columns.iter().zip(&labels) {
                    let w = l.len().max(7);
                    let _ = write!(s, "  {:>w$.2}", c.weights[i] * 100.0);
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let table: IndexMap<String, IndexMap<String, f64>> = columns
                .iter()
                .map(|c| {
                    (
                        c.method.to_string(),
                        domains.iter().cloned().zip(c.weights.iter().copied()).collect(),
                    )
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&table).expect("table serializes");
            s.push('\n');
            s
        }
    };
    emit(a.input.output.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_list_parsing() {
        assert_eq!(parse_lambdas("1,10,100").unwrap(), vec![1.0, 10.0, 100.0]);
        assert_eq!(parse_lambdas(" 0.5 ").unwrap(), vec![0.5]);
        assert!(parse_lambdas("").is_err());
        assert!(parse_lambdas("1,0").is_err());
        assert!(parse_lambdas("1,x").is_err());
    }

    #[test]
    fn method_list_parsing() {
        let m = parse_methods("uniform,single:text,avg").unwrap();
        assert_eq!(m, vec![Method::Uniform, Method::Single("text".into()), Method::Avg]);
        assert!(parse_methods("uniform,bogus").is_err());
        assert!(parse_methods("").is_err());
    }

    #[test]
    fn parse_errors_exit_one() {
        assert_eq!(main_with_args(["madmix", "score"]), 1);
        assert_eq!(main_with_args(["madmix", "bogus"]), 1);
    }
}
