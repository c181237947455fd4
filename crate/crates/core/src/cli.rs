//! Command-line surface: `curves`, `surrogates`, `train` and `verify`.
//!
//! Every command reads a JSON config (unknown keys are rejected) and writes
//! CSV or JSONL to `--out` or stdout. CSV numbers carry 17 significant digits.
//! When `--out` is given, a `<out>.meta.json` sidecar records the command,
//! format, columns and config; data files contain nothing run-dependent.
//!
//! Exit codes: 0 success, 1 config or input error, 2 verification failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::advantage::{effective_weights, AlgorithmId, AlgorithmKind, DEFAULT_ENTROPY_LAMBDA};
use crate::error::{Error, Result};
use crate::oracle::{run_verify, OracleReport, VerifyConfig};
use crate::reward_stats::GroupStats;
use crate::surrogates::{normalizer, rho_of_pass_k, surrogate_eval, SurrogateId, SurrogateKind};
use crate::trainer::{train, MetricsRow, Snapshot, TrainConfig, TrainSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Parser)]
#[command(
    name = "passk",
    version,
    about = "Pass@K policy-gradient estimators, surrogates and verifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct IoArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Effective gradient weights over the attainable rho_hat grid.
    Curves(IoArgs),
    /// Surrogate rewards on a grid.
    Surrogates(IoArgs),
    /// Run a tabular training.
    Train {
        #[command(flatten)]
        io: IoArgs,
        /// Also write the initial/final summary as CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the verification suites.
    Verify(IoArgs),
}

fn default_lambda() -> f64 {
    DEFAULT_ENTROPY_LAMBDA
}

fn default_ks() -> Vec<usize> {
    vec![1]
}

fn default_lambdas() -> Vec<f64> {
    vec![DEFAULT_ENTROPY_LAMBDA]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesConfig {
    pub n: usize,
    pub ks: Vec<usize>,
    pub algorithms: Vec<AlgorithmKind>,
    /// Evenly spaced subset of the attainable grid; all interior points when absent.
    #[serde(default)]
    pub rho_grid_points: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Only recorded in the `scale` column.
    #[serde(default)]
    pub log_scale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub rho_hat: f64,
    pub algorithm: String,
    pub k: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub scale: &'static str,
}

pub const CURVE_COLUMNS: [&str; 6] = ["rho_hat", "algorithm", "k", "w_plus", "w_minus", "scale"];

/// Success counts `n_plus` in `1..n` to sweep.
fn curve_grid(n: usize, points: Option<usize>) -> Result<Vec<usize>> {
    let interior = n - 1;
    match points {
        None => Ok((1..n).collect()),
        Some(0) => Err(Error::config("rho_grid_points must be at least 1")),
        Some(p) if p >= interior => Ok((1..n).collect()),
        Some(1) => Ok(vec![n / 2]),
        Some(p) => {
            let mut grid: Vec<usize> = (0..p)
                .map(|i| 1 + ((i * (interior - 1)) as f64 / (p - 1) as f64).round() as usize)
                .collect();
            grid.dedup();
            Ok(grid)
        }
    }
}

pub fn cmd_curves(config: &CurvesConfig) -> Result<Vec<CurveRow>> {
    if config.n < 2 {
        return Err(Error::config("curves need n >= 2"));
    }
    if config.ks.is_empty() || config.algorithms.is_empty() {
        return Err(Error::config("ks and algorithms must be nonempty"));
    }
    let grid = curve_grid(config.n, config.rho_grid_points)?;
    let scale = if config.log_scale { "log" } else { "linear" };
    let mut rows = Vec::new();
    for &k in &config.ks {
        for &kind in &config.algorithms {
            let alg = AlgorithmId::new(kind, k, config.lambda).map_err(|e| Error::config(e.to_string()))?;
            if kind.needs_k_le_n() && k > config.n {
                return Err(Error::config(format!("{kind} with k={k} needs k <= n={}", config.n)));
            }
            for &np in &grid {
                let stats = GroupStats::new(config.n, np)?;
                let w = effective_weights(&alg, &stats).map_err(|e| Error::config(e.to_string()))?;
                rows.push(CurveRow {
                    rho_hat: stats.rho_hat,
                    algorithm: kind.as_str().to_string(),
                    k,
                    w_plus: w.w_plus,
                    w_minus: w.w_minus,
                    scale,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    #[default]
    Rho,
    RhoK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogatesConfig {
    pub surrogates: Vec<SurrogateKind>,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Number of evenly spaced points on `[0, 1]`, both ends included.
    pub grid_points: usize,
    /// Divide by `F(1)`; when false `normalized_value` repeats `value`.
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// Whether `x` is the 0/1 rate or the Pass@K rate of the row's `k`.
    #[serde(default)]
    pub x_axis: XAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateRow {
    pub x: f64,
    pub surrogate: String,
    pub k: usize,
    pub lambda: f64,
    pub value: f64,
    pub normalized_value: f64,
}

pub const SURROGATE_COLUMNS: [&str; 6] = ["x", "surrogate", "k", "lambda", "value", "normalized_value"];

pub fn cmd_surrogates(config: &SurrogatesConfig) -> Result<Vec<SurrogateRow>> {
    if config.grid_points < 2 {
        return Err(Error::config("grid_points must be at least 2"));
    }
    if config.surrogates.is_empty() || config.ks.is_empty() || config.lambdas.is_empty() {
        return Err(Error::config("surrogates, ks and lambdas must be nonempty"));
    }
    if config.ks.contains(&0) {
        return Err(Error::config("ks entries must be >= 1"));
    }
    let mut rows = Vec::new();
    for &kind in &config.surrogates {
        for &k in &config.ks {
            let lambdas: &[f64] = if kind.uses_lambda() { &config.lambdas } else { &[0.0] };
            for &lambda in lambdas {
                let id = SurrogateId::new(kind, k, lambda).map_err(|e| Error::config(e.to_string()))?;
                let norm = if config.normalize { normalizer(&id)? } else { 1.0 };
                for i in 0..config.grid_points {
                    let x = i as f64 / (config.grid_points - 1) as f64;
                    let rho = match config.x_axis {
                        XAxis::Rho => x,
                        XAxis::RhoK => rho_of_pass_k(x, k).clamp(0.0, 1.0),
                    };
                    let value = surrogate_eval(&id, rho)?;
                    rows.push(SurrogateRow {
                        x,
                        surrogate: kind.as_str().to_string(),
                        k,
                        lambda: id.lambda,
                        value,
                        normalized_value: value / norm,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(header: &[String], records: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn jsonl_bytes<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| Error::Io(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

fn owned(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn curves_csv(rows: &[CurveRow]) -> Result<Vec<u8>> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.rho_hat),
                r.algorithm.clone(),
                r.k.to_string(),
                fmt_f64(r.w_plus),
                fmt_f64(r.w_minus),
                r.scale.to_string(),
            ]
        })
        .collect();
    csv_bytes(&owned(&CURVE_COLUMNS), &records)
}

pub fn surrogates_csv(rows: &[SurrogateRow]) -> Result<Vec<u8>> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.x),
                r.surrogate.clone(),
                r.k.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.value),
                fmt_f64(r.normalized_value),
            ]
        })
        .collect();
    csv_bytes(&owned(&SURROGATE_COLUMNS), &records)
}

fn snapshot_columns(prefix: &str, snap: &Snapshot) -> (Vec<String>, Vec<String>) {
    let mut cols = vec![format!("{prefix}mean_rho")];
    let mut vals = vec![fmt_f64(snap.mean_rho)];
    for (k, v) in &snap.mean_pass_at {
        cols.push(format!("{prefix}mean_pass@{k}"));
        vals.push(fmt_f64(*v));
    }
    for (p, v) in snap.rho.iter().enumerate() {
        cols.push(format!("{prefix}rho_{p}"));
        vals.push(fmt_f64(*v));
    }
    for (k, per) in &snap.pass_at {
        for (p, v) in per.iter().enumerate() {
            cols.push(format!("{prefix}pass@{k}_{p}"));
            vals.push(fmt_f64(*v));
        }
    }
    (cols, vals)
}

pub fn train_steps_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut header = None;
    let mut records = Vec::new();
    for r in rows {
        let (cols, vals) = snapshot_columns("", &r.metrics);
        let mut rec = vec![r.step.to_string()];
        rec.extend(vals);
        rec.push(r.degenerate_groups.to_string());
        records.push(rec);
        header.get_or_insert_with(|| {
            let mut h = vec!["step".to_string()];
            h.extend(cols);
            h.push("degenerate_groups".to_string());
            h
        });
    }
    csv_bytes(&header.unwrap_or_default(), &records)
}

pub fn train_summary_csv(summary: &TrainSummary) -> Result<Vec<u8>> {
    let mut header = owned(&["phase", "algorithm", "steps", "degenerate_groups"]);
    let mut records = Vec::new();
    for (phase, snap) in [("initial", &summary.initial), ("final", &summary.final_)] {
        let (cols, vals) = snapshot_columns("", snap);
        if records.is_empty() {
            header.extend(cols);
        }
        let mut rec = vec![
            phase.to_string(),
            summary.algorithm.clone(),
            summary.steps.to_string(),
            summary.degenerate_groups.to_string(),
        ];
        rec.extend(vals);
        records.push(rec);
    }
    csv_bytes(&header, &records)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TrainRecord<'a> {
    Step(&'a MetricsRow),
    Summary(&'a TrainSummary),
}

pub fn train_jsonl(rows: &[MetricsRow], summary: &TrainSummary) -> Result<Vec<u8>> {
    jsonl_bytes(
        rows.iter()
            .map(TrainRecord::Step)
            .chain(std::iter::once(TrainRecord::Summary(summary))),
    )
}

pub const VERIFY_COLUMNS: [&str; 10] = [
    "suite",
    "check",
    "params",
    "value",
    "target",
    "abs_err",
    "rel_err",
    "tolerance",
    "tolerance_kind",
    "pass",
];

pub fn verify_jsonl(reports: &[OracleReport]) -> Result<Vec<u8>> {
    jsonl_bytes(reports)
}

pub fn verify_csv(reports: &[OracleReport]) -> Result<Vec<u8>> {
    let records: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.suite.to_string(),
                r.check.clone(),
                r.params.to_string(),
                fmt_f64(r.value),
                fmt_f64(r.target),
                fmt_f64(r.abs_err),
                fmt_f64(r.rel_err),
                fmt_f64(r.tolerance),
                serde_json::to_value(r.tolerance_kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                r.pass.to_string(),
            ]
        })
        .collect();
    csv_bytes(&owned(&VERIFY_COLUMNS), &records)
}

pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn require_config<T: for<'de> Deserialize<'de>>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => load_config(p),
        None => Err(Error::config("--config is required for this command")),
    }
}

/// Path of the metadata sidecar written next to `out`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn emit(out: &Option<PathBuf>, bytes: &[u8], meta: serde_json::Value) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes)?;
            let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
            text.push('\n');
            fs::write(meta_path(path), text)?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn meta(command: &str, format: Format, columns: Option<Vec<String>>, config: &impl Serialize) -> serde_json::Value {
    json!({
        "command": command,
        "format": format,
        "columns": columns,
        "config": config,
        "generator": concat!("passk ", env!("CARGO_PKG_VERSION")),
    })
}

/// Outcome of a successful command: whether any verification failed.
enum Outcome {
    Done,
    VerifyFailed,
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Curves(io) => {
            let config: CurvesConfig = require_config(&io.config)?;
            let rows = cmd_curves(&config)?;
            let format = io.format.unwrap_or(Format::Csv);
            let bytes = match format {
                Format::Csv => curves_csv(&rows)?,
                Format::Jsonl => jsonl_bytes(&rows)?,
            };
            emit(
                &io.out,
                &bytes,
                meta("curves", format, Some(owned(&CURVE_COLUMNS)), &config),
            )?;
        }
        Command::Surrogates(io) => {
            let config: SurrogatesConfig = require_config(&io.config)?;
            let rows = cmd_surrogates(&config)?;
            let format = io.format.unwrap_or(Format::Csv);
            let bytes = match format {
                Format::Csv => surrogates_csv(&rows)?,
                Format::Jsonl => jsonl_bytes(&rows)?,
            };
            emit(
                &io.out,
                &bytes,
                meta("surrogates", format, Some(owned(&SURROGATE_COLUMNS)), &config),
            )?;
        }
        Command::Train { io, summary } => {
            let config: TrainConfig = require_config(&io.config)?;
            config.validate().map_err(|e| Error::config(e.to_string()))?;
            let run = train(&config)?;
            let format = io.format.unwrap_or(Format::Jsonl);
            let bytes = match format {
                Format::Jsonl => train_jsonl(&run.rows, &run.summary)?,
                Format::Csv => train_steps_csv(&run.rows)?,
            };
            emit(&io.out, &bytes, meta("train", format, None, &config))?;
            if let Some(path) = summary {
                fs::write(path, train_summary_csv(&run.summary)?)?;
            }
        }
        Command::Verify(io) => {
            let config: VerifyConfig = match &io.config {
                Some(p) => load_config(p)?,
                None => VerifyConfig::default(),
            };
            let reports = run_verify(&config)?;
            let format = io.format.unwrap_or(Format::Jsonl);
            let bytes = match format {
                Format::Jsonl => verify_jsonl(&reports)?,
                Format::Csv => verify_csv(&reports)?,
            };
            emit(&io.out, &bytes, meta("verify", format, None, &config))?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            eprintln!("verify: {} checks, {} failed", reports.len(), failed);
            if failed > 0 {
                return Ok(Outcome::VerifyFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::VerifyFailed) => EXIT_VERIFY_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
