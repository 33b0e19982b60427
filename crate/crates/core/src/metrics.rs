//! RMSD / Pearson statistics and the CSV and summary reports.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::trainer::RunRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metric needs at least {min} values, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("prediction and label lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn check_lengths(preds: &[f64], labels: &[f64], min: usize) -> Result<(), MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.len() < min {
        return Err(MetricsError::TooFew { min, got: preds.len() });
    }
    Ok(())
}

pub fn rmsd(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels, 1)?;
    let mse = preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum::<f64>()
        / preds.len() as f64;
    Ok(mse.sqrt())
}

/// Pearson product-moment correlation with population moments.
pub fn pcc(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels, 2)?;
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let ml = labels.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, y) in preds.iter().zip(labels) {
        let (dp, dy) = (p - mp, y - ml);
        sxy += dp * dy;
        sxx += dp * dp;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::ZeroVariance("predictions"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ZeroVariance("labels"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmsd: f64,
    /// `None` when either side has zero variance or fewer than two samples.
    pub pcc: Option<f64>,
}

impl Metrics {
    pub fn compute(preds: &[f64], labels: &[f64]) -> Result<Self, MetricsError> {
        let rmsd = rmsd(preds, labels)?;
        let pcc = match pcc(preds, labels) {
            Ok(v) => Some(v),
            Err(MetricsError::ZeroVariance(_) | MetricsError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { rmsd, pcc })
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), n: values.len() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

/// Aggregates over the runs of a sweep, one per table column.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub train_rmsd: Option<MeanStd>,
    pub train_pcc: Option<MeanStd>,
    pub test_rmsd: Option<MeanStd>,
    pub test_pcc: Option<MeanStd>,
}

impl SweepSummary {
    pub fn from_records(records: &[&RunRecord]) -> Self {
        let collect = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<MeanStd> {
            let vals: Vec<f64> = records.iter().filter_map(|r| f(r)).collect();
            if vals.len() < records.len() {
                return None;
            }
            MeanStd::of(&vals)
        };
        Self {
            train_rmsd: collect(&|r| Some(r.final_train.rmsd)),
            train_pcc: collect(&|r| r.final_train.pcc),
            test_rmsd: collect(&|r| r.final_test.map(|m| m.rmsd)),
            test_pcc: collect(&|r| r.final_test.and_then(|m| m.pcc)),
        }
    }
}

/// One row of `predictions.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub dg_true: f64,
    pub dg_pred: f64,
}

/// 17 significant digits, scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub const PREDICTIONS_HEADER: &str = "id,dg_true,dg_pred";
pub const TRAJECTORY_HEADER: &str = "step,train_rmsd";

pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", csv_field(&r.id), fmt_num(r.dg_true), fmt_num(r.dg_pred));
    }
    out
}

pub fn trajectory_csv(trajectory: &[(usize, f64)]) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for (step, v) in trajectory {
        let _ = writeln!(out, "{step},{}", fmt_num(*v));
    }
    out
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |line: usize, reason: String| ReportError::Parse { path: path.to_path_buf(), line, reason };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PREDICTIONS_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{PREDICTIONS_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f = split_csv_line(line);
        if f.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(i + 1, format!("bad number `{s}`")));
        rows.push(PredictionRow { id: f[0].clone(), dg_true: num(&f[1])?, dg_pred: num(&f[2])? });
    }
    Ok(rows)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

/// Human-readable summary of a single run. Contains no timing so reruns are
/// byte-identical.
pub fn run_summary(run: &RunRecord) -> String {
    let c = &run.config;
    let mut s = String::new();
    let _ = writeln!(s, "architecture: {}", run.arch_name);
    let _ = writeln!(
        s,
        "lr: {:e}  momentum: {}  batch_size: {}  steps: {}  seed: {}",
        c.lr, c.momentum, c.batch_size, run.steps, c.seed
    );
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10} {:>10}", "", "RMSD(0)", "PCC(0)", "RMSD", "PCC");
    let _ = writeln!(
        s,
        "{:<8} {:>10.4} {:>10} {:>10.4} {:>10}",
        "train",
        run.initial_train.rmsd,
        fmt_metric(run.initial_train.pcc),
        run.final_train.rmsd,
        fmt_metric(run.final_train.pcc)
    );
    if let (Some(a), Some(b)) = (run.initial_test, run.final_test) {
        let _ = writeln!(
            s,
            "{:<8} {:>10.4} {:>10} {:>10.4} {:>10}",
            "test",
            a.rmsd,
            fmt_metric(a.pcc),
            b.rmsd,
            fmt_metric(b.pcc)
        );
    }
    s
}

fn fmt_ms(v: &Option<MeanStd>, prec: usize) -> String {
    v.map(|m| format!("{m:.prec$}")).unwrap_or_else(|| "n/a".into())
}

/// Table-shaped block: one row per architecture with mean ± std columns.
pub fn sweep_summary_block(
    arch_name: &str,
    n_qubits: usize,
    filters: &str,
    params: (usize, usize),
    summary: &SweepSummary,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:<8} {:<10} {:<14} {:<16} {:<18} {:<16} {:<18}",
        "arch", "N_qubit", "Qfilter", "N_par", "Train RMSD", "Train PCC", "Test RMSD", "Test PCC"
    );
    let _ = writeln!(
        s,
        "{:<8} {:<8} {:<10} {:<14} {:<16} {:<18} {:<16} {:<18}",
        arch_name,
        n_qubits,
        filters,
        format!("{} ({})", params.0, params.1),
        fmt_ms(&summary.train_rmsd, 2),
        fmt_ms(&summary.train_pcc, 3),
        fmt_ms(&summary.test_rmsd, 2),
        fmt_ms(&summary.test_pcc, 3),
    );
    s
}

/// Writes `predictions.csv`, `trajectory.csv` and `summary.txt` into `out_dir`.
/// `extra_summary` (e.g. a sweep aggregate block) is appended to the summary.
pub fn emit_reports(run: &RunRecord, out_dir: &Path, extra_summary: Option<&str>) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut summary = run_summary(run);
    if let Some(extra) = extra_summary {
        summary.push('\n');
        summary.push_str(extra);
    }
    let files = [
        ("predictions.csv", predictions_csv(&run.predictions)),
        ("trajectory.csv", trajectory_csv(&run.trajectory)),
        ("summary.txt", summary),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
