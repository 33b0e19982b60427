//! Command-line front end. The binary is a thin wrapper around [`run`].
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical
//! check failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ingest_manifest, load_states, ConfigError, DataError, RunConfig};
use crate::forward::{sample_p0, validate_for_state, ArchError, CompiledModel, Prediction};
use crate::ingest::{synth_dataset_with, EncodedState, IngestError, SynthOptions};
use crate::io::{write_dataset, Checkpoint, FormatError};
use crate::linalg::count_params;
use crate::metrics::{
    emit_reports, fmt_num, predictions_csv, sweep_summary_block, Metrics, PredictionRow, ReportError,
};
use crate::noise::{noisy_predict, NoiseConfig, NoiseError, NoiseStrategy};
use crate::trainer::{prediction_rows, sweep, train, TrainError};
use crate::verify::{audit_checkpoint, run_suite, VerifyReport};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "QCNN_THREADS";
pub const CHECKPOINT_FILE: &str = "checkpoint.qck";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnsupportedQubits(_) | IngestError::UnsupportedPooling { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ArchError> for CliError {
    fn from(e: ArchError) -> Self {
        match e {
            ArchError::StateLength { .. } => CliError::Data(format!("shape mismatch: {e}")),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Arch(a) => a.into(),
            TrainError::Linalg(_) => CliError::Check(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::Arch(a) => a.into(),
            NoiseError::Linalg(_) | NoiseError::NotNormalized(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "qcnn", version, about = "Quantum-inspired CNN regression of protein-ligand binding free energy")]
#[command(after_help = "Environment: QCNN_THREADS sets the worker thread count; RUST_LOG sets log verbosity.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode the complexes listed in a manifest into a dataset file.
    Voxelize(VoxelizeArgs),
    /// Generate a synthetic teacher-labelled train/test pair.
    Synth(SynthArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Noise-free metrics of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Per-sample predictions of a checkpoint.
    Predict(PredictArgs),
    /// Metrics under a noise model, next to the noise-free ones.
    NoiseEval(NoiseEvalArgs),
    /// Train over a grid of learning rates and seeds.
    Sweep(SweepArgs),
    /// Run the built-in numerical consistency checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    /// Text file listing complex files, one per line.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Register width: 9 (4³ pooling) or 12 (8³ pooling).
    #[arg(long, default_value_t = 9)]
    pub qubits: usize,
    /// Output directory; receives dataset.qds, skipped.txt and manifest.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 9)]
    pub qubits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub test_count: usize,
    /// Standard deviation of label noise, kcal/mol.
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    /// Output directory; receives train.qds, test.qds and manifest.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run config: sections [arch], [data], [train], [noise], [output].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr=1e-2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated learning rates; runs a sweep with the configured seed.
    #[arg(long, value_delimiter = ',')]
    pub lrs: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4,1e-5")]
    pub lrs: Vec<f64>,
    /// Comma-separated seeds; defaults to the configured seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file, or manifest of complex files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Estimate p0 from this many simulated measurements instead of exactly.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// none, final_qubit or layer_wise. Overrides noise.strategy.
    #[arg(long)]
    pub strategy: Option<NoiseStrategy>,
    /// Depolarizing probability. Overrides noise.depol_p.
    #[arg(long)]
    pub depol_p: Option<f64>,
    /// Phase-damping probability. Overrides noise.phase_gamma.
    #[arg(long)]
    pub phase_gamma: Option<f64>,
    /// Allow density matrices above 10 qubits (12 qubits needs 128 MiB each).
    #[arg(long)]
    pub allow_large_dm: bool,
}

#[derive(Debug, Args)]
pub struct NoiseEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Run config supplying the [noise] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Also audit this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Random draws per architecture.
    #[arg(long, default_value_t = 10)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include the 12-qubit architectures.
    #[arg(long)]
    pub allow_large_dm: bool,
    /// Write report.txt and manifest.txt here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Resolved inputs of one invocation, echoed to `manifest.txt`.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
    pub resolved: String,
}

impl RunManifest {
    fn new(subcommand: &'static str, out_dir: &Path) -> Self {
        Self { subcommand, config_path: None, overrides: Vec::new(), out_dir: out_dir.to_path_buf(), resolved: String::new() }
    }

    fn write(&self, started: Instant) -> Result<(), CliError> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "subcommand = {:?}", self.subcommand);
        if let Some(p) = &self.config_path {
            let _ = writeln!(s, "config = {:?}", p.display().to_string());
        }
        let _ = writeln!(s, "overrides = {:?}", self.overrides);
        let _ = writeln!(s, "output_dir = {:?}", self.out_dir.display().to_string());
        let _ = writeln!(s, "version = {:?}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "timestamp_unix = {stamp}");
        let _ = writeln!(s, "wall_time_secs = {:.3}", started.elapsed().as_secs_f64());
        if !self.resolved.is_empty() {
            let _ = writeln!(s, "\n# resolved configuration\n{}", self.resolved.trim_end());
        }
        let path = self.out_dir.join(MANIFEST_FILE);
        fs::write(&path, s).map_err(|e| io_error(&path, e))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| io_error(path, e))
}

/// Parses arguments and runs; clap usage errors map to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    match cli.command {
        Command::Voxelize(a) => cmd_voxelize(&a, started),
        Command::Synth(a) => cmd_synth(&a, started),
        Command::Train(a) if !a.lrs.is_empty() => {
            let seeds = Vec::new();
            cmd_sweep(&SweepArgs { run: a.run, lrs: a.lrs, seeds }, "train", started)
        }
        Command::Train(a) => cmd_train(&a.run, started),
        Command::Eval(a) => cmd_eval(&a, started),
        Command::Predict(a) => cmd_predict(&a, started),
        Command::NoiseEval(a) => cmd_noise_eval(&a, started),
        Command::Sweep(a) => cmd_sweep(&a, "sweep", started),
        Command::Verify(a) => cmd_verify(&a, started),
    }
}

pub fn cmd_voxelize(a: &VoxelizeArgs, started: Instant) -> Result<(), CliError> {
    let ingest = ingest_manifest(&a.manifest, a.qubits)?;
    create_dir(&a.out_dir)?;
    write_dataset(&a.out_dir.join("dataset.qds"), a.qubits, &ingest.states)?;
    let mut skipped = String::from("path\treason\n");
    for s in &ingest.skipped {
        let _ = writeln!(skipped, "{}\t{}", s.path.display(), s.reason);
    }
    write_file(&a.out_dir.join("skipped.txt"), &skipped)?;
    info!("wrote {} states, skipped {}", ingest.states.len(), ingest.skipped.len());
    let mut m = RunManifest::new("voxelize", &a.out_dir);
    m.resolved = format!(
        "manifest = {:?}\nqubits = {}\nencoded = {}\nskipped = {}",
        a.manifest.display().to_string(),
        a.qubits,
        ingest.states.len(),
        ingest.skipped.len()
    );
    m.write(started)
}

pub fn cmd_synth(a: &SynthArgs, started: Instant) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    if !(a.noise_sigma >= 0.0 && a.noise_sigma.is_finite()) {
        return Err(CliError::Usage("--noise-sigma must be finite and non-negative".into()));
    }
    let mut opts = SynthOptions::new(a.seed, a.count + a.test_count, a.qubits);
    opts.noise_sigma = a.noise_sigma;
    let mut all = synth_dataset_with(&opts)?;
    let test = all.split_off(a.count);
    create_dir(&a.out_dir)?;
    write_dataset(&a.out_dir.join("train.qds"), a.qubits, &all)?;
    write_dataset(&a.out_dir.join("test.qds"), a.qubits, &test)?;
    let mut m = RunManifest::new("synth", &a.out_dir);
    m.resolved = format!(
        "qubits = {}\nseed = {}\ncount = {}\ntest_count = {}\nnoise_sigma = {}",
        a.qubits, a.seed, a.count, a.test_count, a.noise_sigma
    );
    m.write(started)
}

fn load_run(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(run.config.as_deref(), &run.overrides)?;
    if let Some(d) = &run.out_dir {
        cfg.output.dir = d.clone();
    }
    Ok(cfg)
}

fn run_manifest(sub: &'static str, run: &RunArgs, cfg: &RunConfig) -> RunManifest {
    RunManifest {
        subcommand: sub,
        config_path: run.config.clone(),
        overrides: run.overrides.clone(),
        out_dir: cfg.output.dir.clone(),
        resolved: cfg.to_toml(),
    }
}

pub fn cmd_train(run: &RunArgs, started: Instant) -> Result<(), CliError> {
    let cfg = load_run(run)?;
    let arch = cfg.resolve_arch()?;
    let (train_set, test_set) = cfg.load_data(&arch)?;
    let outcome = train(&train_set, &test_set, &arch, &cfg.train)?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    Checkpoint::new(&arch, &outcome.params)?.save(&dir.join(CHECKPOINT_FILE))?;
    emit_reports(&outcome.record, dir, None)?;
    print!("{}", crate::metrics::run_summary(&outcome.record));
    run_manifest("train", run, &cfg).write(started)
}

fn lr_tag(lr: f64) -> String {
    format!("{lr:e}")
}

pub fn cmd_sweep(a: &SweepArgs, sub: &'static str, started: Instant) -> Result<(), CliError> {
    let cfg = load_run(&a.run)?;
    let arch = cfg.resolve_arch()?;
    let (train_set, test_set) = cfg.load_data(&arch)?;
    let seeds = if a.seeds.is_empty() { vec![cfg.train.seed] } else { a.seeds.clone() };
    let table = sweep(&train_set, &test_set, &arch, &a.lrs, &seeds, &cfg.train)?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut csv = String::from("lr,seed,train_rmsd,train_pcc,test_rmsd,test_pcc\n");
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in &table.runs {
        let sub_dir = dir.join(format!("lr-{}_seed-{}", lr_tag(r.lr), r.seed));
        create_dir(&sub_dir)?;
        Checkpoint::new(&arch, &r.outcome.params)?.save(&sub_dir.join(CHECKPOINT_FILE))?;
        emit_reports(&r.outcome.record, &sub_dir, None)?;
        let rec = &r.outcome.record;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            lr_tag(r.lr),
            r.seed,
            fmt_num(rec.final_train.rmsd),
            opt(rec.final_train.pcc),
            opt(rec.final_test.map(|m| m.rmsd)),
            opt(rec.final_test.and_then(|m| m.pcc)),
        );
    }
    write_file(&dir.join("sweep.csv"), &csv)?;
    let block = sweep_summary_block(arch.name(), arch.n_qubits(), &arch.filter_signature(), count_params(&arch), &table.summary);
    write_file(&dir.join("sweep_summary.txt"), &block)?;
    print!("{block}");
    let mut m = run_manifest(sub, &a.run, &cfg);
    let lrs: Vec<String> = a.lrs.iter().map(|l| lr_tag(*l)).collect();
    m.resolved = format!("sweep_lrs = {lrs:?}\nsweep_seeds = {seeds:?}\n\n{}", m.resolved);
    m.write(started)
}

fn load_for_checkpoint(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, CompiledModel, Vec<EncodedState>), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let states = load_states(data, ck.arch.n_qubits())?;
    for s in &states {
        validate_for_state(&ck.arch, s.amplitudes.len())?;
    }
    let model = CompiledModel { arch: ck.arch.clone(), filters: ck.projected.clone(), w0: ck.params.w0, w1: ck.params.w1 };
    Ok((ck, model, states))
}

fn metrics_of(rows: &[PredictionRow]) -> Result<Metrics, CliError> {
    let preds: Vec<f64> = rows.iter().map(|r| r.dg_pred).collect();
    let labels: Vec<f64> = rows.iter().map(|r| r.dg_true).collect();
    Metrics::compute(&preds, &labels).map_err(|e| CliError::Data(e.to_string()))
}

fn fmt_pcc(p: Option<f64>) -> String {
    p.map(fmt_num).unwrap_or_else(|| "n/a".into())
}

fn data_manifest(sub: &'static str, ck: &Path, data: &Path, out: &Path) -> RunManifest {
    let mut m = RunManifest::new(sub, out);
    m.resolved = format!("checkpoint = {:?}\ndata = {:?}", ck.display().to_string(), data.display().to_string());
    m
}

pub fn cmd_eval(a: &EvalArgs, started: Instant) -> Result<(), CliError> {
    let (_, model, states) = load_for_checkpoint(&a.checkpoint, &a.data)?;
    let rows = prediction_rows(&model, &states)?;
    let m = metrics_of(&rows)?;
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("predictions.csv"), &predictions_csv(&rows))?;
    let body = format!("samples,{}\nrmsd,{}\npcc,{}\n", rows.len(), fmt_num(m.rmsd), fmt_pcc(m.pcc));
    write_file(&a.out_dir.join("metrics.csv"), &body)?;
    print!("{body}");
    data_manifest("eval", &a.checkpoint, &a.data, &a.out_dir).write(started)
}

pub fn cmd_predict(a: &PredictArgs, started: Instant) -> Result<(), CliError> {
    let (_, model, states) = load_for_checkpoint(&a.checkpoint, &a.data)?;
    let rows = match a.shots {
        None => prediction_rows(&model, &states)?,
        Some(shots) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut rows = Vec::with_capacity(states.len());
            for s in &states {
                let p = model.predict(&s.amplitudes)?;
                let est = Prediction::from_p0(sample_p0(p.p0, shots, &mut rng), model.w0, model.w1);
                rows.push(PredictionRow { id: s.id.clone(), dg_true: s.label_dg, dg_pred: est.dg_pred });
            }
            rows
        }
    };
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("predictions.csv"), &predictions_csv(&rows))?;
    let mut m = data_manifest("predict", &a.checkpoint, &a.data, &a.out_dir);
    if let Some(shots) = a.shots {
        let _ = write!(m.resolved, "\nshots = {shots}\nseed = {}", a.seed);
    }
    m.write(started)
}

fn resolve_noise(a: &NoiseEvalArgs) -> Result<NoiseConfig, CliError> {
    let mut cfg = if a.config.is_some() || !a.overrides.is_empty() {
        RunConfig::load(a.config.as_deref(), &a.overrides)?.noise
    } else {
        NoiseConfig::default()
    };
    if let Some(s) = a.noise.strategy {
        cfg.strategy = s;
    }
    if let Some(p) = a.noise.depol_p {
        cfg.depol_p = p;
    }
    if let Some(g) = a.noise.phase_gamma {
        cfg.phase_gamma = g;
    }
    cfg.allow_large_dm |= a.noise.allow_large_dm;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_noise_eval(a: &NoiseEvalArgs, started: Instant) -> Result<(), CliError> {
    let noise = resolve_noise(a)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    // Refuse before loading data so the memory gate fails fast.
    noise.check_size(ck.arch.n_qubits())?;
    let (_, model, states) = load_for_checkpoint(&a.checkpoint, &a.data)?;
    let clean = prediction_rows(&model, &states)?;
    let noisy_preds: Vec<Prediction> = {
        use rayon::prelude::*;
        states.par_iter().map(|s| noisy_predict(&s.amplitudes, &model, &noise)).collect::<Result<_, _>>()?
    };
    let noisy: Vec<PredictionRow> = states
        .iter()
        .zip(&noisy_preds)
        .map(|(s, p)| PredictionRow { id: s.id.clone(), dg_true: s.label_dg, dg_pred: p.dg_pred })
        .collect();
    let mc = metrics_of(&clean)?;
    let mn = metrics_of(&noisy)?;
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("predictions_noisy.csv"), &predictions_csv(&noisy))?;
    let body = format!(
        "model,strategy,rmsd,pcc\nnoise_free,none,{},{}\nnoisy,{},{},{}\n",
        fmt_num(mc.rmsd),
        fmt_pcc(mc.pcc),
        noise.strategy,
        fmt_num(mn.rmsd),
        fmt_pcc(mn.pcc)
    );
    write_file(&a.out_dir.join("noise_metrics.csv"), &body)?;
    print!("{body}");
    let mut m = data_manifest("noise-eval", &a.checkpoint, &a.data, &a.out_dir);
    let _ = write!(
        m.resolved,
        "\n\n[noise]\n{}",
        toml::to_string(&noise).expect("noise config serialises")
    );
    m.write(started)
}

pub fn cmd_verify(a: &VerifyArgs, started: Instant) -> Result<(), CliError> {
    if a.draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    let mut report: VerifyReport = run_suite(a.draws, a.seed, a.allow_large_dm);
    if let Some(p) = &a.checkpoint {
        report.checks.extend(audit_checkpoint(&Checkpoint::load(p)?));
    }
    let text = format!("{report}\nmax passing deviation: {:.3e}\n", report.max_deviation());
    print!("{text}");
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("report.txt"), &text)?;
        let mut m = RunManifest::new("verify", dir);
        m.resolved = format!("draws = {}\nseed = {}\nallow_large_dm = {}", a.draws, a.seed, a.allow_large_dm);
        if let Some(p) = &a.checkpoint {
            let _ = write!(m.resolved, "\ncheckpoint = {:?}", p.display().to_string());
        }
        m.write(started)?;
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Check(format!("failed checks: {}", names.join(", "))))
    }
}

/// Configures the global thread pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(main_with_args(["qcnn", "frobnicate"]), 1);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let shape: CliError = ArchError::StateLength { len: 512, n_qubits: 12 }.into();
        assert_eq!(shape.exit_code(), 2);
        let gate: CliError = NoiseError::MemoryGate { n_qubits: 12, mib: 128 }.into();
        assert_eq!(gate.exit_code(), 1);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
    }

    #[test]
    fn config_arch_resolution_errors_are_usage() {
        let e: CliError = crate::config::resolve_arch(None, None).unwrap_err().into();
        assert_eq!(e.exit_code(), 1);
    }
}
