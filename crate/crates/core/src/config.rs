//! TOML run configuration and dataset loading for the CLI.
//!
//! ```toml
//! [arch]
//! name = "fig1a"            # or: file = "my.arch" (optionally with name)
//!
//! [data]
//! train = "train.txt"       # manifest of complex files, or a dataset file
//! test = "test.qds"
//!
//! [data.synthetic]          # alternative to train/test
//! seed = 7
//! count = 512
//! test_count = 128
//! noise_sigma = 0.5
//!
//! [train]
//! lr = 1e-3
//! steps = 2000
//!
//! [noise]
//! strategy = "final_qubit"
//!
//! [output]
//! dir = "runs/fig1a"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{builtin_arch, parse_arch_file, validate_for_state, ArchError, ArchitectureSpec};
use crate::ingest::{
    encode_complex, parse_complex, pooled_side, synth_dataset_with, EncodedState, IngestError, SynthOptions,
};
use crate::io::{is_dataset_file, read_dataset, read_manifest, FormatError};
use crate::noise::NoiseConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Toml(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Failures while assembling a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("no samples in {0}")]
    NoSamples(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("shape mismatch: {0}")]
    Shape(#[from] ArchError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub name: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub seed: u64,
    pub count: usize,
    pub test_count: usize,
    pub noise_sigma: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self { seed: 0, count: 512, test_count: 128, noise_sigma: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("qcnn-out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub output: OutputSection,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies a dotted `key=value` override; the value is read as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses config text, applies overrides and validates. Relative paths
    /// are resolved against `base`.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                Self::from_toml(&text, overrides, p.parent().unwrap_or(Path::new(".")))
            }
            None => Self::from_toml("", overrides, Path::new(".")),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.arch.file, &mut self.data.train, &mut self.data.test].into_iter().flatten() {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.noise.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.data.synthetic.is_some() && (self.data.train.is_some() || self.data.test.is_some()) {
            return Err(ConfigError::Invalid("data.synthetic cannot be combined with data.train/data.test".into()));
        }
        if let Some(s) = &self.data.synthetic {
            if s.count == 0 {
                return Err(ConfigError::Invalid("data.synthetic.count must be at least 1".into()));
            }
            if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
                return Err(ConfigError::Invalid("data.synthetic.noise_sigma must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn resolve_arch(&self) -> Result<ArchitectureSpec, ConfigError> {
        resolve_arch(self.arch.name.as_deref(), self.arch.file.as_deref())
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// Training and test sets for `arch`.
    pub fn load_data(&self, arch: &ArchitectureSpec) -> Result<(Vec<EncodedState>, Vec<EncodedState>), DataError> {
        let n = arch.n_qubits();
        let (train, test) = if let Some(s) = &self.data.synthetic {
            let mut opts = SynthOptions::new(s.seed, s.count + s.test_count, n);
            opts.noise_sigma = s.noise_sigma;
            let mut all = synth_dataset_with(&opts)?;
            let test = all.split_off(s.count);
            (all, test)
        } else {
            let train_path = self
                .data
                .train
                .as_deref()
                .ok_or_else(|| DataError::NoSamples("config (set data.train or data.synthetic)".into()))?;
            let train = load_states(train_path, n)?;
            let test = match &self.data.test {
                Some(p) => load_states(p, n)?,
                None => Vec::new(),
            };
            (train, test)
        };
        for s in train.iter().chain(&test) {
            validate_for_state(arch, s.amplitudes.len())?;
        }
        Ok((train, test))
    }
}

/// Builtin name, or an architecture file (first entry, or the one named).
pub fn resolve_arch(name: Option<&str>, file: Option<&Path>) -> Result<ArchitectureSpec, ConfigError> {
    match (name, file) {
        (name, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            let archs = parse_arch_file(&text)?;
            match name {
                None => Ok(archs.into_iter().next().expect("parser yields at least one")),
                Some(n) => archs
                    .into_iter()
                    .find(|a| a.name() == n)
                    .ok_or_else(|| ConfigError::Invalid(format!("no architecture `{n}` in {}", path.display()))),
            }
        }
        (Some(n), None) => Ok(builtin_arch(n)?),
        (None, None) => Err(ConfigError::Invalid("no architecture given (arch.name or arch.file)".into())),
    }
}

/// Reads a dataset file, or a manifest of complex files encoded at `n_qubits`.
/// Unreadable or malformed complexes are logged and skipped.
pub fn load_states(path: &Path, n_qubits: usize) -> Result<Vec<EncodedState>, DataError> {
    let states = if is_dataset_file(path) {
        let (n, states) = read_dataset(path)?;
        if n != n_qubits {
            return Err(DataError::Shape(ArchError::StateLength { len: 1 << n, n_qubits }));
        }
        states
    } else {
        ingest_manifest(path, n_qubits)?.states
    };
    if states.is_empty() {
        return Err(DataError::NoSamples(path.display().to_string()));
    }
    Ok(states)
}

/// A complex that could not be read, parsed or encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSample {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ManifestIngest {
    pub states: Vec<EncodedState>,
    pub skipped: Vec<SkippedSample>,
}

/// Parses and encodes every complex listed in a manifest, in manifest order.
/// Per-file failures are collected rather than aborting the run.
pub fn ingest_manifest(manifest: &Path, n_qubits: usize) -> Result<ManifestIngest, DataError> {
    pooled_side(n_qubits)?;
    let paths = read_manifest(manifest)?;
    let results: Vec<Result<EncodedState, String>> = paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let text = fs::read_to_string(p).map_err(|e| e.to_string())?;
            let sample = parse_complex(&id, &text).map_err(|e| e.to_string())?;
            encode_complex(&sample, n_qubits).map_err(|e| e.to_string())
        })
        .collect();
    let mut out = ManifestIngest::default();
    for (path, r) in paths.iter().zip(results) {
        match r {
            Ok(s) => out.states.push(s),
            Err(reason) => {
                warn!("skipping {}: {reason}", path.display());
                out.skipped.push(SkippedSample { path: path.clone(), reason });
            }
        }
    }
    info!("encoded {} of {} listed complexes", out.states.len(), paths.len());
    if out.states.is_empty() {
        return Err(DataError::NoSamples(manifest.display().to_string()));
    }
    Ok(out)
}
