//! Binary dataset and checkpoint containers, and dataset manifests.
//!
//! Both binary formats are little-endian throughout.
//!
//! Dataset (`QCNNDSET`, version 1):
//!
//! ```text
//! magic[8] version:u32 n_qubits:u32 count:u64
//! count × { id_len:u32 id[id_len] label:f64 amplitudes:f64[2^n_qubits] }
//! ```
//!
//! Checkpoint (`QCNNCKPT`, version 1):
//!
//! ```text
//! magic[8] version:u32 name_len:u32 name[name_len] n_qubits:u32 n_layers:u32
//! n_layers × { arity:u32 qubits:u32[arity] raw:f64[4^arity] projected:f64[4^arity] }
//! w0:f64 w1:f64
//! ```
//!
//! Matrices are row-major. The projected filters are stored so consumers
//! that only apply filters need no SVD; `verify` checks they still match.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::forward::{ArchError, ArchitectureSpec, ModelParams};
use crate::ingest::EncodedState;
use crate::linalg::{LinalgError, OrthFilter, RawFilter, SquareMatrix};

pub const DATASET_MAGIC: &[u8; 8] = b"QCNNDSET";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QCNNCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Largest register accepted from a file, to bound allocations.
const MAX_FILE_QUBITS: u32 = 16;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a {expected} file (bad magic bytes)")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("trailing bytes after payload")]
    Trailing,
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(FormatError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or(FormatError::Truncated(self.buf.len()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FormatError::Invalid("string is not UTF-8".into()))
    }

    fn header(&mut self, magic: &[u8; 8], what: &'static str) -> Result<(), FormatError> {
        if self.buf.len() < 8 || &self.buf[..8] != magic {
            return Err(FormatError::BadMagic { expected: what });
        }
        self.pos = 8;
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FormatError::Version(v)),
        }
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Trailing)
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Serialises encoded states; all must share one register width.
pub fn encode_dataset(n_qubits: usize, states: &[EncodedState]) -> Result<Vec<u8>, FormatError> {
    let len = 1usize << n_qubits;
    if let Some(s) = states.iter().find(|s| s.amplitudes.len() != len) {
        return Err(FormatError::Invalid(format!(
            "sample `{}` has {} amplitudes, dataset is {n_qubits}-qubit",
            s.id,
            s.amplitudes.len()
        )));
    }
    let mut out = Vec::with_capacity(24 + states.len() * (len * 8 + 32));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, n_qubits as u32);
    out.extend_from_slice(&(states.len() as u64).to_le_bytes());
    for s in states {
        put_str(&mut out, &s.id);
        put_f64s(&mut out, &[s.label_dg]);
        put_f64s(&mut out, &s.amplitudes);
    }
    Ok(out)
}

/// Returns the register width and the states.
pub fn decode_dataset(bytes: &[u8]) -> Result<(usize, Vec<EncodedState>), FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DATASET_MAGIC, "dataset")?;
    let n_qubits = r.u32()?;
    if n_qubits == 0 || n_qubits > MAX_FILE_QUBITS {
        return Err(FormatError::Invalid(format!("unsupported register width {n_qubits}")));
    }
    let count = r.u64()?;
    let len = 1usize << n_qubits;
    let mut states = Vec::new();
    for _ in 0..count {
        let id = r.string()?;
        let label_dg = r.f64()?;
        let amplitudes = r.f64s(len)?;
        states.push(EncodedState { id, amplitudes, label_dg });
    }
    r.finish()?;
    Ok((n_qubits as usize, states))
}

pub fn is_dataset_file(path: &Path) -> bool {
    fs::read(path).map(|b| b.starts_with(DATASET_MAGIC)).unwrap_or(false)
}

pub fn write_dataset(path: &Path, n_qubits: usize, states: &[EncodedState]) -> Result<(), FormatError> {
    let bytes = encode_dataset(n_qubits, states)?;
    fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub fn read_dataset(path: &Path) -> Result<(usize, Vec<EncodedState>), FormatError> {
    let bytes = fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
    decode_dataset(&bytes)
}

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchitectureSpec,
    pub params: ModelParams,
    /// Stored orthogonal projections, one per layer.
    pub projected: Vec<OrthFilter>,
}

impl Checkpoint {
    /// Projects the raw filters and bundles everything for saving.
    pub fn new(arch: &ArchitectureSpec, params: &ModelParams) -> Result<Self, FormatError> {
        params.check_against(arch)?;
        Ok(Self { arch: arch.clone(), params: params.clone(), projected: params.project()? })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_str(&mut out, self.arch.name());
        put_u32(&mut out, self.arch.n_qubits() as u32);
        put_u32(&mut out, self.arch.layers().len() as u32);
        for ((layer, raw), q) in self.arch.layers().iter().zip(&self.params.raw_filters).zip(&self.projected) {
            put_u32(&mut out, layer.arity() as u32);
            for &qb in layer.qubits() {
                put_u32(&mut out, qb as u32);
            }
            put_f64s(&mut out, raw.entries().as_slice());
            put_f64s(&mut out, q.matrix().as_slice());
        }
        put_f64s(&mut out, &[self.params.w0, self.params.w1]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        r.header(CHECKPOINT_MAGIC, "checkpoint")?;
        let name = r.string()?;
        let n_qubits = r.u32()?;
        if n_qubits == 0 || n_qubits > MAX_FILE_QUBITS {
            return Err(FormatError::Invalid(format!("unsupported register width {n_qubits}")));
        }
        let n_layers = r.u32()? as usize;
        let mut wiring = Vec::new();
        let mut raw_filters = Vec::new();
        let mut projected = Vec::new();
        for _ in 0..n_layers {
            let arity = r.u32()?;
            if arity == 0 || arity > n_qubits {
                return Err(FormatError::Invalid(format!("layer arity {arity} out of range")));
            }
            let qubits = (0..arity).map(|_| r.u32().map(|q| q as usize)).collect::<Result<Vec<_>, _>>()?;
            let d = 1usize << arity;
            let raw = SquareMatrix::from_row_major(d, r.f64s(d * d)?)?;
            let q = SquareMatrix::from_row_major(d, r.f64s(d * d)?)?;
            wiring.push(qubits);
            raw_filters.push(RawFilter::new(raw)?);
            projected.push(OrthFilter::new_unchecked(q));
        }
        let w0 = r.f64()?;
        let w1 = r.f64()?;
        r.finish()?;
        let arch = ArchitectureSpec::new(name, n_qubits as usize, wiring)?;
        Ok(Self { arch, params: ModelParams { raw_filters, w0, w1 }, projected })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.to_bytes()).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let bytes = fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

/// Reads a manifest: one path per line, `#` comments and blank lines
/// ignored, relative paths resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}
