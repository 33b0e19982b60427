//! C ABI over `qcnn-core`.
//!
//! Every fallible function returns a [`QcnnStatus`]; on failure a message is
//! available from [`qcnn_last_error`] on the same thread. Handles are opaque
//! and must be released with the matching `*_free` function. Panics never
//! cross the boundary; they surface as `QCNN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qcnn_core::forward::{builtin_arch, parse_arch, ArchError, ArchitectureSpec, CompiledModel, ModelParams};
use qcnn_core::ingest::{encode_complex, occupancy, parse_complex, pkd_to_dg, IngestError};
use qcnn_core::io::{Checkpoint, FormatError};
use qcnn_core::linalg::{count_params, project_orthogonal, LinalgError, RawFilter, SquareMatrix};
use qcnn_core::noise::{noisy_predict, NoiseConfig, NoiseError, NoiseStrategy};
use qcnn_core::trainer::init_params;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    MemoryGate = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcnnNoiseStrategy {
    None = 0,
    FinalQubit = 1,
    LayerWise = 2,
}

/// Opaque circuit architecture.
pub struct QcnnArch {
    spec: ArchitectureSpec,
}

/// Opaque trained or initialised model.
pub struct QcnnModel {
    params: ModelParams,
    compiled: CompiledModel,
}

struct Failure(QcnnStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(QcnnStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(QcnnStatus::InvalidArgument, msg.into())
    }
}

impl From<ArchError> for Failure {
    fn from(e: ArchError) -> Self {
        let status = match e {
            ArchError::StateLength { .. } => QcnnStatus::Shape,
            ArchError::Linalg(_) => QcnnStatus::Numerical,
            _ => QcnnStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<LinalgError> for Failure {
    fn from(e: LinalgError) -> Self {
        let status = match e {
            LinalgError::RankDeficient { .. } | LinalgError::SvdFailed => QcnnStatus::Numerical,
            LinalgError::StateLength { .. } | LinalgError::Shape { .. } => QcnnStatus::Shape,
            _ => QcnnStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure(QcnnStatus::InvalidArgument, e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let status = if matches!(e, FormatError::Io { .. }) { QcnnStatus::Io } else { QcnnStatus::Format };
        Failure(status, e.to_string())
    }
}

impl From<NoiseError> for Failure {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::MemoryGate { .. } => Failure(QcnnStatus::MemoryGate, e.to_string()),
            NoiseError::Arch(a) => a.into(),
            NoiseError::Linalg(l) => l.into(),
            _ => Failure(QcnnStatus::InvalidArgument, e.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QcnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            QcnnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            QcnnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn qcnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qcnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Voxel occupancy for a distance-to-radius ratio `r`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_occupancy(r: f64, out: *mut f64) -> QcnnStatus {
    guard(|| {
        *out_arg(out, "out")? = occupancy(r)?;
        Ok(())
    })
}

/// Binding free energy in kcal/mol for a pKd value.
#[no_mangle]
pub extern "C" fn qcnn_pkd_to_dg(pkd: f64) -> f64 {
    pkd_to_dg(pkd)
}

/// Looks up a builtin architecture (`fig1a`, `fig1b`, `fig1c`, `fig1f`, `fig1g`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_arch_builtin(name: *const c_char, out: *mut *mut QcnnArch) -> QcnnStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let spec = builtin_arch(str_arg(name, "name")?)?;
        *slot = Box::into_raw(Box::new(QcnnArch { spec }));
        Ok(())
    })
}

/// Parses one architecture from the text DSL.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_arch_parse(text: *const c_char, out: *mut *mut QcnnArch) -> QcnnStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let spec = parse_arch(str_arg(text, "text")?)?;
        *slot = Box::into_raw(Box::new(QcnnArch { spec }));
        Ok(())
    })
}

/// # Safety
/// `arch` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qcnn_arch_free(arch: *mut QcnnArch) {
    if !arch.is_null() {
        drop(Box::from_raw(arch));
    }
}

/// Register width, or 0 for a null handle.
///
/// # Safety
/// `arch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qcnn_arch_n_qubits(arch: *const QcnnArch) -> usize {
    arch.as_ref().map_or(0, |a| a.spec.n_qubits())
}

/// Total and independent trainable parameter counts.
///
/// # Safety
/// `arch` must be a live handle; `total` and `independent` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_arch_count_params(
    arch: *const QcnnArch,
    total: *mut usize,
    independent: *mut usize,
) -> QcnnStatus {
    guard(|| {
        let (t, i) = count_params(&ref_arg(arch, "arch")?.spec);
        *out_arg(total, "total")? = t;
        *out_arg(independent, "independent")? = i;
        Ok(())
    })
}

fn make_model(params: ModelParams, arch: &ArchitectureSpec) -> Result<*mut QcnnModel, Failure> {
    let compiled = CompiledModel::new(&params, arch)?;
    Ok(Box::into_raw(Box::new(QcnnModel { params, compiled })))
}

/// Seeded random model for `arch`.
///
/// # Safety
/// `arch` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_init(arch: *const QcnnArch, seed: u64, out: *mut *mut QcnnModel) -> QcnnStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let spec = &ref_arg(arch, "arch")?.spec;
        *slot = make_model(init_params(spec, seed), spec)?;
        Ok(())
    })
}

/// Loads a checkpoint written by `qcnn train` or [`qcnn_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_load(path: *const c_char, out: *mut *mut QcnnModel) -> QcnnStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = ptr::null_mut();
        let ck = Checkpoint::load(Path::new(str_arg(path, "path")?))?;
        *slot = make_model(ck.params, &ck.arch)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_save(model: *const QcnnModel, path: *const c_char) -> QcnnStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        Checkpoint::new(&m.compiled.arch, &m.params)?.save(Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_free(model: *mut QcnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Register width of the model's architecture, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_n_qubits(model: *const QcnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.compiled.arch.n_qubits())
}

/// Noise-free prediction for one encoded state of `len` amplitudes.
///
/// # Safety
/// `state` must point to `len` readable doubles; `p0` and `dg` valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_predict(
    model: *const QcnnModel,
    state: *const f64,
    len: usize,
    p0: *mut f64,
    dg: *mut f64,
) -> QcnnStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let pred = m.compiled.predict(slice_arg(state, len, "state")?)?;
        *out_arg(p0, "p0")? = pred.p0;
        *out_arg(dg, "dg")? = pred.dg_pred;
        Ok(())
    })
}

/// Mixed-state prediction under the given noise model. Registers above 10
/// qubits are refused with `QCNN_STATUS_MEMORY_GATE` unless
/// `allow_large_dm` is set.
///
/// # Safety
/// As [`qcnn_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_predict_noisy(
    model: *const QcnnModel,
    state: *const f64,
    len: usize,
    strategy: QcnnNoiseStrategy,
    depol_p: f64,
    phase_gamma: f64,
    allow_large_dm: bool,
    p0: *mut f64,
    dg: *mut f64,
) -> QcnnStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let strategy = match strategy {
            QcnnNoiseStrategy::None => NoiseStrategy::None,
            QcnnNoiseStrategy::FinalQubit => NoiseStrategy::FinalQubit,
            QcnnNoiseStrategy::LayerWise => NoiseStrategy::LayerWise,
        };
        let cfg = NoiseConfig { strategy, depol_p, phase_gamma, allow_large_dm };
        let pred = noisy_predict(slice_arg(state, len, "state")?, &m.compiled, &cfg)?;
        *out_arg(p0, "p0")? = pred.p0;
        *out_arg(dg, "dg")? = pred.dg_pred;
        Ok(())
    })
}

/// Runs the ingest pipeline on one complex in the line-based text format and
/// writes `2^n_qubits` amplitudes to `amplitudes` (whose capacity is `len`)
/// and the ΔG label to `label_dg`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `amplitudes` must point to `len`
/// writable doubles; `label_dg` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qcnn_encode_complex(
    text: *const c_char,
    n_qubits: usize,
    amplitudes: *mut f64,
    len: usize,
    label_dg: *mut f64,
) -> QcnnStatus {
    guard(|| {
        let sample = parse_complex("ffi", str_arg(text, "text")?)?;
        let state = encode_complex(&sample, n_qubits)?;
        if len != state.amplitudes.len() {
            return Err(Failure(
                QcnnStatus::Shape,
                format!("output buffer holds {len} values, encoding has {}", state.amplitudes.len()),
            ));
        }
        if amplitudes.is_null() {
            return Err(Failure::null("amplitudes"));
        }
        std::slice::from_raw_parts_mut(amplitudes, len).copy_from_slice(&state.amplitudes);
        *out_arg(label_dg, "label_dg")? = state.label_dg;
        Ok(())
    })
}

/// Nearest orthogonal matrix to a `dim × dim` row-major matrix; `dim` must
/// be a power of two. `out` may alias `raw`.
///
/// # Safety
/// `raw` must point to `dim * dim` readable doubles and `out` to as many
/// writable ones.
#[no_mangle]
pub unsafe extern "C" fn qcnn_project_orthogonal(raw: *const f64, dim: usize, out: *mut f64) -> QcnnStatus {
    guard(|| {
        let n = dim.checked_mul(dim).ok_or_else(|| Failure::invalid("dim too large"))?;
        let m = SquareMatrix::from_row_major(dim, slice_arg(raw, n, "raw")?.to_vec())?;
        let q = project_orthogonal(&RawFilter::new(m)?)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(q.matrix().as_slice());
        Ok(())
    })
}
