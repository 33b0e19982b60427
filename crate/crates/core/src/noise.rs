//! Mixed-state evaluation under depolarizing and phase-damping noise.
//!
//! States, filters and the Kraus sets used here are all real, so density
//! matrices are stored as real symmetric `2^n x 2^n` matrices. The Pauli-Y
//! conjugation `Y ρ Y†` equals `J ρ Jᵀ` with `J = [[0, -1], [1, 0]]` for real
//! `ρ`, which is how it enters the depolarizing Kraus set.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{
    validate_for_state, ArchError, ArchitectureSpec, CompiledModel, ModelParams, Prediction,
};
use crate::linalg::{check_wiring, n_qubits_of, LinalgError, OrthFilter, QubitLayout};

/// Largest register evaluated as a density matrix without opting in.
/// 12 qubits need ~128 MB per matrix.
pub const MAX_DEFAULT_DM_QUBITS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("state norm² is {0}, expected 1")]
    NotNormalized(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error(
        "{n_qubits}-qubit density matrix needs {mib} MiB; pass --allow-large-dm to evaluate it"
    )]
    MemoryGate { n_qubits: usize, mib: usize },
    #[error("unknown noise strategy `{0}` (expected none, final_qubit or layer_wise)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Real symmetric density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: Vec<f64>,
}

impl DensityMatrix {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim() + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Builds from row-major data without validating state properties.
    pub fn from_row_major(n_qubits: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), 1 << (2 * n_qubits), "density matrix shape");
        Self { n_qubits, data }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// `max |ρ_ij - ρ_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in r + 1..d {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Probability that qubit 0 reads `|0⟩`: trace of the upper-left block.
    pub fn prob_zero(&self) -> f64 {
        (0..self.dim() / 2).map(|i| self.get(i, i)).sum()
    }

    fn transposed(&self) -> Self {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        out.par_chunks_mut(d).enumerate().for_each(|(r, row)| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.data[c * d + r];
            }
        });
        Self { n_qubits: self.n_qubits, data: out }
    }
}

/// `ρ = ψ ψᵀ`.
pub fn to_density(state: &[f64]) -> Result<DensityMatrix, NoiseError> {
    let n_qubits = n_qubits_of(state.len())
        .ok_or(LinalgError::StateLength { len: state.len(), n_qubits: 0 })?;
    let norm: f64 = state.iter().map(|a| a * a).sum();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(NoiseError::NotNormalized(norm));
    }
    let d = state.len();
    let mut data = vec![0.0; d * d];
    data.par_chunks_mut(d).zip(state.par_iter()).for_each(|(row, &a)| {
        for (v, &b) in row.iter_mut().zip(state) {
            *v = a * b;
        }
    });
    Ok(DensityMatrix { n_qubits, data })
}

/// Left-multiplies by the filter embedded on `layout`, i.e. `A ρ`.
fn left_apply(rho: &DensityMatrix, filter: &OrthFilter, layout: &QubitLayout) -> DensityMatrix {
    let dim = rho.dim();
    let q = filter.matrix();
    let d = q.dim();
    // For every row index: (local filter index, base offset).
    let mut row_map = vec![(0usize, 0usize); dim];
    for &base in &layout.bases {
        for (k, &off) in layout.local.iter().enumerate() {
            row_map[base + off] = (k, base);
        }
    }
    let mut out = vec![0.0; dim * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(r, row)| {
        let (k, base) = row_map[r];
        let coeffs = &q.as_slice()[k * d..(k + 1) * d];
        for (&c, &off) in coeffs.iter().zip(&layout.local) {
            if c == 0.0 {
                continue;
            }
            let src = &rho.data[(base + off) * dim..(base + off + 1) * dim];
            for (o, s) in row.iter_mut().zip(src) {
                *o += c * s;
            }
        }
    });
    DensityMatrix { n_qubits: rho.n_qubits, data: out }
}

/// Conjugation `ρ → A ρ Aᵀ` with the filter on the listed qubits.
pub fn apply_filter_dm(
    rho: &DensityMatrix,
    filter: &OrthFilter,
    qubits: &[usize],
) -> Result<DensityMatrix, NoiseError> {
    if filter.arity() != qubits.len() {
        return Err(LinalgError::ArityMismatch { filter: filter.arity(), given: qubits.len() }.into());
    }
    let layout = QubitLayout::new(rho.n_qubits, qubits)?;
    // A ρ Aᵀ = A (A ρ)ᵀ for symmetric ρ.
    let half = left_apply(rho, filter, &layout).transposed();
    Ok(left_apply(&half, filter, &layout))
}

/// Real 2x2 single-qubit Kraus operator.
pub type Kraus2 = [[f64; 2]; 2];

/// Applies `ρ → Σ_k K_k ρ K_kᵀ` on one qubit.
pub fn apply_kraus(rho: &DensityMatrix, qubit: usize, kraus: &[Kraus2]) -> Result<DensityMatrix, NoiseError> {
    check_wiring(rho.n_qubits, &[qubit])?;
    // super_op[r][c][a][b] = Σ_k K[r][a] K[c][b]
    let mut sup = [[[[0.0f64; 2]; 2]; 2]; 2];
    for k in kraus {
        for r in 0..2 {
            for c in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        sup[r][c][a][b] += k[r][a] * k[c][b];
                    }
                }
            }
        }
    }
    let dim = rho.dim();
    let bit = 1usize << (rho.n_qubits - 1 - qubit);
    let mut out = vec![0.0; dim * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
        let ri = usize::from(i & bit != 0);
        let rows = [i & !bit, i | bit];
        for (j, v) in row.iter_mut().enumerate() {
            let cj = usize::from(j & bit != 0);
            let cols = [j & !bit, j | bit];
            let s = &sup[ri][cj];
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    if s[a][b] != 0.0 {
                        acc += s[a][b] * rho.data[rows[a] * dim + cols[b]];
                    }
                }
            }
            *v = acc;
        }
    });
    Ok(DensityMatrix { n_qubits: rho.n_qubits, data: out })
}

fn check_probability(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NoiseError::Probability { name, value })
    }
}

/// Kraus set `{√(1-p) I, √(p/3) X, √(p/3) Y, √(p/3) Z}` with `Y` in its real
/// form.
pub fn depolarizing_kraus(p: f64) -> Result<[Kraus2; 4], NoiseError> {
    check_probability("depolarizing probability", p)?;
    let a = (1.0 - p).sqrt();
    let b = (p / 3.0).sqrt();
    Ok([
        [[a, 0.0], [0.0, a]],
        [[0.0, b], [b, 0.0]],
        [[0.0, -b], [b, 0.0]],
        [[b, 0.0], [0.0, -b]],
    ])
}

/// Kraus set `{diag(1, √(1-γ)), diag(0, √γ)}`.
pub fn phase_damping_kraus(gamma: f64) -> Result<[Kraus2; 2], NoiseError> {
    check_probability("phase damping probability", gamma)?;
    Ok([[[1.0, 0.0], [0.0, (1.0 - gamma).sqrt()]], [[0.0, 0.0], [0.0, gamma.sqrt()]]])
}

pub fn depolarize(rho: &DensityMatrix, qubit: usize, p: f64) -> Result<DensityMatrix, NoiseError> {
    apply_kraus(rho, qubit, &depolarizing_kraus(p)?)
}

pub fn phase_damp(rho: &DensityMatrix, qubit: usize, gamma: f64) -> Result<DensityMatrix, NoiseError> {
    apply_kraus(rho, qubit, &phase_damping_kraus(gamma)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStrategy {
    #[default]
    None,
    /// Noise on qubit 0 once, after the last layer.
    FinalQubit,
    /// Noise after every layer on each qubit that layer touched.
    LayerWise,
}

impl fmt::Display for NoiseStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseStrategy::None => "none",
            NoiseStrategy::FinalQubit => "final_qubit",
            NoiseStrategy::LayerWise => "layer_wise",
        })
    }
}

impl FromStr for NoiseStrategy {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "none" => Ok(NoiseStrategy::None),
            "final_qubit" => Ok(NoiseStrategy::FinalQubit),
            "layer_wise" => Ok(NoiseStrategy::LayerWise),
            _ => Err(NoiseError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub strategy: NoiseStrategy,
    pub depol_p: f64,
    pub phase_gamma: f64,
    /// Permit density matrices above [`MAX_DEFAULT_DM_QUBITS`].
    pub allow_large_dm: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { strategy: NoiseStrategy::None, depol_p: 0.05, phase_gamma: 0.03, allow_large_dm: false }
    }
}

impl NoiseConfig {
    pub fn with_strategy(strategy: NoiseStrategy) -> Self {
        Self { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        check_probability("depolarizing probability", self.depol_p)?;
        check_probability("phase damping probability", self.phase_gamma)
    }

    /// Refuses oversized density matrices unless explicitly allowed.
    pub fn check_size(&self, n_qubits: usize) -> Result<(), NoiseError> {
        if n_qubits > MAX_DEFAULT_DM_QUBITS && !self.allow_large_dm {
            let mib = (8usize << (2 * n_qubits)) >> 20;
            return Err(NoiseError::MemoryGate { n_qubits, mib });
        }
        Ok(())
    }
}

fn inject(rho: DensityMatrix, qubit: usize, cfg: &NoiseConfig) -> Result<DensityMatrix, NoiseError> {
    let rho = depolarize(&rho, qubit, cfg.depol_p)?;
    phase_damp(&rho, qubit, cfg.phase_gamma)
}

/// Density-matrix evolution of one encoded state through a compiled model.
pub fn evolve_density(
    state: &[f64],
    model: &CompiledModel,
    cfg: &NoiseConfig,
) -> Result<DensityMatrix, NoiseError> {
    cfg.validate()?;
    validate_for_state(&model.arch, state.len())?;
    cfg.check_size(model.arch.n_qubits())?;
    let mut rho = to_density(state)?;
    for (filter, layer) in model.filters.iter().zip(model.arch.layers()) {
        rho = apply_filter_dm(&rho, filter, layer.qubits())?;
        if cfg.strategy == NoiseStrategy::LayerWise {
            for &q in layer.qubits() {
                rho = inject(rho, q, cfg)?;
            }
        }
    }
    if cfg.strategy == NoiseStrategy::FinalQubit {
        rho = inject(rho, crate::forward::MEASURED_QUBIT, cfg)?;
    }
    Ok(rho)
}

pub fn noisy_predict(
    state: &[f64],
    model: &CompiledModel,
    cfg: &NoiseConfig,
) -> Result<Prediction, NoiseError> {
    let rho = evolve_density(state, model, cfg)?;
    Ok(Prediction::from_p0(rho.prob_zero(), model.w0, model.w1))
}

/// Mixed-state forward pass.
pub fn noisy_forward(
    state: &[f64],
    params: &ModelParams,
    arch: &ArchitectureSpec,
    cfg: &NoiseConfig,
) -> Result<Prediction, NoiseError> {
    noisy_predict(state, &CompiledModel::new(params, arch)?, cfg)
}
