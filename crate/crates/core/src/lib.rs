//! Quantum-inspired convolutional regression of protein-ligand binding
//! free energy, simulated classically.
//!
//! Complexes are voxelized into an 8-channel occupancy grid, pooled and
//! amplitude-encoded into a 9- or 12-qubit real state, then passed through
//! layers of orthogonal filters. The probability of reading qubit 0 as `|0>`
//! is mapped affinely to ΔG.

pub mod forward;
pub mod cli;
pub mod config;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod trainer;
pub mod verify;

pub use forward::{builtin_arch, builtin_archs, forward, parse_arch, ArchitectureSpec, CompiledModel, ModelParams, Prediction};
pub use ingest::{encode_complex, parse_complex, pkd_to_dg, ComplexSample, EncodedState};
pub use io::Checkpoint;
pub use linalg::{count_params, project_orthogonal, OrthFilter, RawFilter, SquareMatrix};
pub use metrics::Metrics;
pub use noise::{noisy_forward, NoiseConfig, NoiseStrategy};
pub use trainer::{train, TrainConfig, TrainOutcome};
