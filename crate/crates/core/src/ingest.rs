//! Complex parsing, occupancy voxelization, pooling and amplitude encoding.
//!
//! The pipeline is `parse_complex -> voxelize -> downsample ->
//! normalize_encode`. Grids are centred on the unweighted ligand centroid and
//! sampled at voxel centres.

use std::fmt;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::forward::{builtin_arch, ArchError, ArchitectureSpec, CompiledModel, ModelParams};
use crate::linalg::{RawFilter, SquareMatrix};

/// Voxels per axis of the full-resolution grid.
pub const FULL_SIDE: usize = 32;
/// Edge length of the grid in Å.
pub const GRID_EDGE: f64 = 16.0;
/// Å per voxel at full resolution.
pub const SPACING: f64 = GRID_EDGE / FULL_SIDE as f64;
pub const CHANNELS: usize = 8;

/// Gas constant in kcal/(mol·K).
pub const GAS_CONSTANT: f64 = 1.98720425864e-3;
/// Temperature in K used for the pKd conversion.
pub const TEMPERATURE: f64 = 298.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no `pkd <value>` header line")]
    MissingLabel,
    #[error("degenerate complex: {protein} protein atoms, {ligand} ligand atoms")]
    DegenerateComplex { protein: usize, ligand: usize },
    #[error("occupancy ratio must be finite and non-negative, got {0}")]
    Domain(f64),
    #[error("cannot pool a {from}-voxel axis down to {to}")]
    UnsupportedPooling { from: usize, to: usize },
    #[error("{role} channels have zero occupancy; sample cannot be normalized")]
    DegenerateSample { role: Role },
    #[error("grid side {0} does not give a power-of-two amplitude count")]
    NotEncodable(usize),
    #[error("no pooling target for {0} qubits (supported: 9, 12)")]
    UnsupportedQubits(usize),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Protein,
    Ligand,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Protein => "protein",
            Role::Ligand => "ligand",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    C,
    N,
    O,
    Other,
}

impl Element {
    pub const ALL: [Element; 4] = [Element::C, Element::N, Element::O, Element::Other];

    /// Classifies an element symbol. Returns `None` for hydrogen isotopes.
    pub fn classify(symbol: &str) -> Option<Element> {
        match symbol.to_ascii_uppercase().as_str() {
            "H" | "D" | "T" => None,
            "C" => Some(Element::C),
            "N" => Some(Element::N),
            "O" => Some(Element::O),
            _ => Some(Element::Other),
        }
    }

    fn offset(self) -> usize {
        match self {
            Element::C => 0,
            Element::N => 1,
            Element::O => 2,
            Element::Other => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomRecord {
    pub role: Role,
    pub element: Element,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSample {
    pub id: String,
    pub atoms: Vec<AtomRecord>,
    pub pkd: f64,
}

impl ComplexSample {
    pub fn new(id: impl Into<String>, atoms: Vec<AtomRecord>, pkd: f64) -> Result<Self, IngestError> {
        let ligand = atoms.iter().filter(|a| a.role == Role::Ligand).count();
        let protein = atoms.len() - ligand;
        if ligand == 0 || protein == 0 {
            return Err(IngestError::DegenerateComplex { protein, ligand });
        }
        Ok(Self { id: id.into(), atoms, pkd })
    }

    /// Unweighted mean of ligand atom coordinates.
    pub fn ligand_centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        let mut n = 0.0;
        for a in self.atoms.iter().filter(|a| a.role == Role::Ligand) {
            for k in 0..3 {
                c[k] += a.position[k];
            }
            n += 1.0;
        }
        c.map(|v| v / n)
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            for k in 0..3 {
                a.position[k] += shift[k];
            }
        }
        out
    }
}

/// Parses the line-based complex format:
///
/// ```text
/// pkd 6.0
/// L C 0.0 0.0 0.0
/// P O 1.0 0.0 0.0
/// ```
///
/// Blank lines and `#` comments are ignored. Hydrogens are dropped.
pub fn parse_complex(id: &str, text: &str) -> Result<ComplexSample, IngestError> {
    let mut pkd = None;
    let mut atoms = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| IngestError::Malformed { line: line_no, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "pkd" => {
                if fields.len() != 2 {
                    return Err(malformed("expected `pkd <value>`".into()));
                }
                if pkd.is_some() {
                    return Err(malformed("duplicate pkd header".into()));
                }
                let v: f64 = fields[1]
                    .parse()
                    .map_err(|_| malformed(format!("invalid pkd `{}`", fields[1])))?;
                if !v.is_finite() {
                    return Err(malformed("pkd must be finite".into()));
                }
                pkd = Some(v);
            }
            tag @ ("P" | "L") => {
                if fields.len() != 5 {
                    return Err(malformed(format!(
                        "atom line needs `{tag} <element> <x> <y> <z>`, got {} fields",
                        fields.len()
                    )));
                }
                let mut position = [0.0; 3];
                for (k, f) in fields[2..].iter().enumerate() {
                    position[k] = f
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| malformed(format!("invalid coordinate `{f}`")))?;
                }
                let Some(element) = Element::classify(fields[1]) else {
                    continue;
                };
                let role = if tag == "P" { Role::Protein } else { Role::Ligand };
                atoms.push(AtomRecord { role, element, position });
            }
            other => return Err(malformed(format!("unknown record `{other}`"))),
        }
    }
    let pkd = pkd.ok_or(IngestError::MissingLabel)?;
    ComplexSample::new(id, atoms, pkd)
}

/// Van der Waals radius in Å.
pub fn vdw_radius(element: Element) -> f64 {
    match element {
        Element::C => 1.9,
        Element::N => 1.8,
        Element::O => 1.7,
        Element::Other => 2.0,
    }
}

/// Atomic occupancy as a function of `r = distance / vdw_radius`.
pub fn occupancy(r: f64) -> Result<f64, IngestError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(IngestError::Domain(r));
    }
    Ok(occupancy_unchecked(r))
}

#[inline]
fn occupancy_unchecked(r: f64) -> f64 {
    if r < 1.0 {
        (-2.0 * r * r).exp()
    } else if r < 1.5 {
        let t = (3.0 - 2.0 * r) / std::f64::consts::E;
        t * t
    } else {
        0.0
    }
}

/// Channel layout: ligand C, N, O, Other then protein C, N, O, Other.
pub fn channel_index(role: Role, element: Element) -> usize {
    let base = match role {
        Role::Ligand => 0,
        Role::Protein => 4,
    };
    base + element.offset()
}

/// Eight-channel cubic occupancy grid, stored `[channel][x][y][z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    side: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(side: usize, spacing: f64) -> Self {
        Self { side, spacing, values: vec![0.0; CHANNELS * side * side * side] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, channel: usize, x: usize, y: usize, z: usize) -> usize {
        let s = self.side;
        channel * s * s * s + x * s * s + y * s + z
    }

    pub fn get(&self, channel: usize, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(channel, x, y, z)]
    }

    pub fn set(&mut self, channel: usize, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(channel, x, y, z);
        self.values[i] = v;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let n = self.side.pow(3);
        &self.values[channel * n..(channel + 1) * n]
    }

    fn role_sq_sum(&self, role: Role) -> f64 {
        Element::ALL
            .iter()
            .flat_map(|&e| self.channel(channel_index(role, e)))
            .map(|v| v * v)
            .sum()
    }
}

/// Coordinate of voxel centre `i` relative to the grid centre.
#[inline]
fn voxel_center(i: usize) -> f64 {
    (i as f64 + 0.5) * SPACING - GRID_EDGE / 2.0
}

/// Index range of voxel centres within `reach` of coordinate `p`.
fn reach_range(p: f64, reach: f64) -> std::ops::RangeInclusive<usize> {
    let offset = GRID_EDGE / 2.0 - SPACING / 2.0;
    let lo = ((p - reach + offset) / SPACING).ceil().max(0.0);
    let hi = ((p + reach + offset) / SPACING).floor().min((FULL_SIDE - 1) as f64);
    if lo > hi {
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    lo as usize..=hi as usize
}

/// Sums per-atom occupancies on the 32³ grid centred on the ligand centroid.
pub fn voxelize(sample: &ComplexSample) -> VoxelGrid {
    let centre = sample.ligand_centroid();
    let mut grid = VoxelGrid::zeros(FULL_SIDE, SPACING);
    for atom in &sample.atoms {
        let ch = channel_index(atom.role, atom.element);
        let radius = vdw_radius(atom.element);
        let reach = 1.5 * radius;
        let p = [
            atom.position[0] - centre[0],
            atom.position[1] - centre[1],
            atom.position[2] - centre[2],
        ];
        for x in reach_range(p[0], reach) {
            let dx = voxel_center(x) - p[0];
            for y in reach_range(p[1], reach) {
                let dy = voxel_center(y) - p[1];
                for z in reach_range(p[2], reach) {
                    let dz = voxel_center(z) - p[2];
                    let r = (dx * dx + dy * dy + dz * dz).sqrt() / radius;
                    let v = occupancy_unchecked(r);
                    if v > 0.0 {
                        let i = grid.index(ch, x, y, z);
                        grid.values[i] += v;
                    }
                }
            }
        }
    }
    grid
}

/// Non-overlapping cubic max-pooling per channel.
pub fn downsample(grid: &VoxelGrid, target_side: usize) -> Result<VoxelGrid, IngestError> {
    let side = grid.side;
    if target_side == 0 || target_side > side || side % target_side != 0 {
        return Err(IngestError::UnsupportedPooling { from: side, to: target_side });
    }
    let w = side / target_side;
    let mut out = VoxelGrid::zeros(target_side, grid.spacing * w as f64);
    for ch in 0..CHANNELS {
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    let v = grid.get(ch, x, y, z);
                    let i = out.index(ch, x / w, y / w, z / w);
                    if v > out.values[i] {
                        out.values[i] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Unit-norm amplitude vector with its ΔG label in kcal/mol.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    pub id: String,
    pub amplitudes: Vec<f64>,
    pub label_dg: f64,
}

impl EncodedState {
    pub fn n_qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }
}

/// Scales protein and ligand channels to squared sum 0.5 each and flattens
/// the grid to `channel·side³ + x·side² + y·side + z`.
pub fn normalize_encode(
    grid: &VoxelGrid,
    id: impl Into<String>,
    label_dg: f64,
) -> Result<EncodedState, IngestError> {
    if !grid.side.is_power_of_two() {
        return Err(IngestError::NotEncodable(grid.side));
    }
    let scale_for = |role| {
        let s = grid.role_sq_sum(role);
        if s > 0.0 {
            Ok((0.5 / s).sqrt())
        } else {
            Err(IngestError::DegenerateSample { role })
        }
    };
    let lig = scale_for(Role::Ligand)?;
    let pro = scale_for(Role::Protein)?;
    let per_channel = grid.side.pow(3);
    let amplitudes = grid
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * if i / per_channel < 4 { lig } else { pro })
        .collect();
    Ok(EncodedState { id: id.into(), amplitudes, label_dg })
}

/// Binding free energy in kcal/mol from a pKd value.
pub fn pkd_to_dg(pkd: f64) -> f64 {
    -std::f64::consts::LN_10 * GAS_CONSTANT * TEMPERATURE * pkd
}

/// Pooled grid side for a register width: 9 qubits use 4³, 12 use 8³.
pub fn pooled_side(n_qubits: usize) -> Result<usize, IngestError> {
    match n_qubits {
        9 => Ok(4),
        12 => Ok(8),
        n => Err(IngestError::UnsupportedQubits(n)),
    }
}

/// Full ingest pipeline for one complex.
pub fn encode_complex(sample: &ComplexSample, n_qubits: usize) -> Result<EncodedState, IngestError> {
    let pooled = downsample(&voxelize(sample), pooled_side(n_qubits)?)?;
    normalize_encode(&pooled, sample.id.clone(), pkd_to_dg(sample.pkd))
}

/// Encodes many complexes in parallel, preserving input order. Degenerate
/// samples are logged and dropped.
pub fn encode_all(samples: &[ComplexSample], n_qubits: usize) -> Result<Vec<EncodedState>, IngestError> {
    pooled_side(n_qubits)?;
    let results: Vec<_> = samples.par_iter().map(|s| encode_complex(s, n_qubits)).collect();
    let mut out = Vec::with_capacity(samples.len());
    for (sample, r) in samples.iter().zip(results) {
        match r {
            Ok(state) => out.push(state),
            Err(e) => warn!("skipping {}: {e}", sample.id),
        }
    }
    Ok(out)
}

/// Synthetic teacher-student dataset settings.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub count: usize,
    pub n_qubits: usize,
    /// Standard deviation of Gaussian label noise, kcal/mol.
    pub noise_sigma: f64,
    /// Teacher architecture; defaults to fig1a (9 qubits) or fig1f (12).
    pub teacher: Option<ArchitectureSpec>,
}

impl SynthOptions {
    pub fn new(seed: u64, count: usize, n_qubits: usize) -> Self {
        Self { seed, count, n_qubits, noise_sigma: 0.5, teacher: None }
    }
}

const TEACHER_STREAM: u64 = u64::MAX;

/// Hidden teacher model used to label synthetic data. Filters are uniform
/// `[0, 1)`; readout weights sit in a ΔG-like range so labels look like
/// binding free energies (roughly -14 to -2 kcal/mol).
pub fn teacher_params(seed: u64, arch: &ArchitectureSpec) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TEACHER_STREAM);
    let raw_filters = arch
        .layers()
        .iter()
        .map(|layer| {
            let d = 1 << layer.arity();
            let m = SquareMatrix::from_fn(d, |_, _| rng.random::<f64>());
            RawFilter::new(m).expect("finite entries")
        })
        .collect();
    let w0 = rng.random_range(-14.0..-10.0);
    let w1 = rng.random_range(-6.0..-2.0);
    ModelParams { raw_filters, w0, w1 }
}

fn random_element<R: Rng>(rng: &mut R) -> Element {
    match rng.random_range(0..100) {
        0..60 => Element::C,
        60..75 => Element::N,
        75..95 => Element::O,
        _ => Element::Other,
    }
}

fn random_unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return v.map(|c| c / n);
        }
    }
}

/// Random ligand blob surrounded by a protein shell, placed at a random
/// offset in space.
pub fn random_complex<R: Rng>(rng: &mut R, id: String) -> ComplexSample {
    let origin = [
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
    ];
    let spread = Normal::new(0.0, 1.8).expect("valid normal");
    let n_lig = rng.random_range(8..=24);
    let n_pro = rng.random_range(60..=160);
    let mut atoms = Vec::with_capacity(n_lig + n_pro);
    for _ in 0..n_lig {
        let position = [
            origin[0] + spread.sample(rng),
            origin[1] + spread.sample(rng),
            origin[2] + spread.sample(rng),
        ];
        atoms.push(AtomRecord { role: Role::Ligand, element: random_element(rng), position });
    }
    for _ in 0..n_pro {
        let dir = random_unit_vector(rng);
        let dist = rng.random_range(3.5..9.5);
        let position = [0, 1, 2].map(|k| origin[k] + dir[k] * dist);
        atoms.push(AtomRecord { role: Role::Protein, element: random_element(rng), position });
    }
    let pkd = rng.random_range(2.0..11.0);
    ComplexSample::new(id, atoms, pkd).expect("both roles present")
}

/// Deterministic synthetic dataset with default options.
pub fn synth_dataset(seed: u64, count: usize, n_qubits: usize) -> Result<Vec<EncodedState>, IngestError> {
    synth_dataset_with(&SynthOptions::new(seed, count, n_qubits))
}

/// Random complexes go through the full ingest pipeline; labels come from
/// a hidden teacher QCNN plus Gaussian noise. Sample `i` draws from its own
/// ChaCha stream so generation parallelises without changing the output.
pub fn synth_dataset_with(opts: &SynthOptions) -> Result<Vec<EncodedState>, IngestError> {
    let side = pooled_side(opts.n_qubits)?;
    let arch = match &opts.teacher {
        Some(a) => a.clone(),
        None => builtin_arch(if opts.n_qubits == 9 { "fig1a" } else { "fig1f" })?,
    };
    if arch.n_qubits() != opts.n_qubits {
        return Err(ArchError::StateLength { len: 1 << opts.n_qubits, n_qubits: arch.n_qubits() }.into());
    }
    let teacher = CompiledModel::new(&teacher_params(opts.seed, &arch), &arch)?;
    let noise = Normal::new(0.0, opts.noise_sigma.max(0.0)).expect("non-negative sigma");
    (0..opts.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let id = format!("synth-{i:05}");
            let grid = loop {
                let sample = random_complex(&mut rng, id.clone());
                let pooled = downsample(&voxelize(&sample), side)?;
                match normalize_encode(&pooled, id.clone(), 0.0) {
                    Ok(state) => break state,
                    Err(IngestError::DegenerateSample { .. }) => continue,
                    Err(e) => return Err(e),
                }
            };
            let clean = teacher.predict(&grid.amplitudes)?.dg_pred;
            Ok(EncodedState { label_dg: clean + noise.sample(&mut rng), ..grid })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_complex() {
        let s = parse_complex("x", "pkd 6.0\nL C 0 0 0\nP O 1 0 0").unwrap();
        assert_eq!(s.atoms.len(), 2);
        assert_eq!(s.pkd, 6.0);
        assert_eq!(s.atoms[1].role, Role::Protein);
        assert_eq!(s.atoms[1].element, Element::O);
    }

    #[test]
    fn unknown_elements_map_to_other() {
        let s = parse_complex("x", "pkd 2.5\nL Fe 0 0 0\nP N 3 1 2").unwrap();
        assert_eq!(s.atoms[0].element, Element::Other);
        assert_eq!(s.atoms[1].element, Element::N);
        assert_eq!(Element::classify("Cl"), Some(Element::Other));
    }

    #[test]
    fn hydrogens_are_dropped() {
        let s = parse_complex("x", "pkd 1\nL C 0 0 0\nL H 1 0 0\nP H 2 0 0\nP N 3 0 0").unwrap();
        assert_eq!(s.atoms.len(), 2);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_complex("x", "L C 0 0").unwrap_err(),
            IngestError::Malformed { line: 1, .. }
        ));
        assert_eq!(
            parse_complex("x", "L C 0 0 0\nP C 1 1 1").unwrap_err(),
            IngestError::MissingLabel
        );
        assert_eq!(
            parse_complex("x", "pkd 3\nL C 0 0 0").unwrap_err(),
            IngestError::DegenerateComplex { protein: 0, ligand: 1 }
        );
        assert!(matches!(
            parse_complex("x", "pkd 3\nL C 0 0 zero\nP C 1 1 1").unwrap_err(),
            IngestError::Malformed { line: 2, .. }
        ));
        assert!(matches!(
            parse_complex("x", "pkd 3\nQ C 0 0 0").unwrap_err(),
            IngestError::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn radii() {
        assert_eq!(vdw_radius(Element::C), 1.9);
        assert_eq!(vdw_radius(Element::N), 1.8);
        assert_eq!(vdw_radius(Element::O), 1.7);
        assert_eq!(vdw_radius(Element::Other), 2.0);
    }

    #[test]
    fn occupancy_branches() {
        assert_eq!(occupancy(0.0).unwrap(), 1.0);
        assert_eq!(occupancy(1.5).unwrap(), 0.0);
        assert_eq!(occupancy(7.0).unwrap(), 0.0);
        let inner = (-2.0f64).exp();
        let outer = ((3.0 - 2.0) / std::f64::consts::E).powi(2);
        assert!((occupancy(1.0).unwrap() - inner).abs() < 1e-15);
        assert!((inner - outer).abs() < 1e-15);
        assert!(matches!(occupancy(-0.1), Err(IngestError::Domain(_))));
        assert!(occupancy(f64::NAN).is_err());
    }

    #[test]
    fn channel_ordering() {
        assert_eq!(channel_index(Role::Ligand, Element::C), 0);
        assert_eq!(channel_index(Role::Ligand, Element::Other), 3);
        assert_eq!(channel_index(Role::Protein, Element::C), 4);
        assert_eq!(channel_index(Role::Protein, Element::Other), 7);
    }

    #[test]
    fn single_ligand_carbon_peak() {
        let s = parse_complex("x", "pkd 1\nL C 5 5 5\nP O 40 40 40").unwrap();
        let g = voxelize(&s);
        // Centre voxels 15 and 16 sit at ∓0.25 Å.
        let d = (3.0f64 * 0.25 * 0.25).sqrt();
        let expected = (-2.0 * (d / 1.9).powi(2)).exp();
        // Exact value is 0.901336; the commonly quoted 0.90132 is a rounded hand figure.
        assert!((expected - 0.90132).abs() < 5e-5);
        for &x in &[15, 16] {
            for &y in &[15, 16] {
                for &z in &[15, 16] {
                    assert!((g.get(0, x, y, z) - expected).abs() < 1e-12);
                }
            }
        }
        let max = g.channel(0).iter().cloned().fold(0.0, f64::max);
        assert!((max - expected).abs() < 1e-12);
        // The far protein atom is out of reach.
        assert!(g.channel(6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_channels_stay_zero() {
        let s = parse_complex("x", "pkd 1\nL C 0 0 0\nP O 2 0 0\nP C 0 3 0").unwrap();
        let g = voxelize(&s);
        assert_eq!(g.channel(channel_index(Role::Ligand, Element::N)).iter().filter(|&&v| v != 0.0).count(), 0);
        assert_eq!(g.channel(channel_index(Role::Protein, Element::N)).iter().filter(|&&v| v != 0.0).count(), 0);
    }

    #[test]
    fn coincident_atoms_double() {
        let one = voxelize(&parse_complex("a", "pkd 1\nL C 0 0 0\nP O 3 0 0").unwrap());
        let two = voxelize(&parse_complex("b", "pkd 1\nL C 0 0 0\nL C 0 0 0\nP O 3 0 0").unwrap());
        for (a, b) in one.channel(0).iter().zip(two.channel(0)) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn pooling_cases() {
        let zero = VoxelGrid::zeros(32, SPACING);
        assert!(downsample(&zero, 8).unwrap().values().iter().all(|&v| v == 0.0));

        let mut single = VoxelGrid::zeros(32, SPACING);
        single.set(5, 9, 17, 30, 0.7);
        let p = downsample(&single, 8).unwrap();
        assert_eq!(p.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(p.get(5, 2, 4, 7), 0.7);

        let mut c = VoxelGrid::zeros(32, SPACING);
        c.values.iter_mut().for_each(|v| *v = 0.3);
        for side in [8, 4] {
            let p = downsample(&c, side).unwrap();
            assert_eq!(p.side(), side);
            assert!(p.values().iter().all(|&v| v == 0.3));
            assert_eq!(p.spacing() * side as f64, GRID_EDGE);
        }
        assert!(matches!(downsample(&c, 5), Err(IngestError::UnsupportedPooling { .. })));
        assert!(matches!(downsample(&c, 0), Err(IngestError::UnsupportedPooling { .. })));
    }

    #[test]
    fn normalization_single_voxels() {
        let mut g = VoxelGrid::zeros(4, 4.0);
        g.set(5, 1, 2, 3, 3.0);
        g.set(1, 0, 0, 1, 0.2);
        let e = normalize_encode(&g, "s", -3.0).unwrap();
        assert_eq!(e.amplitudes.len(), 512);
        let h = 0.5f64.sqrt();
        let nz: Vec<(usize, f64)> =
            e.amplitudes.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        assert_eq!(nz.len(), 2);
        assert_eq!(nz[0].0, 64 + 1);
        assert_eq!(nz[1].0, 5 * 64 + 16 + 2 * 4 + 3);
        assert!((nz[0].1 - h).abs() < 1e-15 && (nz[1].1 - h).abs() < 1e-15);
        assert_eq!(normalize_encode(&VoxelGrid::zeros(8, 2.0), "s", 0.0).unwrap_err(),
            IngestError::DegenerateSample { role: Role::Ligand });
        let mut only_lig = VoxelGrid::zeros(8, 2.0);
        only_lig.set(0, 0, 0, 0, 1.0);
        let e = normalize_encode(&only_lig, "s", 0.0).unwrap_err();
        assert_eq!(e, IngestError::DegenerateSample { role: Role::Protein });
    }

    #[test]
    fn encoding_lengths() {
        let s = parse_complex("x", "pkd 5\nL C 0 0 0\nL N 1 1 0\nP O 2 2 2\nP C -3 0 1").unwrap();
        assert_eq!(encode_complex(&s, 9).unwrap().amplitudes.len(), 512);
        assert_eq!(encode_complex(&s, 12).unwrap().amplitudes.len(), 4096);
        assert!(encode_complex(&s, 10).is_err());
    }

    #[test]
    fn pkd_conversion() {
        assert_eq!(pkd_to_dg(0.0), 0.0);
        assert!((pkd_to_dg(6.0) + 8.186).abs() < 1e-3);
        assert!((pkd_to_dg(-1.0) - 1.364).abs() < 1e-3);
    }

    #[test]
    fn synth_is_deterministic_and_valid() {
        let a = synth_dataset(11, 6, 9).unwrap();
        let b = synth_dataset(11, 6, 9).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.amplitudes.len(), 512);
            let total: f64 = s.amplitudes.iter().map(|v| v * v).sum();
            let lig: f64 = s.amplitudes[..256].iter().map(|v| v * v).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!((lig - 0.5).abs() < 1e-9);
            assert!(s.label_dg.is_finite());
        }
        assert!(synth_dataset(11, 0, 9).unwrap().is_empty());
        assert_ne!(synth_dataset(12, 1, 9).unwrap(), synth_dataset(11, 1, 9).unwrap());
    }
}
