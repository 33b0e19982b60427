//! Built-in numerical self-checks: statevector vs density-matrix engines,
//! block-parallel application, and checkpoint audits.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::forward::{block_parallel_apply, builtin_archs, ArchitectureSpec, CompiledModel};
use crate::io::Checkpoint;
use crate::linalg::{apply_filter, project_orthogonal, RawFilter, SquareMatrix};
use crate::noise::{noisy_predict, NoiseConfig, MAX_DEFAULT_DM_QUBITS};
use crate::trainer::init_params;

pub const ENGINE_TOLERANCE: f64 = 1e-10;
pub const BLOCK_TOLERANCE: f64 = 1e-12;
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_deviation: f64,
    pub threshold: f64,
    pub outcome: Outcome,
}

impl CheckResult {
    fn measured(name: impl Into<String>, max_deviation: f64, threshold: f64) -> Self {
        let outcome = if max_deviation <= threshold { Outcome::Pass } else { Outcome::Fail };
        Self { name: name.into(), max_deviation, threshold, outcome }
    }

    fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        Self { name: name.into(), max_deviation: 0.0, threshold: 0.0, outcome: Outcome::Skipped(why.into()) }
    }

    pub fn failed(&self) -> bool {
        self.outcome == Outcome::Fail
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Outcome::Skipped(why) => write!(f, "SKIP {} ({why})", self.name),
            o => write!(
                f,
                "{} {}: max deviation {:.3e} (threshold {:.0e})",
                if *o == Outcome::Pass { "PASS" } else { "FAIL" },
                self.name,
                self.max_deviation,
                self.threshold
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(CheckResult::failed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.failed())
    }

    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().filter(|c| c.outcome != Outcome::Fail).map(|c| c.max_deviation).fold(0.0, f64::max)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "verification FAILED" })
    }
}

/// Unit-norm state with Gaussian amplitudes.
pub fn random_state<R: Rng>(rng: &mut R, n_qubits: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..1usize << n_qubits).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Largest |p0 difference| between the pure-state and noiseless
/// density-matrix engines over `draws` random models and inputs.
pub fn cross_engine_deviation(arch: &ArchitectureSpec, draws: usize, seed: u64) -> Result<f64, String> {
    let cfg = NoiseConfig { allow_large_dm: true, ..NoiseConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let params = init_params(arch, rng.random());
        let state = random_state(&mut rng, arch.n_qubits());
        let model = CompiledModel::new(&params, arch).map_err(|e| e.to_string())?;
        let pure = model.predict(&state).map_err(|e| e.to_string())?;
        let mixed = noisy_predict(&state, &model, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((pure.p0 - mixed.p0).abs()).max((pure.dg_pred - mixed.dg_pred).abs());
    }
    Ok(worst)
}

pub fn cross_engine_checks(draws: usize, seed: u64, allow_large_dm: bool) -> Vec<CheckResult> {
    builtin_archs()
        .iter()
        .map(|arch| {
            let name = format!("engine-equivalence[{}]", arch.name());
            if arch.n_qubits() > MAX_DEFAULT_DM_QUBITS && !allow_large_dm {
                return CheckResult::skipped(name, "memory gate; pass --allow-large-dm");
            }
            match cross_engine_deviation(arch, draws, seed) {
                Ok(d) => CheckResult::measured(name, d, ENGINE_TOLERANCE),
                Err(e) => CheckResult { outcome: Outcome::Fail, ..CheckResult::skipped(name, e) },
            }
        })
        .collect()
}

/// Random orthogonal `2^n` filter.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> crate::linalg::OrthFilter {
    loop {
        let m = SquareMatrix::from_fn(1 << n, |_, _| rng.random_range(-1.0..1.0));
        if let Ok(q) = project_orthogonal(&RawFilter::new(m).expect("finite")) {
            return q;
        }
    }
}

/// Block-parallel application of one filter to `2^m` states against an
/// explicit block-diagonal matrix acting on the concatenated states.
pub fn block_parallel_deviation(m: usize, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal(&mut rng, n);
    let states: Vec<Vec<f64>> = (0..1 << m).map(|_| random_state(&mut rng, n)).collect();
    let got = block_parallel_apply(&states, &u).expect("valid shapes");
    let block = 1usize << n;
    let big = SquareMatrix::from_fn(block << m, |r, c| {
        if r / block == c / block {
            u.matrix().get(r % block, c % block)
        } else {
            0.0
        }
    });
    let stacked: Vec<f64> = states.iter().flatten().copied().collect();
    let mut worst = 0.0f64;
    for (r, g) in got.iter().flatten().enumerate() {
        let want: f64 = (0..stacked.len()).map(|c| big.get(r, c) * stacked[c]).sum();
        worst = worst.max((g - want).abs());
    }
    for (s, g) in states.iter().zip(&got) {
        let direct = apply_filter(s, &u, &(0..n).collect::<Vec<_>>()).expect("valid wiring");
        for (a, b) in direct.iter().zip(g) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub fn block_parallel_check(m: usize, n: usize, seed: u64) -> CheckResult {
    CheckResult::measured(format!("block-parallel[m={m},n={n}]"), block_parallel_deviation(m, n, seed), BLOCK_TOLERANCE)
}

/// Orthogonality of stored filters and agreement with re-projecting the
/// stored raw matrices.
pub fn audit_checkpoint(ck: &Checkpoint) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, (raw, q)) in ck.params.raw_filters.iter().zip(&ck.projected).enumerate() {
        out.push(CheckResult::measured(
            format!("checkpoint-orthogonality[layer {i}]"),
            q.matrix().orthogonality_defect(),
            ORTHOGONALITY_TOLERANCE,
        ));
        let name = format!("checkpoint-projection[layer {i}]");
        out.push(match project_orthogonal(raw) {
            Ok(p) => {
                let d = p.matrix().as_slice().iter().zip(q.matrix().as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                CheckResult::measured(name, d, ORTHOGONALITY_TOLERANCE)
            }
            Err(e) => CheckResult { outcome: Outcome::Fail, ..CheckResult::skipped(name, e.to_string()) },
        });
    }
    let finite = ck.params.w0.is_finite() && ck.params.w1.is_finite();
    out.push(CheckResult {
        name: "checkpoint-readout-finite".into(),
        max_deviation: 0.0,
        threshold: 0.0,
        outcome: if finite { Outcome::Pass } else { Outcome::Fail },
    });
    out
}

/// Default suite: engine equivalence on every builtin architecture plus the
/// block-parallel demo.
pub fn run_suite(draws: usize, seed: u64, allow_large_dm: bool) -> VerifyReport {
    let mut checks = cross_engine_checks(draws, seed, allow_large_dm);
    checks.push(block_parallel_check(2, 3, seed));
    VerifyReport { checks }
}
