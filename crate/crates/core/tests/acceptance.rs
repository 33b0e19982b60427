//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcnn_core::config::RunConfig;
use qcnn_core::forward::{block_parallel_apply, builtin_arch, builtin_archs, forward, ArchitectureSpec, CompiledModel, ModelParams};
use qcnn_core::ingest::{occupancy, pkd_to_dg, EncodedState};
use qcnn_core::linalg::{count_params, project_orthogonal, OrthFilter, RawFilter};
use qcnn_core::noise::{noisy_forward, NoiseConfig, NoiseStrategy};
use qcnn_core::trainer::{grad, init_params, train};
use qcnn_core::verify::cross_engine_deviation;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn occupancy_values() -> Verdict {
    let e2 = (-2.0f64).exp();
    let at = |r: f64| occupancy(r).unwrap();
    // Both branch formulas evaluated at the shared breakpoint.
    let inner = (-2.0f64 * 1.0 * 1.0).exp();
    let outer = ((3.0 - 2.0 * 1.0) / 1f64.exp()).powi(2);
    let gap1 = (at(1.0 - 1e-9) - at(1.0)).abs();
    let gap2 = (at(1.5 - 1e-9) - at(1.5)).abs();
    let pass = at(0.0) == 1.0
        && (at(1.0) - e2).abs() <= 1e-12
        && (inner - e2).abs() <= 1e-12
        && (outer - e2).abs() <= 1e-12
        && at(1.5) == 0.0
        && gap1 < 1e-5
        && gap2 < 1e-5;
    verdict(pass, format!("occ(1)={:.15} gaps {gap1:.1e}/{gap2:.1e}", at(1.0)))
}

fn parameter_counts() -> Verdict {
    let want = [("fig1a", 258, None), ("fig1b", 578, Some(270)), ("fig1c", 2050, Some(994)), ("fig1f", 834, Some(390)), ("fig1g", 2306, Some(1114))];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, total, independent) in want {
        let (t, i) = count_params(&builtin_arch(name).unwrap());
        pass &= t == total && independent.is_none_or(|v| v == i);
        if name == "fig1a" {
            pass &= i == 114;
            parts.push(format!("{name} {t} ({i}; paper lists 86, flagged)"));
        } else {
            parts.push(format!("{name} {t} ({i})"));
        }
    }
    verdict(pass, parts.join(", "))
}

fn orthogonality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for m in 3..=5 {
        for _ in 0..100 {
            let raw = RawFilter::new(common::random_matrix(&mut rng, 1 << m)).unwrap();
            let q = project_orthogonal(&raw).unwrap();
            let qm = q.matrix();
            let d = qm.dim();
            for r in 0..d {
                for c in 0..d {
                    let dot: f64 = (0..d).map(|k| qm.get(k, r) * qm.get(k, c)).sum();
                    worst = worst.max((dot - if r == c { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    verdict(worst <= 1e-10, format!("max |qᵀq - I| = {worst:.2e}"))
}

fn cross_engine() -> Verdict {
    let mut worst = 0.0f64;
    for arch in builtin_archs() {
        match cross_engine_deviation(&arch, 10, 11) {
            Ok(d) => worst = worst.max(d),
            Err(e) => return verdict(false, e),
        }
    }
    verdict(worst <= 1e-10, format!("5 archs x 10 draws, max deviation {worst:.2e}"))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn final_qubit_affine() -> Verdict {
    let arch = builtin_arch("fig1c").unwrap();
    let params = init_params(&arch, 21);
    let (p, gamma) = (0.05, 0.03);
    let cfg = NoiseConfig { strategy: NoiseStrategy::FinalQubit, depol_p: p, phase_gamma: gamma, allow_large_dm: false };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let slope = 1.0 - 4.0 * p / 3.0;
    // Depolarizing maps p0 to s·p0 + (1 - s)/2, so the readout lands on
    // s·clean + (1 - s)(w0 + w1)/2. Phase damping leaves p0 alone.
    let offset = (1.0 - slope) * 0.5 * (params.w0 + params.w1);
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = common::random_state(&mut rng, 9);
        let c = forward(&s, &params, &arch).unwrap().dg_pred;
        let n = noisy_forward(&s, &params, &arch, &cfg).unwrap().dg_pred;
        worst = worst.max((n - (slope * c + offset)).abs());
        clean.push(c);
        noisy.push(n);
    }
    let r = pearson(&clean, &noisy);
    verdict(worst <= 1e-9 && r >= 1.0 - 1e-9, format!("affine residual {worst:.2e}, pearson 1-{:.1e}", 1.0 - r))
}

/// Mean squared error from the public prediction path, projecting once per
/// parameter vector.
fn oracle_loss(params: &ModelParams, batch: &[EncodedState], arch: &ArchitectureSpec) -> f64 {
    let model = CompiledModel::new(params, arch).unwrap();
    batch.iter().map(|s| (model.predict(&s.amplitudes).unwrap().dg_pred - s.label_dg).powi(2)).sum::<f64>() / batch.len() as f64
}

fn central_difference(params: &ModelParams, batch: &[EncodedState], arch: &ArchitectureSpec, i: usize, h: f64) -> f64 {
    let flat = params.flatten();
    let mut plus = flat.clone();
    plus[i] += h;
    let mut minus = flat;
    minus[i] -= h;
    (oracle_loss(&params.with_flat(&plus), batch, arch) - oracle_loss(&params.with_flat(&minus), batch, arch)) / (2.0 * h)
}

fn gradients() -> Verdict {
    let archs = builtin_archs();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut arities = std::collections::BTreeSet::new();
    // Entries over the threshold, re-measured with a fourth-order stencil
    // at a wider step so the report can say whether the analytic value or
    // the h = 1e-5 difference is the one off.
    let mut outliers = Vec::new();
    for inst in 0..20 {
        let arch = &archs[inst % archs.len()];
        arities.extend(arch.arities());
        let params = init_params(arch, rng.random());
        let batch: Vec<EncodedState> = (0..4)
            .map(|i| EncodedState {
                id: format!("g{i}"),
                amplitudes: common::random_state(&mut rng, arch.n_qubits()),
                label_dg: rng.random_range(-12.0..-4.0),
            })
            .collect();
        let g = grad(&params, &batch, arch).unwrap().flatten();
        for (i, &gi) in g.iter().enumerate() {
            let fd = central_difference(&params, &batch, arch, i, h);
            let scale = gi.abs().max(fd.abs());
            if scale <= 1e-8 {
                continue;
            }
            let rel = (gi - fd).abs() / scale;
            worst = worst.max(rel);
            checked += 1;
            if rel > 1e-4 {
                let wide = 1e-3;
                let fd4 = (4.0 * central_difference(&params, &batch, arch, i, wide) - central_difference(&params, &batch, arch, i, 2.0 * wide)) / 3.0;
                outliers.push((gi, (gi - fd4).abs() / gi.abs(), (gi - fd).abs()));
            }
        }
    }
    let mut detail = format!("{checked} entries, arities {arities:?}, max rel err {worst:.2e}");
    if !outliers.is_empty() {
        let largest = outliers.iter().map(|o| o.0.abs()).fold(0.0, f64::max);
        let fourth = outliers.iter().map(|o| o.1).fold(0.0, f64::max);
        let abs = outliers.iter().map(|o| o.2).fold(0.0, f64::max);
        detail += &format!(
            "; {} entries over 1e-4, all |g| <= {largest:.1e} with |g - fd| <= {abs:.1e}, fourth-order check agrees to {fourth:.1e}",
            outliers.len()
        );
    }
    verdict(worst <= 1e-4 && arities.len() >= 3, detail)
}

fn block_parallel() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut worst = 0.0f64;
    for m in 0..=3 {
        for n in 1..=4 {
            let block = 1usize << n;
            let u = common::random_orthogonal(&mut rng, block);
            let states: Vec<Vec<f64>> = (0..1 << m).map(|_| common::random_state(&mut rng, n)).collect();
            let got = block_parallel_apply(&states, &OrthFilter::new_unchecked(u.clone())).unwrap();
            let big: Vec<Vec<f64>> = (0..block << m)
                .map(|r| (0..block << m).map(|c| if r / block == c / block { u.get(r % block, c % block) } else { 0.0 }).collect())
                .collect();
            let stacked: Vec<f64> = states.concat();
            worst = worst.max(common::max_abs_diff(&common::matvec(&big, &stacked), &got.concat()));
        }
    }
    verdict(worst <= 1e-12, format!("m<=3, n<=4, max deviation {worst:.2e}"))
}

const LEARN_CONFIG: &str = "[arch]\nname = \"fig1a\"\n[data.synthetic]\nseed = 7\ncount = 512\ntest_count = 128\n[train]\nlr = 1e-3\nsteps = 2000\nseed = 7\neval_interval = 100\n";

fn learnability() -> Verdict {
    let cfg = RunConfig::from_toml(LEARN_CONFIG, &[], std::path::Path::new(".")).unwrap();
    let arch = cfg.resolve_arch().unwrap();
    let (tr, te) = cfg.load_data(&arch).unwrap();
    let a = train(&tr, &te, &arch, &cfg.train).unwrap().record;
    let b = train(&tr, &te, &arch, &cfg.train).unwrap().record;
    let (r0, r1) = (a.initial_test.as_ref().unwrap().rmsd, a.final_test.as_ref().unwrap().rmsd);
    let drop = 1.0 - r1 / r0;
    let deterministic = a.final_test == b.final_test && a.trajectory == b.trajectory;
    verdict(drop >= 0.30 && deterministic, format!("held-out RMSD {r0:.4} -> {r1:.4} ({:.1}% drop), deterministic={deterministic}", 100.0 * drop))
}

fn conversion() -> Verdict {
    let dg = pkd_to_dg(6.0);
    verdict((dg + 8.186).abs() <= 1e-3, format!("pKd 6 -> {dg:.4} kcal/mol"))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, LEARN_CONFIG).unwrap();
    for out in ["a", "b"] {
        let o = dir.path().join(out);
        let code = qcnn_core::cli::main_with_args(["qcnn", "train", "--config", cfg.to_str().unwrap(), "--out-dir", o.to_str().unwrap()]);
        if code != 0 {
            return verdict(false, format!("train exited {code}"));
        }
    }
    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let n = name.to_string_lossy();
        if n.ends_with(".qck") || n.ends_with(".csv") {
            if fs::read(dir.path().join("a").join(&name)).unwrap() != fs::read(dir.path().join("b").join(&name)).unwrap() {
                return verdict(false, format!("{n} differs"));
            }
            compared += 1;
        }
    }
    verdict(compared >= 3, format!("{compared} checkpoint/CSV files byte-identical"))
}

fn main() -> ExitCode {
    // Name, check, runtime budget in seconds.
    let criteria: [(&str, fn() -> Verdict, f64); 10] = [
        ("occupancy values and continuity", occupancy_values, 1.0),
        ("parameter counts", parameter_counts, 1.0),
        ("orthogonal projection", orthogonality, 5.0),
        ("cross-engine equivalence", cross_engine, 120.0),
        ("final-qubit noise affine law", final_qubit_affine, 30.0),
        ("analytic gradient vs finite differences", gradients, 120.0),
        ("block-parallel equivalence", block_parallel, 10.0),
        ("synthetic learnability", learnability, 300.0),
        ("pKd to binding free energy", conversion, 1.0),
        ("training determinism", determinism, 600.0),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let v = check();
        let secs = started.elapsed().as_secs_f64();
        let in_time = secs <= *budget;
        let pass = v.pass && in_time;
        let timing = if in_time { format!("{secs:.2}s") } else { format!("{secs:.2}s, over {budget}s budget") };
        println!("{} {:>2} {name}: {} [{timing}]", if pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
