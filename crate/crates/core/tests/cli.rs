use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qcnn_core::io::{read_dataset, Checkpoint};
use qcnn_core::linalg::OrthFilter;

fn qcnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcnn")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const VALID_A: &str = "pkd 6.0\nL C 0 0 0\nL N 1.3 0 0\nP O 3 0 0\nP C 0 3.5 0\nP N -2 -2 1\n";
const VALID_B: &str = "pkd 4.5\nL C 1 1 1\nL O 2 1 1\nP C 4 1 1\nP S 1 -3 1\n";
const LIGAND_ONLY: &str = "pkd 5\nL C 0 0 0\n";

fn write_complexes(dir: &Path, files: &[(&str, &str)]) -> PathBuf {
    let mut manifest = String::new();
    for (name, body) in files {
        fs::write(dir.join(name), body).unwrap();
        manifest.push_str(name);
        manifest.push('\n');
    }
    let m = dir.join("manifest.list");
    fs::write(&m, manifest).unwrap();
    m
}

fn synth(dir: &Path, qubits: &str) -> PathBuf {
    let out = dir.join(format!("syn{qubits}"));
    let o = qcnn(&["synth", "--qubits", qubits, "--count", "40", "--test-count", "12", "--seed", "5", "--out-dir", out.to_str().unwrap()], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn write_config(dir: &Path, arch: &str, data: &Path, out: &str) -> PathBuf {
    let cfg = format!(
        "[arch]\nname = \"{arch}\"\n[data]\ntrain = \"{}\"\ntest = \"{}\"\n[train]\nsteps = 40\neval_interval = 10\nbatch_size = 8\nlr = 1e-2\nseed = 3\n[output]\ndir = \"{out}\"\n",
        data.join("train.qds").display(),
        data.join("test.qds").display()
    );
    let p = dir.join(format!("{out}.toml"));
    fs::write(&p, cfg).unwrap();
    p
}

#[test]
fn voxelize_encodes_valid_and_logs_skips() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_complexes(dir.path(), &[("a.cplx", VALID_A), ("bad.cplx", LIGAND_ONLY), ("b.cplx", VALID_B)]);
    let o = qcnn(&["voxelize", "--manifest", m.to_str().unwrap(), "--qubits", "9", "--out-dir", "vx"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (n, states) = read_dataset(&dir.path().join("vx/dataset.qds")).unwrap();
    assert_eq!(n, 9);
    assert_eq!(states.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    assert!(states.iter().all(|s| s.amplitudes.len() == 512));
    let skipped = fs::read_to_string(dir.path().join("vx/skipped.txt")).unwrap();
    assert!(skipped.contains("bad.cplx"));
    assert!(dir.path().join("vx/manifest.txt").exists());
}

#[test]
fn voxelize_twelve_qubits_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_complexes(dir.path(), &[("a.cplx", VALID_A), ("b.cplx", VALID_B)]);
    for out in ["v1", "v2"] {
        let o = qcnn(&["voxelize", "--manifest", m.to_str().unwrap(), "--qubits", "12", "--out-dir", out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("v1/dataset.qds")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("v2/dataset.qds")).unwrap());
    assert_eq!(read_dataset(&dir.path().join("v1/dataset.qds")).unwrap().1[0].amplitudes.len(), 4096);
}

#[test]
fn empty_or_all_bad_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.list"), "# nothing\n").unwrap();
    let o = qcnn(&["voxelize", "--manifest", "empty.list", "--out-dir", "vx"], dir.path());
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("no samples"));
    let m = write_complexes(dir.path(), &[("bad.cplx", LIGAND_ONLY)]);
    let o = qcnn(&["voxelize", "--manifest", m.to_str().unwrap(), "--out-dir", "vx"], dir.path());
    assert_ne!(code(&o), 0);
}

#[test]
fn train_is_reproducible_and_eval_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "9");
    for out in ["r1", "r2"] {
        let cfg = write_config(d, "fig1a", &data, out);
        let o = qcnn(&["train", "--config", cfg.to_str().unwrap()], d);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["checkpoint.qck", "predictions.csv", "trajectory.csv", "summary.txt"] {
        assert_eq!(fs::read(d.join("r1").join(f)).unwrap(), fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(d.join("r1/manifest.txt")).unwrap();
    assert!(manifest.contains("timestamp_unix") && manifest.contains("lr = 0.01"));

    let test = data.join("test.qds");
    let o = qcnn(&["eval", "--checkpoint", "r1/checkpoint.qck", "--data", test.to_str().unwrap(), "--out-dir", "ev"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval_rmsd: f64 = fs::read_to_string(d.join("ev/metrics.csv")).unwrap().lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();

    let noise = |strategy: &str, out: &str| -> (f64, f64, f64, f64) {
        let o = qcnn(&["noise-eval", "--checkpoint", "r1/checkpoint.qck", "--data", test.to_str().unwrap(), "--strategy", strategy, "--out-dir", out], d);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let body = fs::read_to_string(d.join(out).join("noise_metrics.csv")).unwrap();
        let rows: Vec<Vec<f64>> = body.lines().skip(1).map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect()).collect();
        (rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    };
    let (clean_rmsd, clean_pcc, none_rmsd, none_pcc) = noise("none", "n0");
    assert_eq!(clean_rmsd, eval_rmsd);
    assert!((none_rmsd - eval_rmsd).abs() <= 1e-10 && (none_pcc - clean_pcc).abs() <= 1e-10);
    let (_, clean_pcc, _, fq_pcc) = noise("final_qubit", "n1");
    assert!((fq_pcc - clean_pcc).abs() <= 1e-9);

    let o = qcnn(&["verify", "--checkpoint", "r1/checkpoint.qck"], d);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let o = qcnn(&["predict", "--checkpoint", "r1/checkpoint.qck", "--data", test.to_str().unwrap(), "--out-dir", "pr"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(d.join("pr/predictions.csv")).unwrap(), fs::read(d.join("ev/predictions.csv")).unwrap());
}

#[test]
fn corrupted_checkpoint_fails_verify_with_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "9");
    let cfg = write_config(d, "fig1b", &data, "run");
    assert_eq!(code(&qcnn(&["train", "--config", cfg.to_str().unwrap()], d)), 0);
    let path = d.join("run/checkpoint.qck");
    let mut ck = Checkpoint::load(&path).unwrap();
    let mut q = ck.projected[1].matrix().clone();
    q.set(3, 3, q.get(3, 3) * 1.5);
    ck.projected[1] = OrthFilter::new_unchecked(q);
    ck.save(&path).unwrap();
    let o = qcnn(&["verify", "--checkpoint", path.to_str().unwrap()], d);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("checkpoint-orthogonality[layer 1]"), "{}", stderr(&o));
}

#[test]
fn twelve_qubit_arch_on_nine_qubit_data_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "9");
    let cfg = write_config(d, "fig1f", &data, "bad");
    let o = qcnn(&["train", "--config", cfg.to_str().unwrap()], d);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("shape mismatch"), "{}", stderr(&o));
}

#[test]
fn layer_wise_on_twelve_qubits_needs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "12");
    let cfg = write_config(d, "fig1f", &data, "big");
    let o = qcnn(&["train", "--config", cfg.to_str().unwrap(), "--set", "train.steps=2"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let test = data.join("test.qds");
    let o = qcnn(&["noise-eval", "--checkpoint", "big/checkpoint.qck", "--data", test.to_str().unwrap(), "--strategy", "layer_wise", "--out-dir", "ne"], d);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--allow-large-dm"), "{}", stderr(&o));
}

#[test]
fn lr_sweep_produces_aggregate_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d, "9");
    let cfg = write_config(d, "fig1a", &data, "sw");
    let o = qcnn(&["train", "--config", cfg.to_str().unwrap(), "--lrs", "1e-2,1e-3,1e-4,1e-5"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(d.join("sw/sweep_summary.txt")).unwrap();
    assert!(table.contains("258 (114)") && table.contains("±"), "{table}");
    let csv = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(d.join("sw/lr-1e-5_seed-3/checkpoint.qck").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qcnn(&["train", "--no-such-flag"], dir.path())), 1);
    assert_eq!(code(&qcnn(&["train", "--set", "train.lr=-1", "--set", "arch.name=fig1a"], dir.path())), 1);
    assert_eq!(code(&qcnn(&["train", "--set", "arch.name=fig9"], dir.path())), 1);
    let help = qcnn(&["--help"], dir.path());
    assert_eq!(code(&help), 0);
    for sub in ["voxelize", "synth", "train", "eval", "predict", "noise-eval", "sweep", "verify", "QCNN_THREADS"] {
        assert!(stdout(&help).contains(sub), "help lacks {sub}");
    }
}

#[test]
fn missing_data_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcnn(&["train", "--set", "arch.name=fig1a", "--set", "data.train=nope.qds"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
