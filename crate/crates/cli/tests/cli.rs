use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swlidar"));
    cmd.env_remove("SWLIDAR_THREADS");
    cmd
}

fn phantom_irf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/phantom/irf_l1.txt")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn simulate(out: &Path, seed: u64) {
    run_ok(bin().args(["simulate", "--alpha", "25", "--gammaT", "1", "--seed", &seed.to_string()]).arg("--out").arg(out));
}

const FAST: [&str; 6] = ["--burnin-cap", "4", "--gibbs-iters", "40", "--gibbs-burnin", "10"];

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    simulate(&a, 3);
    simulate(&b, 3);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 3);
    let c = dir.path().join("c.txt");
    simulate(&c, 4);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn dense_output_matches_sparse_output() {
    let dir = tempfile::tempdir().unwrap();
    let sparse = dir.path().join("s.txt");
    let dense = dir.path().join("s.bin");
    simulate(&sparse, 2);
    run_ok(bin().args(["simulate", "--alpha", "25", "--gammaT", "1", "--seed", "2", "--dense"]).arg("--out").arg(&dense));
    let a = swlidar::io::read_scene(&sparse).unwrap();
    let b = swlidar::io::read_scene_dense(&dense, &dir.path().join("s.bin.hdr")).unwrap();
    assert_eq!(a.n_pixels(), b.n_pixels());
    for n in 0..a.n_pixels() {
        assert_eq!(a.photons(n), b.photons(n));
    }
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = bin()
        .args(["reconstruct", "--scene"])
        .arg(&missing)
        .arg("--irf")
        .arg(phantom_irf())
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    let out = bin().args(["simulate", "--alpha"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let scene = dir.path().join("s.txt");
    simulate(&scene, 1);
    let out = bin()
        .args(["reconstruct", "--prior", "ridge", "--scene"])
        .arg(&scene)
        .arg("--irf")
        .arg(phantom_irf())
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().env("SWLIDAR_THREADS", "zero").args(["simulate", "--alpha", "1", "--gammaT", "0", "--out"]).arg(&scene).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn reconstruct(scene: &Path, out_dir: &Path, prior: &str, threads: &str) {
    run_ok(
        bin()
            .env("SWLIDAR_THREADS", threads)
            .args(["reconstruct", "--prior", prior, "--seed", "9"])
            .args(FAST)
            .arg("--scene")
            .arg(scene)
            .arg("--irf")
            .arg(phantom_irf())
            .arg("--out-dir")
            .arg(out_dir),
    );
}

/// Files of a reconstruction directory, minus those that record wall time
/// or the thread count.
fn deterministic_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !matches!(p.file_name().unwrap().to_str().unwrap(), "trace.csv" | "manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reconstruct_writes_every_output_and_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s.txt");
    simulate(&scene, 5);
    for prior in ["c-dirichlet", "tv"] {
        let (one, two) = (dir.path().join(format!("{prior}1")), dir.path().join(format!("{prior}2")));
        reconstruct(&scene, &one, prior, "1");
        reconstruct(&scene, &two, prior, "2");
        for name in ["depth.txt", "weights_band0.txt", "reflectivity_band0.txt", "reflectivity_background.txt", "denoised_counts.txt", "depth_entropy.txt", "trace.csv", "manifest.json"] {
            assert!(one.join(name).exists(), "{prior}: missing {name}");
        }
        assert_eq!(one.join("clusters.txt").exists(), prior == "c-dirichlet");
        assert_eq!(deterministic_files(&one), deterministic_files(&two), "{prior}");
        let depth = swlidar::io::read_depth(&one.join("depth.txt")).unwrap();
        assert_eq!(depth.as_slice().len(), 32 * 32);
        let manifest: serde_json::Value = serde_json::from_slice(&fs::read(one.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["hyper"]["burnin_cap"], 4);
        assert_eq!(manifest["threads"], 1);
    }
}

#[test]
fn baseline_and_cluster_commands() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s.txt");
    simulate(&scene, 6);
    let base = dir.path().join("base");
    run_ok(bin().arg("baseline").arg("--scene").arg(&scene).arg("--irf").arg(phantom_irf()).arg("--out-dir").arg(&base));
    assert!(base.join("depth.txt").exists() && base.join("weights_band0.txt").exists());
    assert!(!base.join("trace.csv").exists());

    let mut labels = Vec::new();
    for _ in 0..2 {
        let out = dir.path().join("clu");
        run_ok(
            bin()
                .args(["cluster", "--seed", "2", "--clusters", "4", "--scene"])
                .arg(&scene)
                .arg("--irf")
                .arg(phantom_irf())
                .arg("--out-dir")
                .arg(&out),
        );
        labels.push(fs::read_to_string(out.join("clusters.txt")).unwrap());
    }
    assert_eq!(labels[0], labels[1]);
    let distinct: std::collections::BTreeSet<&str> = labels[0].split_whitespace().collect();
    assert_eq!(distinct.len(), 4);
}

#[test]
fn evaluate_writes_tables_and_cdfs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    run_ok(
        bin()
            .args(["evaluate", "--alphas", "25", "--gammas", "1", "--methods", "w-dirichlet,xcorr", "--seeds", "1,2"])
            .args(FAST)
            .arg("--out-dir")
            .arg(&out),
    );
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    let cdfs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.unwrap().file_name().into_string().ok())
        .filter(|n| n.starts_with("cdf_"))
        .collect();
    assert_eq!(cdfs.len(), 2, "{cdfs:?}");
    assert!(out.join("manifest.json").exists());
}
