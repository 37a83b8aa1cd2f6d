//! End-to-end checks of the `bsp` binary: subcommand wiring, exit codes,
//! sidecar summaries, and byte-level determinism of outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bsp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bsp"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bsp_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn simulate(dir: &Path, seed: u64) {
    let status = bsp()
        .current_dir(dir)
        .args([
            "simulate",
            "--p",
            "60",
            "--q",
            "40",
            "--n",
            "60",
            "--k",
            "3",
            "--seed",
            &seed.to_string(),
            "--out-prefix",
            "sim",
        ])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn simulate_search_evaluate_roundtrip() {
    let dir = workdir("roundtrip");
    simulate(&dir, 42);
    for f in ["sim_x.csv", "sim_y.csv", "sim_truth.json", "sim_truth.json.run.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }

    let status = bsp()
        .current_dir(&dir)
        .args([
            "search", "--x", "sim_x.csv", "--y", "sim_y.csv", "--alpha", "0.05", "--seed",
            "7", "--out", "bm.json", "--filter-perms", "2000",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("bm.json").exists());
    assert!(dir.join("bm.traces.json").exists());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("bm.json.run.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "search");
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["n"], 60);
    assert_eq!(summary["n_eff"], 60);

    let status = bsp()
        .current_dir(&dir)
        .args([
            "evaluate",
            "--found",
            "bm.json",
            "--truth",
            "sim_truth.json",
            "--out",
            "report.json",
            "--csv",
            "report.csv",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["per_truth"].as_array().unwrap().len() == 3);
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("kind,index,best_recall"));

    let status = bsp()
        .current_dir(&dir)
        .args([
            "netstats", "--x", "sim_x.csv", "--y", "sim_y.csv", "--bimodules", "bm.json",
            "--out", "bm_net.json",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let status = bsp()
        .current_dir(&dir)
        .args(["filter", "--bimodules", "bm.json", "--out", "bm_f.json"])
        .status()
        .unwrap();
    assert!(status.success());

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn covariates_reduce_effective_sample_size() {
    let dir = workdir("cov");
    simulate(&dir, 5);
    // Three covariate columns (header plus 60 sample rows).
    let mut cov = String::from("c0,c1,c2\n");
    for i in 0..60 {
        cov.push_str(&format!("1.0,{},{}\n", i as f64, (i * i) as f64 / 100.0));
    }
    std::fs::write(dir.join("cov.csv"), cov).unwrap();
    let status = bsp()
        .current_dir(&dir)
        .args([
            "search", "--x", "sim_x.csv", "--y", "sim_y.csv", "--covariates", "cov.csv",
            "--alpha", "0.05", "--seed", "1", "--out", "bmc.json", "--filter-perms", "1000",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("bmc.json.run.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 60);
    assert_eq!(summary["n_eff"], 57);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_two() {
    let out = bsp().args(["search", "--x", "x.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bsp()
        .args([
            "tune", "--x", "a.csv", "--y", "b.csv", "--grid", "0.01", "--half-perms", "0",
            "--out", "t.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = workdir("err");
    let out = bsp()
        .current_dir(&dir)
        .args([
            "search", "--x", "missing_x.csv", "--y", "missing_y.csv", "--out", "bm.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("error"), "stderr: {msg}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let dir = workdir("det");
    simulate(&dir, 9);
    for (tag, workers) in [("w1", "1"), ("w3", "3")] {
        let status = bsp()
            .current_dir(&dir)
            .args([
                "search", "--x", "sim_x.csv", "--y", "sim_y.csv", "--alpha", "0.05", "--seed",
                "21", "--out", &format!("bm_{tag}.json"), "--filter-perms", "2000",
                "--workers", workers,
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("bm_w1.json")).unwrap();
    let b = std::fs::read(dir.join("bm_w3.json")).unwrap();
    assert_eq!(a, b);

    // The environment variable route drives the worker count too.
    let status = bsp()
        .current_dir(&dir)
        .env("BSP_WORKERS", "2")
        .args([
            "search", "--x", "sim_x.csv", "--y", "sim_y.csv", "--alpha", "0.05", "--seed",
            "21", "--out", "bm_env.json", "--filter-perms", "2000",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let c = std::fs::read(dir.join("bm_env.json")).unwrap();
    assert_eq!(a, c);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn binary_matrix_format_roundtrips_through_search() {
    let dir = workdir("bin");
    let status = bsp()
        .current_dir(&dir)
        .args([
            "simulate", "--p", "40", "--q", "30", "--n", "50", "--k", "2", "--seed", "3",
            "--out-prefix", "simb", "--format", "bin",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("simb_x.bin").exists());
    let magic = &std::fs::read(dir.join("simb_x.bin")).unwrap()[..4];
    assert_eq!(magic, b"BSPM");
    let status = bsp()
        .current_dir(&dir)
        .args([
            "search", "--x", "simb_x.bin", "--y", "simb_y.bin", "--seed", "2", "--out",
            "bmb.json", "--filter-perms", "500",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::remove_dir_all(&dir).ok();
}
