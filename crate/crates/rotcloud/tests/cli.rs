//! End-to-end checks of the `rotcloud` binary: exit codes, file outputs and
//! the resolved-config reproduction contract, all at miniature scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rotcloud(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotcloud"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROTCLOUD_SEED")
        .output()
        .expect("binary runs")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("rotcloud-cli-test").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let dir = workdir("usage");
    let out = rotcloud(&["frobnicate"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_flag_exits_one() {
    let dir = workdir("flag");
    let out = rotcloud(&["dirs", "--k", "6", "--bogus"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_required_flag_exits_one() {
    let dir = workdir("missing");
    let out = rotcloud(&["dirs", "--k", "6"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--out"), "{err}");
}

#[test]
fn runtime_error_exits_two() {
    let dir = workdir("runtime");
    let out = rotcloud(
        &["eval-rotation", "--model", "nope.bin", "--data", "nowhere"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_exits_zero() {
    let dir = workdir("help");
    let out = rotcloud(&["--help"], &dir);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn dirs_writes_csv_with_k_rows() {
    let dir = workdir("dirs");
    let out = rotcloud(&["dirs", "--k", "32", "--out", "dirs.csv"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("dirs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,x,y,z");
    assert_eq!(lines.len(), 33);
    assert!(dir.join("config.resolved.json").exists());
}

#[test]
fn gen_data_writes_split_manifests_and_clouds() {
    let dir = workdir("gendata");
    let out = rotcloud(
        &[
            "gen-data", "--out", "data", "--categories", "2", "--train", "3", "--test", "2",
            "--points", "64", "--seed", "9",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("data/train.json").exists());
    assert!(dir.join("data/test.json").exists());
    assert!(dir.join("data/train/cloud_00000.xyz").exists());
    assert!(dir.join("data/train/cloud_00000.kp.xyz").exists());
    assert!(dir.join("data/config.resolved.json").exists());
}

#[test]
fn resolved_config_reproduces_outputs_bit_identically() {
    let dir = workdir("repro");
    let args = [
        "gen-data", "--out", "data", "--categories", "2", "--train", "2", "--test", "1",
        "--points", "64", "--seed", "4",
    ];
    assert_eq!(rotcloud(&args, &dir).status.code(), Some(0));
    let first = std::fs::read(dir.join("data/train/cloud_00000.xyz")).unwrap();
    let resolved = dir.join("data/config.resolved.json");
    let resolved_copy = dir.join("config.copy.json");
    std::fs::copy(&resolved, &resolved_copy).unwrap();

    // Re-run purely from the echoed config.
    let out = rotcloud(
        &["gen-data", "--config", resolved_copy.to_str().unwrap()],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let second = std::fs::read(dir.join("data/train/cloud_00000.xyz")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn env_seed_fallback_is_used_and_flag_overrides() {
    let dir = workdir("envseed");
    let run = |seed_env: Option<&str>, extra: &[&str], out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rotcloud"));
        cmd.args([
            "gen-data", "--out", out, "--categories", "2", "--train", "1", "--test", "1",
            "--points", "64",
        ])
        .args(extra)
        .current_dir(&dir)
        .env_remove("ROTCLOUD_SEED");
        if let Some(s) = seed_env {
            cmd.env("ROTCLOUD_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.join(out).join("train/cloud_00000.xyz")).unwrap()
    };
    let via_env = run(Some("123"), &[], "a");
    let via_flag = run(None, &["--seed", "123"], "b");
    let default_seed = run(None, &[], "c");
    let flag_beats_env = run(Some("999"), &["--seed", "123"], "d");
    assert_eq!(via_env, via_flag);
    assert_eq!(via_env, flag_beats_env);
    assert_ne!(via_env, default_seed);
}

#[test]
fn plot_is_deterministic_and_validates_schema() {
    let dir = workdir("plot");
    std::fs::write(dir.join("curve.csv"), "threshold,value\n0,0\n0.1,0.6\n0.2,1\n").unwrap();
    let args = ["plot", "--kind", "pck", "--out", "plot.svg", "curve.csv"];
    assert_eq!(rotcloud(&args, &dir).status.code(), Some(0));
    let first = std::fs::read(dir.join("plot.svg")).unwrap();
    assert_eq!(rotcloud(&args, &dir).status.code(), Some(0));
    let second = std::fs::read(dir.join("plot.svg")).unwrap();
    assert_eq!(first, second);
    assert_eq!(
        String::from_utf8_lossy(&first).matches("<polyline").count(),
        1
    );

    let out = rotcloud(&["plot", "--kind", "sweep", "--out", "x.svg", "curve.csv"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fraction"), "{err}");
}

#[test]
fn pipeline_smoke_gen_pretrain_extract_svm() {
    let dir = workdir("pipeline");
    // Miniature end-to-end run; quality is irrelevant here, only plumbing.
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "gen-data", "--out", "data", "--categories", "3", "--train", "6", "--test", "3",
            "--points", "96", "--seed", "5",
        ],
        vec![
            "pretrain", "--task", "classify", "--k", "6", "--data", "data", "--epochs", "2",
            "--batch", "8", "--points-per-cloud", "48", "--widths", "12,16", "--seed", "5",
            "--out", "model.bin",
        ],
        vec![
            "extract", "--model", "model.bin", "--data", "data", "--split", "train", "--out",
            "train.csv",
        ],
        vec![
            "extract", "--model", "model.bin", "--data", "data", "--split", "test", "--out",
            "test.csv",
        ],
    ];
    for step in &steps {
        let out = rotcloud(step, &dir);
        assert_eq!(
            out.status.code(),
            Some(0),
            "step {:?} failed: {}",
            step[0],
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = rotcloud(
        &["svm", "--train", "train.csv", "--test", "test.csv", "--iters", "100"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("accuracy=")).unwrap();
    let value: f64 = line.trim_start_matches("accuracy=").parse().unwrap();
    assert!((0.0..=1.0).contains(&value));

    // eval-rotation prints the same format contract.
    let out = rotcloud(
        &["eval-rotation", "--model", "model.bin", "--data", "data", "--repeats", "1"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("accuracy=")), "{stdout}");

    // No command mutated its inputs along the way.
    let cloud_after = std::fs::read(dir.join("data/train/cloud_00000.xyz")).unwrap();
    let manifest_after = std::fs::read(dir.join("data/train.json")).unwrap();
    let rerun = rotcloud(
        &["gen-data", "--out", "data_ref", "--categories", "3", "--train", "6", "--test", "3",
          "--points", "96", "--seed", "5"],
        &dir,
    );
    assert_eq!(rerun.status.code(), Some(0));
    assert_eq!(
        cloud_after,
        std::fs::read(dir.join("data_ref/train/cloud_00000.xyz")).unwrap()
    );
    assert_eq!(
        manifest_after,
        std::fs::read(dir.join("data_ref/train.json")).unwrap()
    );
}

#[test]
fn gen_data_is_thread_count_invariant() {
    let dir = workdir("genthreads");
    for (out, threads) in [("one", "1"), ("four", "4")] {
        let cmd = rotcloud(
            &["gen-data", "--out", out, "--categories", "2", "--train", "5", "--test", "2",
              "--points", "96", "--seed", "3", "--threads", threads],
            &dir,
        );
        assert_eq!(cmd.status.code(), Some(0));
    }
    for name in ["train/cloud_00000.xyz", "train/cloud_00007.xyz", "test/cloud_00003.xyz", "train.json"] {
        assert_eq!(
            std::fs::read(dir.join("one").join(name)).unwrap(),
            std::fs::read(dir.join("four").join(name)).unwrap(),
            "{name} differs across thread counts"
        );
    }
}

#[test]
fn keypoints_and_pck_round_trip() {
    let dir = workdir("kp");
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "gen-data", "--out", "data", "--categories", "2", "--train", "6", "--test", "3",
            "--points", "96", "--seed", "6",
        ],
        vec![
            "pretrain", "--task", "classify", "--k", "6", "--data", "data", "--epochs", "1",
            "--batch", "8", "--points-per-cloud", "48", "--widths", "12,16", "--seed", "6",
            "--out", "pre.bin",
        ],
        vec![
            "keypoints", "--init", "pre.bin", "--data", "data", "--epochs", "2", "--batch", "4",
            "--points-per-cloud", "48", "--category", "1", "--seed", "6", "--out", "kp.bin",
        ],
        vec![
            "pck", "--model", "kp.bin", "--data", "data", "--category", "1", "--out", "pck.csv",
        ],
    ];
    for step in &steps {
        let out = rotcloud(step, &dir);
        assert_eq!(
            out.status.code(),
            Some(0),
            "step {:?} failed: {}",
            step[0],
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv = std::fs::read_to_string(dir.join("pck.csv")).unwrap();
    assert!(csv.starts_with("threshold,value\n"));
    assert_eq!(csv.lines().count(), 22); // header + 21 grid points

    // Snapped variant also runs.
    let out = rotcloud(
        &["pck", "--model", "kp.bin", "--data", "data", "--category", "1", "--snap", "--out",
          "pck_snap.csv"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn training_log_csv_has_contract_schema() {
    let dir = workdir("logcsv");
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "gen-data", "--out", "data", "--categories", "2", "--train", "4", "--test", "2",
            "--points", "96", "--seed", "8",
        ],
        vec![
            "pretrain", "--task", "axisangle", "--data", "data", "--epochs", "2", "--batch", "4",
            "--points-per-cloud", "48", "--widths", "12,16", "--seed", "8", "--out", "aa.bin",
        ],
    ];
    for step in &steps {
        let out = rotcloud(step, &dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let log = std::fs::read_to_string(dir.join("aa.log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,metric\n"));
    assert_eq!(log.lines().count(), 3);
}
