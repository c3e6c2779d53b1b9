//! End-to-end tests through the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn axisfdr_threads(args: &[&str], dir: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axisfdr"))
        .args(args)
        .current_dir(dir)
        .env("AXISFDR_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn axisfdr(args: &[&str], dir: &Path) -> Output {
    axisfdr_threads(args, dir, "2")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec![
        "simulate",
        "--dims",
        "8,8,8",
        "--kappa",
        "100",
        "--region",
        "2,2,2,3,3,3",
        "--delta",
        "90",
        "--seed",
        "41",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    assert_success(&axisfdr(&args, dir));
}

fn group_args(dir: &Path, sim: &str) -> Vec<String> {
    let mut args = Vec::new();
    for group in ["group1", "group2"] {
        for i in 0..6 {
            args.push(format!("--{group}"));
            args.push(
                dir.join(sim)
                    .join(format!("{group}_s{i:02}.dvol"))
                    .to_string_lossy()
                    .into_owned(),
            );
        }
    }
    args
}

fn dir_digest(path: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| (p.clone(), fs::read(p).unwrap()))
        .collect()
}

#[test]
fn simulate_is_deterministic_and_readable() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "a", &[]);
    simulate(tmp.path(), "b", &[]);
    let a = dir_digest(&tmp.path().join("a"));
    let b = dir_digest(&tmp.path().join("b"));
    assert_eq!(a.len(), b.len());
    for ((pa, da), (pb, db)) in a.iter().zip(&b) {
        assert_eq!(pa.file_name(), pb.file_name());
        assert_eq!(da, db, "{pa:?} differs between identical runs");
    }
    // every emitted volume round-trips through the library readers
    for (path, bytes) in &a {
        if path.extension().is_some_and(|e| e == "dvol") {
            let vol = axisfdr::io::read_direction_volume(path).unwrap();
            let rewritten = tmp.path().join("rt.dvol");
            axisfdr::io::write_direction_volume(&rewritten, &vol).unwrap();
            assert_eq!(&fs::read(&rewritten).unwrap(), bytes);
        }
    }
    let truth = axisfdr::io::read_mask(&tmp.path().join("a/truth.mvol")).unwrap();
    assert_eq!(truth.count(), 27);
}

#[test]
fn pipeline_outputs_are_reproducible_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "sim", &[]);
    let groups = group_args(tmp.path(), "sim");
    let mut args: Vec<&str> = vec!["pipeline"];
    args.extend(groups.iter().map(String::as_str));
    args.extend_from_slice(&["--alpha", "0.05", "--out", "out"]);
    assert_success(&axisfdr(&args, tmp.path()));
    let first = dir_digest(&tmp.path().join("out"));
    assert_success(&axisfdr(&args, tmp.path()));
    let second = dir_digest(&tmp.path().join("out"));
    assert_eq!(first, second, "pipeline rerun changed bytes");

    // results are independent of the worker count
    assert_success(&axisfdr_threads(&args, tmp.path(), "1"));
    let single_threaded = dir_digest(&tmp.path().join("out"));
    assert_eq!(first, single_threaded, "worker count changed the outputs");

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["group_sizes"], serde_json::json!([6, 6]));
    let discoveries = report["results"][0]["discoveries"].as_u64().unwrap();
    assert!(discoveries >= 24, "expected the planted 27-voxel block, got {discoveries}");

    // the rendered summary must agree with the JSON fields
    let rendered = axisfdr(&["report", "out/report.json"], tmp.path());
    assert_success(&rendered);
    let text = String::from_utf8_lossy(&rendered.stdout).into_owned();
    assert!(text.contains(&format!("{discoveries} interesting voxels")), "summary: {text}");

    // expected artifacts exist
    for file in [
        "report.json",
        "table.csv",
        "histogram.csv",
        "fdr_curve_empirical.csv",
        "fdr_curve_theoretical.csv",
        "discoveries_alpha_0.05.mvol",
        "statistic.svol",
        "analysis_mask.mvol",
        "plot.svg",
    ] {
        assert!(tmp.path().join("out").join(file).exists(), "{file} missing");
    }
}

#[test]
fn pipeline_accepts_config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "sim", &[]);
    let list = |group: &str| -> String {
        (0..6)
            .map(|i| format!("\"sim/{group}_s{i:02}.dvol\""))
            .collect::<Vec<_>>()
            .join(", ")
    };
    fs::write(
        tmp.path().join("run.toml"),
        format!(
            "group1 = [{}]\ngroup2 = [{}]\nalpha = [0.2]\nsmooth = 1\nout = \"cfg-out\"\n",
            list("group1"),
            list("group2")
        ),
    )
    .unwrap();
    // the flag overrides the file's alpha list
    let out = axisfdr(
        &["pipeline", "--config", "run.toml", "--alpha", "0.01", "--out", "cfg-out"],
        tmp.path(),
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("cfg-out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 1);
    assert_eq!(report["results"][0]["alpha"], serde_json::json!(0.01));
}

#[test]
fn stage_commands_compose_like_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "sim", &[]);
    let groups = group_args(tmp.path(), "sim");
    let mut args: Vec<&str> = vec!["teststat"];
    args.extend(groups.iter().map(String::as_str));
    args.extend_from_slice(&["--target-df", "2", "--out", "stage"]);
    assert_success(&axisfdr(&args, tmp.path()));
    assert_success(&axisfdr(
        &["smooth", "stage/statistic.svol", "--smooth", "1", "--out", "stage/smoothed.svol"],
        tmp.path(),
    ));
    // b = 1 smoothing is the identity on the payload
    assert_eq!(
        fs::read(tmp.path().join("stage/statistic.svol")).unwrap(),
        fs::read(tmp.path().join("stage/smoothed.svol")).unwrap()
    );
    assert_success(&axisfdr(
        &[
            "fdr",
            "stage/statistic.svol",
            "--mask",
            "stage/effective_mask.mvol",
            "--alpha",
            "0.05",
            "--out",
            "stage/fdr",
        ],
        tmp.path(),
    ));
    let fit: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("stage/fdr/fit.json")).unwrap()).unwrap();
    let u = fit["thresholds"][0]["u_alpha"].as_f64().unwrap();
    assert_success(&axisfdr(
        &[
            "cluster",
            "stage/statistic.svol",
            "--mask",
            "stage/effective_mask.mvol",
            "--threshold",
            &u.to_string(),
            "--out",
            "stage/clusters",
        ],
        tmp.path(),
    ));
    let clusters: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("stage/clusters/clusters.json")).unwrap())
            .unwrap();
    assert_eq!(
        clusters["discoveries"].as_u64().unwrap(),
        fit["thresholds"][0]["discoveries"].as_u64().unwrap()
    );
}

#[test]
fn exit_codes_reflect_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    // usage error: unknown subcommand
    let out = axisfdr(&["not-a-command"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    // data error: missing input file
    let out = axisfdr(
        &["teststat", "--group1", "missing.dvol", "--group2", "missing.dvol", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    // numerical failure: empirical-null fit on far too few values
    simulate(tmp.path(), "sim", &[]);
    let groups = group_args(tmp.path(), "sim");
    let mut args: Vec<&str> = vec!["teststat"];
    args.extend(groups.iter().map(String::as_str));
    args.extend_from_slice(&["--target-df", "2", "--out", "stage"]);
    assert_success(&axisfdr(&args, tmp.path()));
    let out = axisfdr(
        &[
            "fdr",
            "stage/statistic.svol",
            "--bin-width",
            "50",
            "--out",
            "stage/fdr-fail",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_emits_one_row_per_kernel_and_level() {
    let tmp = tempfile::tempdir().unwrap();
    let out = axisfdr(
        &[
            "sweep", "--dims", "10,10,10", "--kappa", "60", "--region", "3,3,3,3,3,3",
            "--delta", "75", "--seed", "5", "--smooth", "1", "--smooth", "3", "--alpha", "0.2",
            "--alpha", "0.05", "--out", "sweep",
        ],
        tmp.path(),
    );
    assert_success(&out);
    let csv = fs::read_to_string(tmp.path().join("sweep/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header + 4 rows: {csv}");
    assert!(lines[0].starts_with("b,N,p0_hat,a_hat,nu_hat,T90,alpha,u_alpha,R"));
    // b = 1 keeps the full grid; b = 3 trims the boundary shell
    assert!(lines[1].starts_with("1,1000,"));
    assert!(lines[3].starts_with("3,512,"));
}
