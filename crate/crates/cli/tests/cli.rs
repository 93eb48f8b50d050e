//! End-to-end checks of the `spcan` binary: file layouts, exit codes,
//! config handling, and the report tables.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn spcan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spcan"))
        .args(args)
        .output()
        .expect("spawning the spcan binary")
}

fn run_ok(args: &[&str]) -> Output {
    let out = spcan(args);
    assert!(
        out.status.success(),
        "spcan {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn expect_exit(args: &[&str], code: i32) -> String {
    let out = spcan(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "spcan {args:?} → {:?}, stderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small dataset plus a three-epoch config, enough to drive every command.
fn write_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        "[data]\n\
         rotation = 0.52\n\
         n_source = 80\n\
         n_target = 80\n\
         \n\
         [train]\n\
         epochs = 3\n\
         h_div_every = 0\n",
    )
    .unwrap();
    path.display().to_string()
}

fn gen_data(dir: &Path, cfg: &str, paired: bool) -> String {
    let data = dir.join(if paired { "pdata" } else { "data" });
    let data_s = data.display().to_string();
    let mut args = vec!["gen", "--spec", cfg, "--out", &data_s];
    if paired {
        args.push("--paired");
    }
    run_ok(&args);
    data_s
}

#[test]
fn gen_writes_the_dataset_and_a_spec_echo() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    for name in ["source.csv", "target.csv", "target.labels.csv", "spec.resolved.toml"] {
        assert!(Path::new(&data).join(name).exists(), "missing {name}");
    }
    let echo = fs::read_to_string(Path::new(&data).join("spec.resolved.toml")).unwrap();
    assert!(echo.contains("rotation = 0.52"), "echo lost the rotation:\n{echo}");
    assert!(echo.contains("n_source = 80"));
}

#[test]
fn gen_paired_writes_both_views_of_both_domains() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, true);
    for name in ["source_a.csv", "source_b.csv", "target_a.csv", "target_b.csv"] {
        assert!(Path::new(&data).join(name).exists(), "missing {name}");
    }
    assert!(!Path::new(&data).join("source.csv").exists());
}

#[test]
fn gen_refuses_a_non_empty_directory_without_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let stderr = expect_exit(&["gen", "--spec", &cfg, "--out", &data], 2);
    assert!(stderr.contains("--force"), "unhelpful message: {stderr}");
}

#[test]
fn gen_with_force_reproduces_the_same_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let first = fs::read(Path::new(&data).join("source.csv")).unwrap();
    run_ok(&["gen", "--spec", &cfg, "--out", &data, "--force"]);
    let second = fs::read(Path::new(&data).join("source.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn train_writes_metrics_checkpoint_and_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run").display().to_string();
    run_ok(&["train", "--method", "can", "--data", &data, "--config", &cfg, "--out", &run]);

    for name in ["metrics.jsonl", "checkpoint.json", "config.resolved.toml"] {
        assert!(Path::new(&run).join(name).exists(), "missing {name}");
    }
    let metrics = fs::read_to_string(Path::new(&run).join("metrics.jsonl")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 4, "3 epoch records plus the summary");
    for line in &lines[..3] {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rec.get("target_accuracy").is_some(), "not an epoch record: {line}");
        assert!(rec.get("wall_time_s").is_none(), "wall time leaked into the stream");
    }
    let summary: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    assert_eq!(summary["method"], "can");
    assert_eq!(summary["epochs"], 3);

    let resolved = fs::read_to_string(Path::new(&run).join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("method = \"can\""), "missing method echo:\n{resolved}");
    assert!(resolved.contains("epochs = 3"));
    assert!(resolved.contains("base_lr"), "optimizer defaults not echoed");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run").display().to_string();
    run_ok(&[
        "train", "--method", "dann", "--seed", "7", "--data", &data, "--config", &cfg,
        "--out", &run,
    ]);
    let resolved = fs::read_to_string(Path::new(&run).join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("method = \"dann\""));
    assert!(resolved.contains("seed = 7"));
}

#[test]
fn train_rerun_with_force_writes_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run").display().to_string();
    let args =
        ["train", "--method", "spcan", "--data", &data, "--config", &cfg, "--out", &run];
    run_ok(&args);
    let metrics = fs::read(Path::new(&run).join("metrics.jsonl")).unwrap();
    let checkpoint = fs::read(Path::new(&run).join("checkpoint.json")).unwrap();

    let mut forced: Vec<&str> = args.to_vec();
    forced.push("--force");
    run_ok(&forced);
    assert_eq!(metrics, fs::read(Path::new(&run).join("metrics.jsonl")).unwrap());
    assert_eq!(checkpoint, fs::read(Path::new(&run).join("checkpoint.json")).unwrap());
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nepoch = 5\n").unwrap();
    let bad_s = bad.display().to_string();
    let out = tmp.path().join("out").display().to_string();
    let data = tmp.path().join("data").display().to_string();
    let stderr =
        expect_exit(&["train", "--method", "can", "--data", &data, "--config", &bad_s, "--out", &out], 2);
    assert!(stderr.contains("epoch"), "offending key not named: {stderr}");
}

#[test]
fn method_and_data_shape_mismatches_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let single = gen_data(tmp.path(), &cfg, false);
    let paired = gen_data(tmp.path(), &cfg, true);
    let out = tmp.path().join("out").display().to_string();

    expect_exit(&["train", "--method", "ts-spcan", "--data", &single, "--out", &out], 2);
    expect_exit(&["train", "--method", "can", "--data", &paired, "--out", &out], 2);
    expect_exit(&["train", "--method", "can", "--data", &single, "--view", "a", "--out", &out], 2);
    expect_exit(
        &["train", "--method", "ts-spcan", "--data", &paired, "--view", "b", "--out", &out],
        2,
    );
    let missing = tmp.path().join("nowhere").display().to_string();
    expect_exit(&["train", "--method", "can", "--data", &missing, "--out", &out], 2);
}

#[test]
fn corrupt_data_files_exit_2_with_the_line_number() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let source = Path::new(&data).join("source.csv");
    let mut text = fs::read_to_string(&source).unwrap();
    text.push_str("not,a,valid,row,at,all\n");
    fs::write(&source, text).unwrap();
    let out = tmp.path().join("out").display().to_string();
    let stderr = expect_exit(&["train", "--method", "can", "--data", &data, "--out", &out], 2);
    assert!(stderr.contains("source.csv:82"), "no line number in: {stderr}");
}

#[test]
fn single_stream_methods_train_either_view_of_paired_data() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let paired = gen_data(tmp.path(), &cfg, true);
    for view in ["a", "b"] {
        let run = tmp.path().join(format!("run-{view}")).display().to_string();
        run_ok(&[
            "train", "--method", "can", "--data", &paired, "--config", &cfg, "--view", view,
            "--out", &run,
        ]);
        let resolved = fs::read_to_string(Path::new(&run).join("config.resolved.toml")).unwrap();
        assert!(resolved.contains(&format!("view = \"{view}\"")));
    }
}

#[test]
fn ts_spcan_writes_one_checkpoint_per_stream() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let paired = gen_data(tmp.path(), &cfg, true);
    let run = tmp.path().join("run").display().to_string();
    run_ok(&[
        "train", "--method", "ts-spcan", "--data", &paired, "--config", &cfg, "--out", &run,
    ]);
    assert!(Path::new(&run).join("checkpoint_a.json").exists());
    assert!(Path::new(&run).join("checkpoint_b.json").exists());
    assert!(!Path::new(&run).join("checkpoint.json").exists());
    let metrics = fs::read_to_string(Path::new(&run).join("metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert!(first["two_stream"].is_object(), "missing per-stream telemetry");
}

#[test]
fn dann_reports_the_reference_lambda_unchanged() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run").display().to_string();
    run_ok(&["train", "--method", "dann", "--data", &data, "--config", &cfg, "--out", &run]);
    let metrics = fs::read_to_string(Path::new(&run).join("metrics.jsonl")).unwrap();
    let mut saw_epoch = false;
    for line in metrics.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let Some(lambda) = rec.get("lambda") else { continue };
        saw_epoch = true;
        assert_eq!(lambda.as_array().unwrap().len(), 4);
        assert_eq!(lambda[0], 0.0);
        assert_eq!(lambda[1], 0.0);
        assert_eq!(lambda[2], 0.0);
        assert_eq!(lambda[3], -1.0);
    }
    assert!(saw_epoch);
}

#[test]
fn report_tabulates_runs_and_checks_the_ordering() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let mut run_dirs = Vec::new();
    for method in ["source-only", "dann", "can", "spcan"] {
        let run = tmp.path().join(format!("run-{method}")).display().to_string();
        run_ok(&["train", "--method", method, "--data", &data, "--config", &cfg, "--out", &run]);
        run_dirs.push(run);
    }
    let report = tmp.path().join("report").display().to_string();
    let mut args = vec!["report", "--out", &report, "--runs"];
    args.extend(run_dirs.iter().map(String::as_str));
    let out = run_ok(&args);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("spcan > can > dann > source-only"), "no ordering line:\n{stdout}");

    let summary = fs::read_to_string(Path::new(&report).join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,runs,median_target_accuracy,iqr_target_accuracy,median_best_accuracy,ordering_ok"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("source-only,1,"));
    assert!(rows[3].starts_with("spcan,1,"));
    let ordering = rows[0].rsplit(',').next().unwrap();
    assert!(ordering == "true" || ordering == "false", "bad ordering cell: {ordering}");

    for table in ["lambda.csv", "schedule.csv", "hdiv.csv"] {
        assert!(Path::new(&report).join(table).exists(), "missing {table}");
    }
    let lambda = fs::read_to_string(Path::new(&report).join("lambda.csv")).unwrap();
    assert_eq!(lambda.lines().next().unwrap(), "run,method,seed,epoch,block,lambda");
    // 4 runs × 3 epochs × 4 blocks of λ telemetry.
    assert_eq!(lambda.lines().count(), 1 + 48);
}

#[test]
fn report_with_a_partial_method_set_leaves_the_ordering_blank() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run-can").display().to_string();
    run_ok(&["train", "--method", "can", "--data", &data, "--config", &cfg, "--out", &run]);
    let report = tmp.path().join("report").display().to_string();
    run_ok(&["report", "--runs", &run, "--out", &report]);
    let summary = fs::read_to_string(Path::new(&report).join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    assert!(row.ends_with(",-"), "expected a blank ordering cell: {row}");
}

#[test]
fn report_warns_and_skips_runs_without_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run-can").display().to_string();
    run_ok(&["train", "--method", "can", "--data", &data, "--config", &cfg, "--out", &run]);
    let hollow = tmp.path().join("hollow");
    fs::create_dir(&hollow).unwrap();
    let hollow_s = hollow.display().to_string();
    let report = tmp.path().join("report").display().to_string();

    let out = spcan(&["report", "--runs", &run, &hollow_s, "--out", &report]);
    assert!(out.status.success(), "a skippable run must not fail the report");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("hollow"), "no warning about the skipped run: {stderr}");
}

#[test]
fn report_with_no_completed_runs_exits_2() {
    let tmp = TempDir::new().unwrap();
    let hollow = tmp.path().join("hollow");
    fs::create_dir(&hollow).unwrap();
    let hollow_s = hollow.display().to_string();
    let report = tmp.path().join("report").display().to_string();
    expect_exit(&["report", "--runs", &hollow_s, "--out", &report], 2);
}

#[test]
fn report_treats_a_summaryless_stream_as_incomplete() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path());
    let data = gen_data(tmp.path(), &cfg, false);
    let run = tmp.path().join("run").display().to_string();
    run_ok(&["train", "--method", "can", "--data", &data, "--config", &cfg, "--out", &run]);
    let path = Path::new(&run).join("metrics.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let torn: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    fs::write(&path, torn).unwrap();
    let report = tmp.path().join("report").display().to_string();
    expect_exit(&["report", "--runs", &run, "--out", &report], 2);
}
