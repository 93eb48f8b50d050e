//! Command-line harness around the training core: generate synthetic
//! domain-shift datasets, train any of the methods on them, and fold
//! finished runs into plain tabular reports.
//!
//! Exit codes: 0 on success, 2 for rejected input (bad flags, malformed
//! configs, method/data mismatches, occupied output directories), 3 when a
//! run was accepted but failed underway.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use spcan_core::data::{self, Dataset, PairedDataset, PairedSpec, ShiftSpec};
use spcan_core::network::save_checkpoint;
use spcan_core::trainer::{train, Method, MetricsRecord, RunSummary, TrainConfig};
use spcan_core::two_stream::train_two_stream;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "spcan", version, about = "Synthetic-benchmark domain adaptation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target dataset pair
    Gen(GenArgs),
    /// Train one method on a generated dataset
    Train(TrainArgs),
    /// Summarize finished runs into tabular report files
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Dataset description: a TOML file with a [data] section and an
    /// optional [paired] section (defaults apply when omitted)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory the dataset files are written into
    #[arg(long)]
    out: PathBuf,
    /// Also write two paired views of each domain (implied by a [paired]
    /// section in the spec)
    #[arg(long)]
    paired: bool,
    /// Overwrite artifacts in a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training method: source-only, dann, can, spcan, or ts-spcan
    /// (overrides the config file)
    #[arg(long)]
    method: Option<Method>,
    /// Directory holding the generated dataset
    #[arg(long)]
    data: PathBuf,
    /// Run configuration: a TOML file with a [train] section
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for metrics, checkpoint, and the resolved config
    #[arg(long)]
    out: PathBuf,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// View a single-stream method trains on when the dataset is paired
    #[arg(long)]
    view: Option<View>,
    /// Overwrite artifacts in a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished run directories (each holding a metrics.jsonl)
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Directory the report tables are written into
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Overwrite artifacts in a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    A,
    B,
}

impl View {
    fn tag(self) -> &'static str {
        match self {
            View::A => "a",
            View::B => "b",
        }
    }
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a" | "A" => Ok(View::A),
            "b" | "B" => Ok(View::B),
            other => Err(format!("expected 'a' or 'b', got {other:?}")),
        }
    }
}

/// One config document drives both `gen` and `train`: `gen` reads the
/// `[data]` and `[paired]` sections, `train` reads `[train]`. Every field
/// has a default; unknown keys are rejected by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    data: ShiftSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    paired: Option<PairedSpec>,
    train: TrainConfig,
}

/// The `[data]`/`[paired]` echo `gen` leaves next to the dataset files.
#[derive(Serialize)]
struct SpecEcho<'a> {
    data: &'a ShiftSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    paired: Option<&'a PairedSpec>,
}

/// The fully resolved configuration `train` echoes into its output
/// directory; together with the checkpoint it reproduces the run.
#[derive(Serialize)]
struct ConfigEcho<'a> {
    run: RunSection<'a>,
    train: &'a TrainConfig,
}

#[derive(Serialize)]
struct RunSection<'a> {
    data: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    view: Option<&'static str>,
}

/// A classified failure carrying the exit code `main` should report.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult<T = ()> = Result<T, Failure>;

trait Classify<T> {
    /// Tags an error as rejected input (exit 2).
    fn input(self) -> CmdResult<T>;
    /// Tags an error as a runtime failure (exit 3).
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: 3, error: e.into() })
    }
}

fn reject<T>(message: String) -> CmdResult<T> {
    Err(Failure { code: 2, error: anyhow!(message) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn read_config(path: Option<&Path>) -> CmdResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .input()?;
    toml::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .input()
}

/// Refuses a non-empty output directory unless `--force`, in which case the
/// command's own artifacts are cleared; files it never writes are left alone.
fn prepare_out_dir(dir: &Path, force: bool, artifacts: &[&str]) -> CmdResult<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))
            .input()?;
        if entries.next().is_some() && !force {
            return reject(format!(
                "{} is not empty (pass --force to overwrite)",
                dir.display()
            ));
        }
        for name in artifacts {
            let path = dir.join(name);
            if path.exists() {
                fs::remove_file(&path)
                    .with_context(|| format!("removing {}", path.display()))
                    .runtime()?;
            }
        }
    } else {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .input()?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

// ── gen ──────────────────────────────────────────────────────────────────

const GEN_ARTIFACTS: &[&str] = &[
    "source.csv",
    "target.csv",
    "target.labels.csv",
    "source_a.csv",
    "source_b.csv",
    "target_a.csv",
    "target_b.csv",
    "target_a.labels.csv",
    "target_b.labels.csv",
    "spec.resolved.toml",
];

fn cmd_gen(args: GenArgs) -> CmdResult<()> {
    let cfg = read_config(args.spec.as_deref())?;
    cfg.data.validate().input()?;
    let paired_mode = args.paired || cfg.paired.is_some();
    prepare_out_dir(&args.out, args.force, GEN_ARTIFACTS)?;

    let mut written = Vec::new();
    let mut save = |ds: &Dataset, name: &str| -> CmdResult<()> {
        data::save(ds, &args.out.join(name)).runtime()?;
        written.push(format!("{name} ({} samples)", ds.len()));
        Ok(())
    };

    let paired_echo;
    if paired_mode {
        let paired = cfg.paired.clone().unwrap_or_default();
        let (source, target) = data::generate_paired(&cfg.data, &paired).input()?;
        save(&source.view_a, "source_a.csv")?;
        save(&source.view_b, "source_b.csv")?;
        save(&target.view_a, "target_a.csv")?;
        save(&target.view_b, "target_b.csv")?;
        paired_echo = Some(paired);
    } else {
        let (source, target) = data::generate(&cfg.data).input()?;
        save(&source, "source.csv")?;
        save(&target, "target.csv")?;
        paired_echo = None;
    }

    let echo = SpecEcho { data: &cfg.data, paired: paired_echo.as_ref() };
    let toml = toml::to_string_pretty(&echo)
        .context("serializing the resolved spec")
        .runtime()?;
    write_text(&args.out.join("spec.resolved.toml"), &toml)?;

    println!("wrote {} to {}", written.join(", "), args.out.display());
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────────

const TRAIN_ARTIFACTS: &[&str] = &[
    "metrics.jsonl",
    "config.resolved.toml",
    "checkpoint.json",
    "checkpoint_a.json",
    "checkpoint_b.json",
];

enum LoadedData {
    Single { source: Dataset, target: Dataset },
    Paired { source: PairedDataset, target: PairedDataset },
}

fn load_dataset(dir: &Path, name: &str) -> CmdResult<Dataset> {
    data::load(&dir.join(name)).input()
}

fn load_view_pair(dir: &Path, domain: &str) -> CmdResult<(Dataset, Dataset)> {
    let a = load_dataset(dir, &format!("{domain}_a.csv"))?;
    let b = load_dataset(dir, &format!("{domain}_b.csv"))?;
    Ok((a, b))
}

fn cmd_train(args: TrainArgs) -> CmdResult<()> {
    let cfg_doc = read_config(args.config.as_deref())?;
    let mut cfg = cfg_doc.train;
    if let Some(method) = args.method {
        cfg.method = method;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().input()?;

    let paired_layout = args.data.join("source_a.csv").exists();
    if !paired_layout && !args.data.join("source.csv").exists() {
        return reject(format!(
            "{} has neither source.csv nor source_a.csv (run `spcan gen` first)",
            args.data.display()
        ));
    }

    let loaded = if cfg.method == Method::TsSpcan {
        if args.view.is_some() {
            return reject("ts-spcan trains both views; drop --view".into());
        }
        if !paired_layout {
            return reject(format!(
                "ts-spcan needs paired views, but {} holds a single-view dataset \
                 (generate with `spcan gen --paired`)",
                args.data.display()
            ));
        }
        let (source_a, source_b) = load_view_pair(&args.data, "source")?;
        let (target_a, target_b) = load_view_pair(&args.data, "target")?;
        let source = PairedDataset { view_a: source_a, view_b: source_b };
        let target = PairedDataset { view_a: target_a, view_b: target_b };
        source.validate().input()?;
        target.validate().input()?;
        LoadedData::Paired { source, target }
    } else if paired_layout {
        let Some(view) = args.view else {
            return reject(format!(
                "{} is a paired dataset; pick --view a or --view b for {}",
                args.data.display(),
                cfg.method
            ));
        };
        let tag = view.tag();
        let source = load_dataset(&args.data, &format!("source_{tag}.csv"))?;
        let target = load_dataset(&args.data, &format!("target_{tag}.csv"))?;
        LoadedData::Single { source, target }
    } else {
        if args.view.is_some() {
            return reject("--view only applies to paired datasets".into());
        }
        let source = load_dataset(&args.data, "source.csv")?;
        let target = load_dataset(&args.data, "target.csv")?;
        LoadedData::Single { source, target }
    };

    prepare_out_dir(&args.out, args.force, TRAIN_ARTIFACTS)?;

    let echo = ConfigEcho {
        run: RunSection {
            data: &args.data.display().to_string(),
            view: args.view.map(View::tag),
        },
        train: &cfg,
    };
    let toml = toml::to_string_pretty(&echo)
        .context("serializing the resolved config")
        .runtime()?;
    write_text(&args.out.join("config.resolved.toml"), &toml)?;

    let started = Instant::now();
    let summary = match loaded {
        LoadedData::Single { source, target } => {
            let result = train(&cfg, &source, &target).runtime()?;
            write_metrics(&args.out, &result.metrics, &result.summary)?;
            let ck = result.network.to_checkpoint(result.shuffle_state);
            save_checkpoint(&args.out.join("checkpoint.json"), &ck).runtime()?;
            result.summary
        }
        LoadedData::Paired { source, target } => {
            let result = train_two_stream(&cfg, &source, &target).runtime()?;
            write_metrics(&args.out, &result.metrics, &result.summary)?;
            let ck_a = result.net_a.to_checkpoint(result.shuffle_state_a);
            let ck_b = result.net_b.to_checkpoint(result.shuffle_state_b);
            save_checkpoint(&args.out.join("checkpoint_a.json"), &ck_a).runtime()?;
            save_checkpoint(&args.out.join("checkpoint_b.json"), &ck_b).runtime()?;
            result.summary
        }
    };

    println!(
        "{} seed {}: target accuracy {:.3} (best {:.3}) after {} epochs in {:.1}s → {}",
        summary.method,
        summary.seed,
        summary.last_target_accuracy,
        summary.best_target_accuracy,
        summary.epochs,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

/// One JSON record per epoch, closed by the run summary line.
fn write_metrics(dir: &Path, metrics: &[MetricsRecord], summary: &RunSummary) -> CmdResult<()> {
    let mut text = String::new();
    for record in metrics {
        let line = serde_json::to_string(record)
            .context("serializing a metrics record")
            .runtime()?;
        text.push_str(&line);
        text.push('\n');
    }
    let line = serde_json::to_string(summary)
        .context("serializing the run summary")
        .runtime()?;
    text.push_str(&line);
    text.push('\n');
    write_text(&dir.join("metrics.jsonl"), &text)
}

// ── report ───────────────────────────────────────────────────────────────

const REPORT_ARTIFACTS: &[&str] = &["summary.csv", "lambda.csv", "schedule.csv", "hdiv.csv"];

const METHOD_ORDER: [Method; 5] =
    [Method::SourceOnly, Method::Dann, Method::Can, Method::Spcan, Method::TsSpcan];

struct LoadedRun {
    name: String,
    summary: RunSummary,
    metrics: Vec<MetricsRecord>,
}

fn cmd_report(args: ReportArgs) -> CmdResult<()> {
    let mut runs = Vec::new();
    for dir in &args.runs {
        let path = dir.join("metrics.jsonl");
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        let (metrics, summary) = parse_metrics(&text);
        let Some(summary) = summary else {
            eprintln!(
                "warning: skipping {}: no summary record (run still in progress?)",
                path.display()
            );
            continue;
        };
        let name = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        runs.push(LoadedRun { name, summary, metrics });
    }
    if runs.is_empty() {
        return reject("no completed runs among the given directories".into());
    }

    prepare_out_dir(&args.out, args.force, REPORT_ARTIFACTS)?;
    write_text(&args.out.join("summary.csv"), &summary_table(&runs))?;
    write_text(&args.out.join("lambda.csv"), &lambda_table(&runs))?;
    write_text(&args.out.join("schedule.csv"), &schedule_table(&runs))?;
    write_text(&args.out.join("hdiv.csv"), &hdiv_table(&runs))?;

    print_summary(&runs);
    println!(
        "wrote summary.csv, lambda.csv, schedule.csv, hdiv.csv to {}",
        args.out.display()
    );
    Ok(())
}

/// Reads the per-epoch records and the closing summary from a metrics
/// stream, keeping whatever prefix of complete lines it finds.
fn parse_metrics(text: &str) -> (Vec<MetricsRecord>, Option<RunSummary>) {
    let mut metrics = Vec::new();
    let mut summary = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(record) = serde_json::from_str::<MetricsRecord>(line) {
            metrics.push(record);
        } else if let Ok(s) = serde_json::from_str::<RunSummary>(line) {
            summary = Some(s);
        } else {
            break;
        }
    }
    (metrics, summary)
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

struct MethodRow {
    method: Method,
    runs: usize,
    median: f64,
    iqr: f64,
    median_best: f64,
}

fn method_rows(runs: &[LoadedRun]) -> Vec<MethodRow> {
    METHOD_ORDER
        .iter()
        .filter_map(|&method| {
            let mut last: Vec<f64> = runs
                .iter()
                .filter(|r| r.summary.method == method)
                .map(|r| r.summary.last_target_accuracy)
                .collect();
            if last.is_empty() {
                return None;
            }
            let mut best: Vec<f64> = runs
                .iter()
                .filter(|r| r.summary.method == method)
                .map(|r| r.summary.best_target_accuracy)
                .collect();
            last.sort_by(f64::total_cmp);
            best.sort_by(f64::total_cmp);
            Some(MethodRow {
                method,
                runs: last.len(),
                median: quantile(&last, 0.5),
                iqr: quantile(&last, 0.75) - quantile(&last, 0.25),
                median_best: quantile(&best, 0.5),
            })
        })
        .collect()
}

/// Whether the strict median ordering spcan > can > dann > source-only
/// held; `None` when one of the four methods has no runs.
fn ordering_held(rows: &[MethodRow]) -> Option<bool> {
    let median = |m: Method| rows.iter().find(|r| r.method == m).map(|r| r.median);
    let source_only = median(Method::SourceOnly)?;
    let dann = median(Method::Dann)?;
    let can = median(Method::Can)?;
    let spcan = median(Method::Spcan)?;
    Some(spcan > can && can > dann && dann > source_only)
}

fn ordering_cell(rows: &[MethodRow]) -> String {
    match ordering_held(rows) {
        Some(held) => held.to_string(),
        None => "-".into(),
    }
}

fn summary_table(runs: &[LoadedRun]) -> String {
    let rows = method_rows(runs);
    let ordering = ordering_cell(&rows);
    let mut out = String::from(
        "method,runs,median_target_accuracy,iqr_target_accuracy,median_best_accuracy,ordering_ok\n",
    );
    for row in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.method, row.runs, row.median, row.iqr, row.median_best, ordering
        );
    }
    out
}

fn lambda_table(runs: &[LoadedRun]) -> String {
    let mut out = String::from("run,method,seed,epoch,block,lambda\n");
    for run in runs {
        for rec in &run.metrics {
            for (block, &value) in rec.lambda.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    run.name, run.summary.method, run.summary.seed, rec.epoch, block, value
                );
            }
        }
    }
    out
}

fn schedule_table(runs: &[LoadedRun]) -> String {
    let mut out = String::from("run,method,seed,epoch,stage,r_c,r_d,s_c_size,s_d_size\n");
    for run in runs {
        for rec in &run.metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                run.name,
                run.summary.method,
                run.summary.seed,
                rec.epoch,
                rec.stage,
                rec.r_c,
                rec.r_d,
                rec.s_c_size,
                rec.s_d_size
            );
        }
    }
    out
}

fn hdiv_table(runs: &[LoadedRun]) -> String {
    let mut out = String::from("run,method,seed,epoch,h_divergence\n");
    for run in runs {
        for rec in &run.metrics {
            if let Some(h) = rec.h_divergence {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    run.name, run.summary.method, run.summary.seed, rec.epoch, h
                );
            }
        }
    }
    out
}

fn print_summary(runs: &[LoadedRun]) {
    let rows = method_rows(runs);
    println!("{:<12} {:>4} {:>8} {:>8} {:>8}", "method", "runs", "median", "iqr", "best");
    for row in &rows {
        println!(
            "{:<12} {:>4} {:>8.3} {:>8.3} {:>8.3}",
            row.method.name(),
            row.runs,
            row.median,
            row.iqr,
            row.median_best
        );
    }
    match ordering_held(&rows) {
        Some(true) => println!("ordering spcan > can > dann > source-only: held"),
        Some(false) => println!("ordering spcan > can > dann > source-only: NOT held"),
        None => {}
    }
}
