//! `qkdsent` command-line interface.

mod corpus;

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qkdsent::classify::TrainConfig;
use qkdsent::features::{FeatureExtractor, FeatureTable};
use qkdsent::linksim::{self, LinkParams, ScenarioConfig, ScenarioFile, SimulationSidecar};
use qkdsent::pipeline::{
    self, build_dataset, evaluate_pipeline, ChannelSet, PipelineConfig, StreamOutput,
    TrainedPipeline, TrainingDigest,
};
use qkdsent::report::{self, EvalReport};
use qkdsent::select::BoostParams;
use qkdsent::telemetry::{self, fit_scaler, LogFormat, LogReader, Window};

#[derive(Parser)]
#[command(name = "qkdsent", version, about = "QKD link impairment classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled telemetry from the link simulator.
    Simulate(SimulateArgs),
    /// Export sliding-window features of a log as CSV.
    Extract(ExtractArgs),
    /// Train a pipeline on a labeled corpus and score the held-out tail.
    Train(TrainArgs),
    /// Score a trained pipeline on every window of a labeled corpus.
    Eval(EvalArgs),
    /// Classify a telemetry stream point by point.
    Predict(PredictArgs),
    /// Draw the misclassification chord diagram of a report.
    Chord(ChordArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

impl Format {
    fn log_format(self) -> LogFormat {
        match self {
            Format::Jsonl => LogFormat::Jsonl,
            Format::Csv => LogFormat::Csv,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Copy)]
enum ClassSel {
    One(u8),
    All,
}

fn parse_class(s: &str) -> Result<ClassSel, String> {
    if s == "all" {
        return Ok(ClassSel::All);
    }
    match s.parse::<u8>() {
        Ok(c) if (c as usize) < linksim::CLASS_NAMES.len() => Ok(ClassSel::One(c)),
        _ => Err(format!("class id must be 0-8 or 'all', got '{s}'")),
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset class id 0-8, or `all` to write one log per class into --out.
    #[arg(long, value_parser = parse_class, required_unless_present = "scenario", conflicts_with = "scenario")]
    class: Option<ClassSel>,
    /// Scenario JSON with optional link parameters.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of samples per log.
    #[arg(long)]
    points: Option<usize>,
    /// RNG seed; with `--class all`, class c uses seed + c.
    #[arg(long)]
    seed: Option<u64>,
    /// Output log file, or directory for `--class all`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct ExtractArgs {
    /// Telemetry log to window.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
    /// Take scaler and window size from a trained pipeline.
    #[arg(long, conflicts_with_all = ["reference", "window"])]
    model: Option<PathBuf>,
    /// Log whose first N points fit the scaler (default: the input itself).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = qkdsent::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Class id appended as a `label` column.
    #[arg(long)]
    label: Option<u8>,
    /// Feature CSV; provenance goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of logs, each with a `<stem>.sim.json` label sidecar.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = qkdsent::DEFAULT_WINDOW)]
    window: usize,
    /// Number of selected features fed to the classifier.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = qkdsent::classify::DEFAULT_HIDDEN)]
    hidden: Vec<usize>,
    /// Restrict selection to QBER features.
    #[arg(long)]
    qber_only: bool,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Telemetry input; `-` or absent reads stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct ChordArgs {
    /// Report written by `train` or `eval`.
    #[arg(long)]
    report: PathBuf,
    /// SVG path; edges go to `<stem>.edges.json`.
    #[arg(long, default_value = "chord.svg")]
    out: PathBuf,
    /// Draw the tree-ensemble baseline instead of the full pipeline.
    #[arg(long)]
    baseline: bool,
}

const RUN_REPORT_SCHEMA: &str = "qkdsent.run-report/1";
const FEATURES_META_SCHEMA: &str = "qkdsent.features/1";

/// Report file written by `train` and `eval`.
#[derive(Serialize, Deserialize)]
struct RunReport {
    schema_version: String,
    seed: u64,
    config_hash: String,
    pipeline: EvalReport,
    baseline: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    training: Option<TrainingDigest>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QKDSENT_LOG", "warn")).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Chord(a) => chord(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn simulate_one(
    link: &LinkParams,
    scenario: &ScenarioConfig,
    out: &Path,
    format: Format,
) -> Result<()> {
    let records = linksim::simulate(link, scenario)?;
    telemetry::write_log_file(out, &records, format.log_format())?;
    write_json(&corpus::sidecar_path(out), &SimulationSidecar::new(link, scenario))?;
    let n = records.len().max(1) as f64;
    println!(
        "{:>2}  {:<26}  mean qber {:.5}  mean skr {:.1}  -> {}",
        scenario.class_id,
        scenario.class_name(),
        records.iter().map(|r| r.qber).sum::<f64>() / n,
        records.iter().map(|r| r.skr).sum::<f64>() / n,
        out.display()
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let apply = |mut sc: ScenarioConfig, seed: Option<u64>| {
        if let Some(p) = args.points {
            sc.duration_points = p;
        }
        if let Some(s) = seed {
            sc.seed = s;
        }
        sc
    };
    if let Some(path) = &args.scenario {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file = ScenarioFile::from_json(&text)?;
        let link = file.link.unwrap_or_default();
        return simulate_one(&link, &apply(file.scenario, args.seed), &args.out, args.format);
    }
    let link = LinkParams::default();
    match args.class.expect("clap enforces --class or --scenario") {
        ClassSel::One(c) => simulate_one(&link, &apply(linksim::preset(c)?, args.seed), &args.out, args.format),
        ClassSel::All => {
            fs::create_dir_all(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            for c in 0..linksim::CLASS_NAMES.len() as u8 {
                let sc = apply(linksim::preset(c)?, args.seed.map(|s| s + u64::from(c)));
                let out = args.out.join(format!("class_{c}.{}", args.format.extension()));
                simulate_one(&link, &sc, &out, args.format)?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FeaturesMeta {
    schema_version: &'static str,
    seed: Option<u64>,
    config_hash: String,
    input: String,
    window_size: usize,
    stride: usize,
    rows: usize,
    scaler: telemetry::ScalerParams,
}

fn extract(args: ExtractArgs) -> Result<()> {
    let format = args.format.log_format();
    let records = telemetry::read_log(&args.input, format)?;
    let (scaler, window, seed) = match &args.model {
        Some(m) => {
            let p = TrainedPipeline::load(m)?;
            (p.scaler, p.window_size, Some(p.seed))
        }
        None => {
            let reference = match &args.reference {
                Some(r) => telemetry::read_log(r, format)?,
                None => records.clone(),
            };
            if reference.len() < args.window {
                bail!("reference log has {} records, fewer than the window {}", reference.len(), args.window);
            }
            let w = Window::new(reference[..args.window].to_vec(), args.window)?;
            (fit_scaler(&w), args.window, None)
        }
    };
    let log = pipeline::LabeledLog { records, label: args.label.unwrap_or(0) };
    let dataset = build_dataset(std::slice::from_ref(&log), window, args.stride)?;
    let extractor = FeatureExtractor::new(window)?;
    let vectors = dataset
        .windows
        .iter()
        .map(|w| extractor.extract(&w.window, &scaler))
        .collect::<qkdsent::Result<Vec<_>>>()?;
    let table = FeatureTable::from_vectors(&vectors);
    let labels = args.label.map(|l| vec![l; table.len()]);
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    table.write_csv(file, labels.as_deref())?;
    let meta_hash = qkdsent::config_hash(&(window, args.stride, &scaler));
    let mut meta_path = args.out.clone().into_os_string();
    meta_path.push(".meta.json");
    write_json(
        Path::new(&meta_path),
        &FeaturesMeta {
            schema_version: FEATURES_META_SCHEMA,
            seed,
            config_hash: meta_hash,
            input: args.input.display().to_string(),
            window_size: window,
            stride: args.stride,
            rows: table.len(),
            scaler,
        },
    )?;
    println!("{} windows x {} features -> {}", table.len(), table.width(), args.out.display());
    Ok(())
}

fn print_reports(report: &EvalReport, baseline: &EvalReport) {
    print!("{}", report.to_table());
    println!();
    println!("pipeline macro F1        {:.4}", report.macro_f1);
    println!("tree-ensemble macro F1   {:.4}", baseline.macro_f1);
    for note in &report.notes {
        println!("note: {note}");
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let logs = corpus::load(&args.corpus)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!("output directory {} does not exist", parent.display());
        }
    }
    let config = PipelineConfig {
        window_size: args.window,
        stride: args.stride,
        train_fraction: args.train_fraction,
        k: args.k,
        channels: if args.qber_only { ChannelSet::QberOnly } else { ChannelSet::Both },
        boost: BoostParams {
            rounds: args.rounds,
            max_depth: args.max_depth,
            ..BoostParams::default()
        },
        mlp: TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            learning_rate: args.learning_rate,
            seed: args.seed,
            hidden_layers: args.hidden.clone(),
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    let e = pipeline::run_experiment(&logs, &config)?;
    e.pipeline.save(&args.out)?;
    let d = &e.pipeline.training;
    println!(
        "train {} / test {} windows ({} dropped at the split boundary, {} short logs skipped)",
        d.train_windows, d.test_windows, d.dropped_for_leakage, d.skipped_logs
    );
    print_reports(&e.report, &e.baseline);
    if let Some(path) = &args.confusion {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        e.report.write_confusion_csv(file)?;
    }
    write_json(
        &args.report,
        &RunReport {
            schema_version: RUN_REPORT_SCHEMA.into(),
            seed: e.pipeline.seed,
            config_hash: e.pipeline.config_hash.clone(),
            pipeline: e.report,
            baseline: e.baseline,
            training: Some(e.pipeline.training.clone()),
        },
    )?;
    println!("model -> {}\nreport -> {}", args.out.display(), args.report.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let pipeline = TrainedPipeline::load(&args.model)?;
    let logs = corpus::load(&args.corpus)?;
    let dataset = build_dataset(&logs, pipeline.window_size, args.stride)?;
    if dataset.windows.is_empty() {
        bail!("corpus yields no windows of {} points", pipeline.window_size);
    }
    let (report, baseline) = evaluate_pipeline(&pipeline, &dataset.windows)?;
    print_reports(&report, &baseline);
    if let Some(path) = &args.report {
        write_json(
            path,
            &RunReport {
                schema_version: RUN_REPORT_SCHEMA.into(),
                seed: pipeline.seed,
                config_hash: pipeline.config_hash.clone(),
                pipeline: report,
                baseline,
                training: None,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum PredictLine<'a> {
    Warmup { ts: i64, status: &'static str },
    Ready { ts: i64, class: usize, class_name: &'a str, probs: &'a [f64] },
}

fn predict(args: PredictArgs) -> Result<()> {
    let pipeline = TrainedPipeline::load(&args.model)?;
    let reader: Box<dyn BufRead> = match &args.input {
        Some(p) if p.as_os_str() != "-" => Box::new(BufReader::new(
            fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        _ => Box::new(io::stdin().lock()),
    };
    let mut stream = pipeline.streaming()?;
    let mut out = io::stdout().lock();
    for record in LogReader::new(reader, args.format.log_format())? {
        let record = record?;
        let line = match stream.push(record)? {
            StreamOutput::Warmup => serde_json::to_string(&PredictLine::Warmup {
                ts: record.timestamp,
                status: "warmup",
            })?,
            StreamOutput::Ready(p) => serde_json::to_string(&PredictLine::Ready {
                ts: record.timestamp,
                class: p.class_id,
                class_name: &pipeline.class_names[p.class_id],
                probs: &p.probabilities,
            })?,
        };
        if let Err(e) = writeln!(out, "{line}") {
            if e.kind() == io::ErrorKind::BrokenPipe {
                return Ok(());
            }
            return Err(e.into());
        }
    }
    Ok(())
}

fn chord(args: ChordArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let report: EvalReport = if value.get("pipeline").is_some() {
        let run: RunReport = serde_json::from_value(value)?;
        if args.baseline { run.baseline } else { run.pipeline }
    } else {
        if args.baseline {
            bail!("{} holds a single report; --baseline needs a train or eval report", args.report.display());
        }
        serde_json::from_value(value)?
    };
    let edges = report::render_chord(&report, &args.out)?;
    println!(
        "{} misclassifications -> {} ({})",
        report.misclassified(),
        args.out.display(),
        edges.display()
    );
    Ok(())
}
