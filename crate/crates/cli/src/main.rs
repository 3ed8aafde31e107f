//! `surfrec`: simulate rides, build datasets, train, evaluate and stream.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use surfrec_core::dataset::{load_dataset, save_dataset};
use surfrec_core::eval::{evaluate, format_table, write_metrics_csv};
use surfrec_core::imu::{parse_imu_csv, save_imu_csv, FrameConvention};
use surfrec_core::model::load_model;
use surfrec_core::simride::{generate_ride, session_corpus, write_truth_csv, RideScript, SurfaceProfile};
use surfrec_core::stream::{run_stream, write_decisions_csv, StreamConfig};
use surfrec_core::{
    save_model, Attitude, Classifier, Dataset, Drive, Error, ModelArch, Pipeline, TrainOptions, WindowConfig,
    ROAD, SIDEWALK,
};

#[derive(Debug, Parser)]
#[command(name = "surfrec", version, about = "Road vs. sidewalk recognition from e-scooter IMU logs")]
struct Cli {
    /// File of `key=value` lines supplying defaults for subcommand flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic ride (raw.csv, truth.csv) or a whole session corpus.
    Simulate(SimulateArgs),
    /// Filter, decimate and level a raw log into a 20 Hz CSV.
    Preprocess(PreprocessArgs),
    /// Cut labeled drives into windows and write dataset files.
    MakeDataset(MakeDatasetArgs),
    /// Train one classifier on a dataset.
    Train(TrainArgs),
    /// Evaluate models on a dataset; prints a table and writes metrics CSV.
    Eval(EvalArgs),
    /// Replay a raw log through the online classifier.
    Stream(StreamArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Surface {
    Road,
    Sidewalk,
    Mixed,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mixed")]
    surface: Surface,
    /// Ride length, seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Mounting roll, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    roll: f64,
    /// Mounting pitch, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pitch: f64,
    #[arg(long, default_value_t = 1.0)]
    wind: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the twelve-drive session corpus and a `drives.csv` manifest instead.
    #[arg(long)]
    corpus: bool,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Axis mapping from the log to the device frame, e.g. `x,-y,-z`.
    #[arg(long)]
    frame: Option<String>,
}

#[derive(Debug, Args)]
struct MakeDatasetArgs {
    /// Drive manifest: `id,label,path` lines (label road|sidewalk|0|1).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// A drive as `ID:LABEL:PATH`; repeatable.
    #[arg(long = "drive", value_name = "ID:LABEL:PATH")]
    drives: Vec<String>,
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Stride between windows, seconds; defaults to the window length.
    #[arg(long)]
    stride: Option<f64>,
    /// Drive ids held out for validation; repeatable.
    #[arg(long = "val")]
    val: Vec<String>,
    /// Training (or only) dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Validation dataset file; required with `--val`.
    #[arg(long)]
    val_out: Option<PathBuf>,
    #[arg(long)]
    frame: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// cnn | lstm | lstm-cnn | svm | forest
    #[arg(long)]
    arch: ModelArch,
    /// Window length the dataset was built with, seconds.
    #[arg(long)]
    window: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model file; repeatable.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long, required = true)]
    data: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "decisions.csv")]
    out: PathBuf,
    /// Seconds between decisions.
    #[arg(long, default_value_t = 5.0)]
    activation: f64,
    #[arg(long)]
    frame: Option<String>,
}

/// A problem with the invocation itself rather than with the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    info!("{:?}", cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for usage and parameter errors, 2 for data, format and I/O errors.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return if matches!(err, Error::Param(_)) { 1 } else { 2 };
        }
    }
    2
}

/// Inserts `--key value` pairs from a `--config` file after the subcommand
/// for every key not already given on the command line.
fn expand_config(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args.get(pos + 1).cloned().ok_or_else(|| usage("--config needs a file"))?,
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{path}:{}: expected key=value", n + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        if args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => extra.push(format!("{flag}={v}")),
        }
    }
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-') && *a != path)
        .map(|i| i + 1)
        .ok_or_else(|| usage("missing subcommand"))?;
    let mut out = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess(a),
        Command::MakeDataset(a) => make_dataset(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Stream(a) => stream(a),
    }
}

fn frame(spec: &Option<String>) -> anyhow::Result<FrameConvention> {
    match spec {
        Some(s) => FrameConvention::parse(s).map_err(|e| usage(e.to_string())),
        None => Ok(FrameConvention::identity()),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if a.corpus {
        let (train, val) = session_corpus(a.seed);
        let mut manifest = create(&a.out.join("drives.csv"))?;
        writeln!(manifest, "id,label,path")?;
        for d in train.iter().chain(&val) {
            let ride = generate_ride(&d.script)?;
            let file = format!("{}.csv", d.id);
            save_imu_csv(&ride.series, a.out.join(&file))?;
            writeln!(manifest, "{},{},{file}", d.id, d.label)?;
        }
        manifest.flush()?;
        let ids: Vec<&str> = val.iter().map(|d| d.id.as_str()).collect();
        info!("wrote {} drives to {}; held-out ids: {}", train.len() + val.len(), a.out.display(), ids.join(" "));
        return Ok(());
    }
    let mount = Attitude::from_degrees(a.roll, a.pitch)?;
    let script = match a.surface {
        Surface::Road => RideScript::uniform(a.duration, SurfaceProfile::road(), a.seed),
        Surface::Sidewalk => RideScript::uniform(a.duration, SurfaceProfile::sidewalk(), a.seed),
        Surface::Mixed => RideScript::mixed(a.duration, a.seed),
    }
    .with_conditions(mount, a.wind);
    let ride = generate_ride(&script)?;
    save_imu_csv(&ride.series, a.out.join("raw.csv"))?;
    let mut truth = create(&a.out.join("truth.csv"))?;
    write_truth_csv(&ride, &mut truth)?;
    truth.flush()?;
    info!("wrote {} samples to {}", ride.series.len(), a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> anyhow::Result<()> {
    let raw = parse_imu_csv(&a.input, &frame(&a.frame)?)?;
    let out = Pipeline::default().run(&raw)?;
    info!("{} raw samples -> {} leveled samples", raw.len(), out.len());
    save_imu_csv(&out.into_series(), &a.out)?;
    Ok(())
}

fn parse_label(s: &str) -> anyhow::Result<u8> {
    match s.trim() {
        "road" | "0" => Ok(ROAD),
        "sidewalk" | "1" => Ok(SIDEWALK),
        other => Err(usage(format!("unknown label '{other}'; use road or sidewalk"))),
    }
}

fn make_dataset(a: MakeDatasetArgs) -> anyhow::Result<()> {
    let mut specs: Vec<(String, u8, PathBuf)> = Vec::new();
    if let Some(m) = &a.manifest {
        let base = m.parent().unwrap_or(Path::new("."));
        let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                bail!(Error::Parse {
                    line: n + 1,
                    msg: "expected id,label,path".into()
                });
            }
            specs.push((f[0].to_string(), parse_label(f[1])?, base.join(f[2])));
        }
    }
    for d in &a.drives {
        let mut it = d.splitn(3, ':');
        let (Some(id), Some(label), Some(path)) = (it.next(), it.next(), it.next()) else {
            return Err(usage(format!("--drive '{d}' is not ID:LABEL:PATH")));
        };
        specs.push((id.to_string(), parse_label(label)?, PathBuf::from(path)));
    }
    if specs.is_empty() {
        return Err(usage("no drives given; use --manifest or --drive"));
    }
    if !a.val.is_empty() && a.val_out.is_none() {
        return Err(usage("--val requires --val-out"));
    }
    let cfg = match a.stride {
        Some(s) => WindowConfig::with_stride(a.window, s)?,
        None => WindowConfig::new(a.window)?,
    };
    let conv = frame(&a.frame)?;
    let pipeline = Pipeline::default();
    let mut drives = Vec::new();
    for (id, label, path) in specs {
        let raw = parse_imu_csv(&path, &conv).with_context(|| format!("drive {id}"))?;
        let series = pipeline.run(&raw).with_context(|| format!("drive {id}"))?;
        drives.push(Drive { id, label, series });
    }
    if let Some(val_out) = &a.val_out {
        let ids: Vec<&str> = a.val.iter().map(String::as_str).collect();
        let (train, val) = surfrec_core::dataset::split_train_val(&drives, &ids, &cfg)?;
        log_dataset("training", &train);
        log_dataset("validation", &val);
        save_dataset(&train, &a.out)?;
        save_dataset(&val, val_out)?;
    } else {
        let refs: Vec<&Drive> = drives.iter().collect();
        let all = Dataset::from_drives(&refs, &cfg)?;
        log_dataset("dataset", &all);
        save_dataset(&all, &a.out)?;
    }
    Ok(())
}

fn log_dataset(name: &str, d: &Dataset) {
    let (road, sidewalk) = d.class_balance();
    info!("{name}: {} windows ({road} road, {sidewalk} sidewalk)", d.len());
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.data)?;
    if data.window_seconds() != a.window {
        return Err(usage(format!(
            "--window {} does not match the dataset's {} s windows",
            a.window,
            data.window_seconds()
        )));
    }
    let mut opts = TrainOptions::with_seed(a.seed);
    if let Some(e) = a.epochs {
        opts.nn.epochs = e;
    }
    if let Some(lr) = a.lr {
        opts.nn.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        opts.nn.batch_size = b;
    }
    info!("training {} on {} windows, seed {}, {:?}", a.arch.display_name(), data.len(), a.seed, opts.nn);
    let (model, report) = Classifier::train(a.arch, &data, &opts)?;
    if let Some(last) = report.history.last() {
        info!("final training loss {last:.6}");
    }
    save_model(&model, &a.out)?;
    info!("model written to {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.data)?;
    let mut reports = Vec::new();
    for path in &a.models {
        let model = load_model(path).with_context(|| format!("loading {}", path.display()))?;
        reports.push(evaluate(&model, &data)?);
    }
    print!("{}", format_table(&reports));
    let mut out = create(&a.metrics)?;
    write_metrics_csv(&reports, &mut out)?;
    out.flush()?;
    Ok(())
}

fn stream(a: StreamArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let raw = parse_imu_csv(&a.input, &frame(&a.frame)?)?;
    let cfg = StreamConfig {
        window_seconds: model.window_seconds,
        activation_seconds: a.activation,
        ..StreamConfig::default()
    };
    let decisions = run_stream(&model, &raw, cfg)?;
    let sidewalk = decisions.iter().filter(|d| d.prediction.label == SIDEWALK).count();
    info!("{} decisions, {sidewalk} sidewalk", decisions.len());
    let mut out = create(&a.out)?;
    write_decisions_csv(&decisions, &mut out)?;
    out.flush()?;
    Ok(())
}
