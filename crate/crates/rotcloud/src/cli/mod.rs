//! Command-line entry point.
//!
//! Every subcommand resolves its settings from (highest precedence first)
//! command-line flags, the optional `--config FILE` JSON, the
//! `ROTCLOUD_SEED` environment variable (seed only) and built-in defaults,
//! then echoes the fully resolved settings to `config.resolved.json` in its
//! output directory. Exit codes: 0 success, 1 usage error, 2 runtime error.

mod plot;

pub use plot::{render_plot, PlotKind};

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::downstream::{
    concat_features, extract_dataset_features, label_efficiency_sweep, sweep_to_csv, train_svm,
    FeatureMatrix,
};
use crate::encoder::{EncoderModel, TrainConfig, DEFAULT_HEAD_HIDDEN, DEFAULT_WIDTHS};
use crate::error::Error;
use crate::keypoint::{finetune_keypoints, pck, predict_keypoints};
use crate::pcdata::{generate_dataset, DatasetManifest};
use crate::pretrain::{eval_rotation_accuracy, train_pretext, PretextTask};

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "rotcloud",
    about = "Self-supervised point-cloud pretraining via rotation prediction",
    disable_version_flag = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset with manifests and keypoints.
    GenData(GenDataArgs),
    /// Pretrain an encoder on the rotation pretext task.
    Pretrain(PretrainArgs),
    /// Extract frozen global features for a dataset split.
    Extract(ExtractArgs),
    /// Train and evaluate a linear SVM on feature CSVs.
    Svm(SvmArgs),
    /// Label-efficiency sweep: SVM accuracy over training-set fractions.
    Sweep(SweepArgs),
    /// Fine-tune a pretrained encoder for keypoint regression.
    Keypoints(KeypointsArgs),
    /// Evaluate keypoint predictions as a PCK curve.
    Pck(PckArgs),
    /// Rotation-prediction accuracy of a classification model.
    EvalRotation(EvalRotationArgs),
    /// Export a K-direction set as CSV.
    Dirs(DirsArgs),
    /// Render curve CSVs as an SVG plot.
    Plot(PlotArgs),
}

pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::GenData(args) => run_gen_data(args),
        Command::Pretrain(args) => run_pretrain(args),
        Command::Extract(args) => run_extract(args),
        Command::Svm(args) => run_svm(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Keypoints(args) => run_keypoints(args),
        Command::Pck(args) => run_pck(args),
        Command::EvalRotation(args) => run_eval_rotation(args),
        Command::Dirs(args) => run_dirs(args),
        Command::Plot(args) => run_plot(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

// ---- config resolution helpers ----

fn load_config_file(path: &Option<PathBuf>) -> CliResult<serde_json::Value> {
    match path {
        None => Ok(serde_json::json!({})),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Runtime(Error::parse(p, e.line(), e.to_string())))
        }
    }
}

/// Flag value if present, else the config-file value under `key`.
fn field<T: DeserializeOwned>(
    cli: Option<T>,
    file: &serde_json::Value,
    key: &str,
) -> CliResult<Option<T>> {
    if cli.is_some() {
        return Ok(cli);
    }
    match file.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| usage(format!("config field {key:?}: {e}"))),
    }
}

fn required<T: DeserializeOwned>(
    cli: Option<T>,
    file: &serde_json::Value,
    key: &str,
) -> CliResult<T> {
    field(cli, file, key)?
        .ok_or_else(|| usage(format!("missing required --{}", key.replace('_', "-"))))
}

fn resolve_seed(cli: Option<u64>, file: &serde_json::Value) -> CliResult<u64> {
    if let Some(seed) = field(cli, file, "seed")? {
        return Ok(seed);
    }
    if let Ok(text) = std::env::var("ROTCLOUD_SEED") {
        return text
            .parse::<u64>()
            .map_err(|_| usage(format!("ROTCLOUD_SEED is not an integer: {text:?}")));
    }
    Ok(42)
}

fn write_resolved<T: Serialize>(out_dir: &Path, resolved: &T) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("config.resolved.json");
    let mut text = serde_json::to_string_pretty(resolved)
        .map_err(|e| CliError::Runtime(Error::InvalidInput(e.to_string())))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(Error::io(&path, e)))?;
    Ok(())
}

fn out_dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

fn parse_up(s: &str) -> CliResult<[f64; 3]> {
    match s {
        "+x" | "x" => Ok([1.0, 0.0, 0.0]),
        "-x" => Ok([-1.0, 0.0, 0.0]),
        "+y" | "y" => Ok([0.0, 1.0, 0.0]),
        "-y" => Ok([0.0, -1.0, 0.0]),
        "+z" | "z" => Ok([0.0, 0.0, 1.0]),
        "-z" => Ok([0.0, 0.0, -1.0]),
        other => Err(usage(format!("unknown up axis {other:?}"))),
    }
}

fn parse_widths(s: &str) -> CliResult<Vec<usize>> {
    let widths: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    widths.map_err(|_| usage(format!("cannot parse widths {s:?}")))
}

fn parse_fractions(s: &str) -> CliResult<Vec<f64>> {
    let fr: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    fr.map_err(|_| usage(format!("cannot parse fractions {s:?}")))
}

fn load_manifest(data: &Path, split: &str) -> CliResult<DatasetManifest> {
    let path = data.join(format!("{split}.json"));
    Ok(DatasetManifest::load(&path)?)
}

// ---- gen-data ----

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct GenDataResolved {
    command: &'static str,
    out: PathBuf,
    categories: usize,
    train: usize,
    test: usize,
    points: usize,
    seed: u64,
    threads: usize,
}

fn run_gen_data(args: GenDataArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = GenDataResolved {
        command: "gen-data",
        out: required(args.out, &file, "out")?,
        categories: field(args.categories, &file, "categories")?.unwrap_or(8),
        train: field(args.train, &file, "train")?.unwrap_or(200),
        test: field(args.test, &file, "test")?.unwrap_or(50),
        points: field(args.points, &file, "points")?.unwrap_or(1024),
        seed: resolve_seed(args.seed, &file)?,
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
    };
    write_resolved(&resolved.out, &resolved)?;
    generate_dataset(
        &resolved.out,
        resolved.categories,
        resolved.train,
        resolved.test,
        resolved.points,
        resolved.seed,
        resolved.threads,
    )?;
    println!(
        "wrote {} train + {} test clouds over {} categories to {}",
        resolved.categories * resolved.train,
        resolved.categories * resolved.test,
        resolved.categories,
        resolved.out.display()
    );
    Ok(())
}

// ---- pretrain ----

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// classify, axisangle or sixd
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Points per training step; 0 uses every point of each cloud.
    #[arg(long)]
    points_per_cloud: Option<usize>,
    /// Backbone widths, comma separated.
    #[arg(long)]
    widths: Option<String>,
    /// Canonical up axis: one of +x -x +y -y +z -z.
    #[arg(long)]
    up: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PretrainResolved {
    command: &'static str,
    task: String,
    k: usize,
    data: PathBuf,
    epochs: usize,
    batch: usize,
    lr: f64,
    points_per_cloud: usize,
    widths: String,
    up: String,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn run_pretrain(args: PretrainArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let default_widths = DEFAULT_WIDTHS
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let resolved = PretrainResolved {
        command: "pretrain",
        task: field(args.task, &file, "task")?.unwrap_or_else(|| "classify".into()),
        k: field(args.k, &file, "k")?.unwrap_or(18),
        data: required(args.data, &file, "data")?,
        epochs: field(args.epochs, &file, "epochs")?.unwrap_or(15),
        batch: field(args.batch, &file, "batch")?.unwrap_or(16),
        lr: field(args.lr, &file, "lr")?.unwrap_or(1e-3),
        points_per_cloud: field(args.points_per_cloud, &file, "points_per_cloud")?.unwrap_or(128),
        widths: field(args.widths, &file, "widths")?.unwrap_or(default_widths),
        up: field(args.up, &file, "up")?.unwrap_or_else(|| "+y".into()),
        seed: resolve_seed(args.seed, &file)?,
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out: required(args.out, &file, "out")?,
    };
    let task = match resolved.task.as_str() {
        "classify" => PretextTask::Classify { k: resolved.k },
        "axisangle" => PretextTask::AxisAngle,
        "sixd" => PretextTask::SixD,
        other => return Err(usage(format!("unknown task {other:?}"))),
    };
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;

    let manifest = load_manifest(&resolved.data, "train")?;
    let config = TrainConfig {
        epochs: resolved.epochs,
        batch_size: resolved.batch,
        learning_rate: resolved.lr,
        seed: resolved.seed,
        points_per_cloud: if resolved.points_per_cloud == 0 {
            None
        } else {
            Some(resolved.points_per_cloud)
        },
        threads: resolved.threads,
        widths: parse_widths(&resolved.widths)?,
        head_hidden: DEFAULT_HEAD_HIDDEN,
        up: parse_up(&resolved.up)?,
        ..TrainConfig::default()
    };
    let (model, log) = train_pretext(&manifest, task, &config)?;
    model.save(&resolved.out)?;
    log.save_csv(&resolved.out.with_extension("log.csv"))?;
    let metric = log.final_metric().unwrap_or(f64::NAN);
    println!(
        "trained {} model to {} (final held-out metric {metric})",
        task.name(),
        resolved.out.display()
    );
    Ok(())
}

// ---- extract ----

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ExtractResolved {
    command: &'static str,
    model: PathBuf,
    data: PathBuf,
    split: String,
    threads: usize,
    out: PathBuf,
}

fn run_extract(args: ExtractArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = ExtractResolved {
        command: "extract",
        model: required(args.model, &file, "model")?,
        data: required(args.data, &file, "data")?,
        split: field(args.split, &file, "split")?.unwrap_or_else(|| "train".into()),
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out: required(args.out, &file, "out")?,
    };
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;
    let model = EncoderModel::load(&resolved.model)?;
    let manifest = load_manifest(&resolved.data, &resolved.split)?;
    let features = extract_dataset_features(&model, &manifest, resolved.threads)?;
    features.save_csv(&resolved.out)?;
    println!(
        "wrote {}x{} features to {}",
        features.len(),
        features.dim,
        resolved.out.display()
    );
    Ok(())
}

// ---- svm ----

#[derive(Args)]
struct SvmArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Optional second feature files, concatenated column-wise.
    #[arg(long)]
    train_extra: Option<PathBuf>,
    #[arg(long)]
    test_extra: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct SvmResolved {
    command: &'static str,
    train: PathBuf,
    test: PathBuf,
    train_extra: Option<PathBuf>,
    test_extra: Option<PathBuf>,
    lambda: f64,
    iters: usize,
    seed: u64,
    out_dir: PathBuf,
}

fn run_svm(args: SvmArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = SvmResolved {
        command: "svm",
        train: required(args.train, &file, "train")?,
        test: required(args.test, &file, "test")?,
        train_extra: field(args.train_extra, &file, "train_extra")?,
        test_extra: field(args.test_extra, &file, "test_extra")?,
        lambda: field(args.lambda, &file, "lambda")?.unwrap_or(1e-3),
        iters: field(args.iters, &file, "iters")?.unwrap_or(2000),
        seed: resolve_seed(args.seed, &file)?,
        out_dir: field(args.out_dir, &file, "out_dir")?.unwrap_or_else(|| PathBuf::from(".")),
    };
    if resolved.train_extra.is_some() != resolved.test_extra.is_some() {
        return Err(usage(
            "--train-extra and --test-extra must be given together",
        ));
    }
    write_resolved(&resolved.out_dir, &resolved)?;

    let mut train_fm = FeatureMatrix::load_csv(&resolved.train)?;
    let mut test_fm = FeatureMatrix::load_csv(&resolved.test)?;
    if let (Some(tr), Some(te)) = (&resolved.train_extra, &resolved.test_extra) {
        train_fm = concat_features(&train_fm, &FeatureMatrix::load_csv(tr)?)?;
        test_fm = concat_features(&test_fm, &FeatureMatrix::load_csv(te)?)?;
    }
    let svm = train_svm(&train_fm, resolved.lambda, resolved.iters, resolved.seed)?;
    println!("accuracy={}", svm.accuracy(&test_fm));
    Ok(())
}

// ---- sweep ----

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated training-set fractions in (0, 1].
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepResolved {
    command: &'static str,
    model: PathBuf,
    data: PathBuf,
    fractions: String,
    lambda: f64,
    iters: usize,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn run_sweep(args: SweepArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = SweepResolved {
        command: "sweep",
        model: required(args.model, &file, "model")?,
        data: required(args.data, &file, "data")?,
        fractions: field(args.fractions, &file, "fractions")?
            .unwrap_or_else(|| "0.01,0.05,0.1,0.25,0.5,1.0".into()),
        lambda: field(args.lambda, &file, "lambda")?.unwrap_or(1e-3),
        iters: field(args.iters, &file, "iters")?.unwrap_or(2000),
        seed: resolve_seed(args.seed, &file)?,
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out: required(args.out, &file, "out")?,
    };
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;
    let fractions = parse_fractions(&resolved.fractions)?;
    let model = EncoderModel::load(&resolved.model)?;
    let train_fm = extract_dataset_features(
        &model,
        &load_manifest(&resolved.data, "train")?,
        resolved.threads,
    )?;
    let test_fm = extract_dataset_features(
        &model,
        &load_manifest(&resolved.data, "test")?,
        resolved.threads,
    )?;
    let curve = label_efficiency_sweep(
        &train_fm,
        &test_fm,
        &fractions,
        resolved.lambda,
        resolved.iters,
        resolved.seed,
    )?;
    std::fs::write(&resolved.out, sweep_to_csv(&curve))
        .map_err(|e| CliError::Runtime(Error::io(&resolved.out, e)))?;
    for (f, a) in &curve {
        println!("fraction={f} accuracy={a}");
    }
    Ok(())
}

// ---- keypoints ----

#[derive(Args)]
struct KeypointsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    points_per_cloud: Option<usize>,
    /// Category label to fine-tune on; -1 trains on all annotated entries.
    #[arg(long)]
    category: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct KeypointsResolved {
    command: &'static str,
    init: PathBuf,
    data: PathBuf,
    epochs: usize,
    batch: usize,
    lr: f64,
    points_per_cloud: usize,
    category: i64,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn run_keypoints(args: KeypointsArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = KeypointsResolved {
        command: "keypoints",
        init: required(args.init, &file, "init")?,
        data: required(args.data, &file, "data")?,
        epochs: field(args.epochs, &file, "epochs")?.unwrap_or(25),
        batch: field(args.batch, &file, "batch")?.unwrap_or(16),
        lr: field(args.lr, &file, "lr")?.unwrap_or(1e-3),
        points_per_cloud: field(args.points_per_cloud, &file, "points_per_cloud")?.unwrap_or(128),
        category: field(args.category, &file, "category")?.unwrap_or(1),
        seed: resolve_seed(args.seed, &file)?,
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out: required(args.out, &file, "out")?,
    };
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;

    let pretrained = EncoderModel::load(&resolved.init)?;
    let manifest = load_manifest(&resolved.data, "train")?;
    let config = TrainConfig {
        epochs: resolved.epochs,
        batch_size: resolved.batch,
        learning_rate: resolved.lr,
        seed: resolved.seed,
        points_per_cloud: if resolved.points_per_cloud == 0 {
            None
        } else {
            Some(resolved.points_per_cloud)
        },
        threads: resolved.threads,
        widths: pretrained.widths.clone(),
        head_hidden: pretrained.head_hidden_width,
        ..TrainConfig::default()
    };
    let category = if resolved.category < 0 {
        None
    } else {
        Some(resolved.category as usize)
    };
    let (model, log) = finetune_keypoints(&pretrained, &manifest, &config, category)?;
    model.save(&resolved.out)?;
    log.save_csv(&resolved.out.with_extension("log.csv"))?;
    println!(
        "fine-tuned keypoint model to {} (final held-out chamfer {})",
        resolved.out.display(),
        log.final_metric().unwrap_or(f64::NAN)
    );
    Ok(())
}

// ---- pck ----

#[derive(Args)]
struct PckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    category: Option<i64>,
    /// Score nearest-neighbor snapped predictions instead of raw ones.
    #[arg(long)]
    snap: bool,
    #[arg(long)]
    threshold_max: Option<f64>,
    #[arg(long)]
    threshold_step: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PckResolved {
    command: &'static str,
    model: PathBuf,
    data: PathBuf,
    split: String,
    category: i64,
    snap: bool,
    threshold_max: f64,
    threshold_step: f64,
    threads: usize,
    out: PathBuf,
}

fn run_pck(args: PckArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = PckResolved {
        command: "pck",
        model: required(args.model, &file, "model")?,
        data: required(args.data, &file, "data")?,
        split: field(args.split, &file, "split")?.unwrap_or_else(|| "test".into()),
        category: field(args.category, &file, "category")?.unwrap_or(1),
        snap: args.snap || file.get("snap").and_then(|v| v.as_bool()).unwrap_or(false),
        threshold_max: field(args.threshold_max, &file, "threshold_max")?.unwrap_or(0.2),
        threshold_step: field(args.threshold_step, &file, "threshold_step")?.unwrap_or(0.01),
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out: required(args.out, &file, "out")?,
    };
    if resolved.threshold_step <= 0.0 || resolved.threshold_max < resolved.threshold_step {
        return Err(usage("threshold grid must be positive and ascending"));
    }
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;

    let model = EncoderModel::load(&resolved.model)?;
    let manifest = load_manifest(&resolved.data, &resolved.split)?;
    let category = if resolved.category < 0 {
        None
    } else {
        Some(resolved.category as usize)
    };
    let (pred, gt) =
        predict_keypoints(&model, &manifest, category, resolved.snap, resolved.threads)?;
    let steps = (resolved.threshold_max / resolved.threshold_step).round() as usize;
    let thresholds: Vec<f64> = (0..=steps)
        .map(|i| i as f64 * resolved.threshold_step)
        .collect();
    let curve = pck(&pred, &gt, &thresholds)?;
    curve.save_csv(&resolved.out)?;
    println!(
        "pck(max threshold)={}",
        curve.values.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

// ---- eval-rotation ----

#[derive(Args)]
struct EvalRotationArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    points_per_cloud: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    up: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalRotationResolved {
    command: &'static str,
    model: PathBuf,
    data: PathBuf,
    split: String,
    points_per_cloud: usize,
    repeats: usize,
    up: String,
    seed: u64,
    threads: usize,
    out_dir: PathBuf,
}

fn run_eval_rotation(args: EvalRotationArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = EvalRotationResolved {
        command: "eval-rotation",
        model: required(args.model, &file, "model")?,
        data: required(args.data, &file, "data")?,
        split: field(args.split, &file, "split")?.unwrap_or_else(|| "test".into()),
        points_per_cloud: field(args.points_per_cloud, &file, "points_per_cloud")?.unwrap_or(128),
        repeats: field(args.repeats, &file, "repeats")?.unwrap_or(4),
        up: field(args.up, &file, "up")?.unwrap_or_else(|| "+y".into()),
        seed: resolve_seed(args.seed, &file)?,
        threads: field(args.threads, &file, "threads")?.unwrap_or(1),
        out_dir: field(args.out_dir, &file, "out_dir")?.unwrap_or_else(|| PathBuf::from(".")),
    };
    write_resolved(&resolved.out_dir, &resolved)?;
    let model = EncoderModel::load(&resolved.model)?;
    let manifest = load_manifest(&resolved.data, &resolved.split)?;
    let accuracy = eval_rotation_accuracy(
        &model,
        &manifest,
        parse_up(&resolved.up)?,
        resolved.seed,
        if resolved.points_per_cloud == 0 {
            None
        } else {
            Some(resolved.points_per_cloud)
        },
        resolved.repeats,
        resolved.threads,
    )?;
    println!("accuracy={accuracy}");
    Ok(())
}

// ---- dirs ----

#[derive(Args)]
struct DirsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DirsResolved {
    command: &'static str,
    k: usize,
    out: PathBuf,
}

fn run_dirs(args: DirsArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let resolved = DirsResolved {
        command: "dirs",
        k: required(args.k, &file, "k")?,
        out: required(args.out, &file, "out")?,
    };
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;
    let ds = crate::dirset::DirectionSet::build(resolved.k)?;
    ds.save_csv(&resolved.out)?;
    println!("wrote {} directions to {}", ds.k, resolved.out.display());
    Ok(())
}

// ---- plot ----

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// pck, sweep or table1
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input curve CSVs.
    inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct PlotResolved {
    command: &'static str,
    kind: String,
    out: PathBuf,
    inputs: Vec<PathBuf>,
}

fn run_plot(args: PlotArgs) -> CliResult<()> {
    let file = load_config_file(&args.config)?;
    let inputs = if args.inputs.is_empty() {
        field(None, &file, "inputs")?.unwrap_or_default()
    } else {
        args.inputs
    };
    let resolved = PlotResolved {
        command: "plot",
        kind: required(args.kind, &file, "kind")?,
        out: required(args.out, &file, "out")?,
        inputs,
    };
    if resolved.inputs.is_empty() {
        return Err(usage("plot needs at least one input CSV"));
    }
    let kind = PlotKind::parse(&resolved.kind).map_err(|e| usage(e.to_string()))?;
    write_resolved(&out_dir_of(&resolved.out), &resolved)?;
    let svg = render_plot(&resolved.inputs, kind)?;
    std::fs::write(&resolved.out, svg)
        .map_err(|e| CliError::Runtime(Error::io(&resolved.out, e)))?;
    println!("wrote {}", resolved.out.display());
    Ok(())
}
