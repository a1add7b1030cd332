//! adlocus command line: synth / train / predict / eval / sweep / roc.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Every run prints
//! its resolved configuration before doing any work, and all outputs are
//! byte-reproducible for identical inputs and seeds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use adlocus_core::data::{generate_synthetic, load_image_to, DatasetManifest, SynthConfig};
use adlocus_core::metrics::{
    best_threshold, binarize, evaluate_dataset_sized, roc_to_csv, sweep_dataset_sized,
    sweep_to_csv, write_text,
};
use adlocus_core::model::{
    build_model, forward, load_weights, save_weights, ModelConfig, ModelParams,
};
use adlocus_core::train::{train_sized, TrainConfig};

#[derive(Parser)]
#[command(name = "adlocus", version, about = "Billboard segmentation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image/mask dataset with a manifest.
    Synth(SynthArgs),
    /// Train the model on a manifest; writes checkpoints and a loss CSV.
    Train(TrainArgs),
    /// Run inference on one image; writes probability and binary mask PNGs.
    Predict(PredictArgs),
    /// Evaluate a manifest; writes per-image metrics CSV with a MEAN row.
    Eval(EvalArgs),
    /// Sweep binarization thresholds; writes the sweep CSV.
    Sweep(SweepArgs),
    /// Emit the ROC curve (fpr,tpr by threshold) for a manifest.
    Roc(RocArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for images/, masks/, and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    /// Number of image/mask pairs to generate.
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding config defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training split manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for checkpoints, model.adlw, and loss.csv.
    #[arg(long)]
    out: PathBuf,
    /// Initial weights; a fresh model is built when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seeds both weight initialization and epoch shuffling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Input image (PNG).
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Output directory for prob.png and mask.png.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Output directory for metrics.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Output directory for sweep.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Output directory for roc.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Optional JSON config file; any subset of fields may be given and the rest
/// keep their defaults. Explicit command-line flags win over file values.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
    synth: Option<SynthConfig>,
    /// Validation split manifest for per-epoch validation loss.
    val_manifest: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn model(&self) -> ModelConfig {
        self.model.clone().unwrap_or_default()
    }

    fn train(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }

    fn synth(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_default()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Roc(args) => cmd_roc(args),
    }
}

fn print_config(command: &str, pairs: &[(&str, String)]) {
    println!("resolved config:");
    println!("  command = {command}");
    for (k, v) in pairs {
        println!("  {k} = {v}");
    }
}

fn load_params(path: &Path) -> Result<ModelParams<f64>> {
    load_weights::<f64>(path).with_context(|| format!("loading weights {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut config = file.synth();
    config.count = args.count;
    config.seed = args.seed;
    print_config(
        "synth",
        &[
            ("out", args.out.display().to_string()),
            ("count", config.count.to_string()),
            ("seed", config.seed.to_string()),
            ("image_size", format!("{:?}", config.image_size)),
            ("rect_count_range", format!("{:?}", config.rect_count_range)),
            (
                "rect_area_fraction",
                format!("{:?}", config.rect_area_fraction),
            ),
        ],
    );
    let manifest = generate_synthetic(&config, &args.out)?;
    println!(
        "wrote {} pairs and {}",
        manifest.len(),
        args.out.join("manifest.csv").display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut model_config = file.model();
    let mut train_config = file.train();
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        train_config.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        train_config.batch_size = batch;
    }
    if let Some(seed) = args.seed {
        train_config.seed = seed;
        model_config.seed = seed;
    }

    let manifest = load_manifest(&args.manifest)?;
    let val_manifest = file
        .val_manifest
        .as_deref()
        .map(load_manifest)
        .transpose()?;
    ensure_dir(&args.out)?;

    print_config(
        "train",
        &[
            ("manifest", args.manifest.display().to_string()),
            (
                "val_manifest",
                file.val_manifest
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "none".into()),
            ),
            ("out", args.out.display().to_string()),
            (
                "init_weights",
                args.weights
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "fresh".into()),
            ),
            ("epochs", train_config.epochs.to_string()),
            ("learning_rate", train_config.learning_rate.to_string()),
            ("batch_size", train_config.batch_size.to_string()),
            ("seed", train_config.seed.to_string()),
            ("optimizer", format!("{:?}", train_config.optimizer)),
            ("input_size", format!("{:?}", model_config.input_size)),
        ],
    );

    let params = match &args.weights {
        Some(path) => {
            let params = load_params(path)?;
            params.check_matches(&model_config)?;
            params
        }
        None => build_model::<f64>(&model_config)?,
    };

    let (params, report) = train_sized(
        params,
        &manifest,
        val_manifest.as_ref(),
        &train_config,
        Some(&args.out),
        model_config.input_size,
    )?;

    report.write_csv(&args.out.join("loss.csv"))?;
    let model_path = args.out.join("model.adlw");
    save_weights(&params, &model_path)?;
    println!(
        "trained {} epochs in {:.1}s; final loss {}; weights at {}",
        report.train_loss.len(),
        report.wall_seconds,
        report.train_loss.last().unwrap(),
        model_path.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let model_config = file.model();
    print_config(
        "predict",
        &[
            ("image", args.image.display().to_string()),
            ("weights", args.weights.display().to_string()),
            ("out", args.out.display().to_string()),
            ("threshold", args.threshold.to_string()),
            ("input_size", format!("{:?}", model_config.input_size)),
        ],
    );

    let params = load_params(&args.weights)?;
    let image = load_image_to::<f64>(&args.image, model_config.input_size)?;
    let prob = forward(&params, &image)?;
    let mask = binarize(&prob, args.threshold);
    ensure_dir(&args.out)?;

    let (h, w) = prob.dims();
    let mut prob_png = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let p = prob.values().at3(0, y, x);
            prob_png.put_pixel(x as u32, y as u32, image::Luma([(p * 65535.0).round() as u16]));
        }
    }
    let prob_path = args.out.join("prob.png");
    prob_png
        .save(&prob_path)
        .with_context(|| format!("writing {}", prob_path.display()))?;

    let mut mask_png = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let on = mask.values().at3(0, y, x) == 1.0;
            mask_png.put_pixel(x as u32, y as u32, image::Luma([if on { 255 } else { 0 }]));
        }
    }
    let mask_path = args.out.join("mask.png");
    mask_png
        .save(&mask_path)
        .with_context(|| format!("writing {}", mask_path.display()))?;

    println!(
        "wrote {} and {}",
        prob_path.display(),
        mask_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let model_config = file.model();
    print_config(
        "eval",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("weights", args.weights.display().to_string()),
            ("out", args.out.display().to_string()),
            ("threshold", args.threshold.to_string()),
            ("input_size", format!("{:?}", model_config.input_size)),
        ],
    );
    let params = load_params(&args.weights)?;
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out)?;

    let report = evaluate_dataset_sized(&params, &manifest, args.threshold, model_config.input_size)?;
    let csv_path = args.out.join("metrics.csv");
    report.write_csv(&csv_path)?;
    println!(
        "evaluated {} images: PA {} MA {} mIOU {} fwIOU {}",
        report.per_image.len(),
        report.mean_pa,
        report.mean_ma,
        report.mean_miou,
        report.mean_fwiou
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let model_config = file.model();
    print_config(
        "sweep",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("weights", args.weights.display().to_string()),
            ("out", args.out.display().to_string()),
            ("input_size", format!("{:?}", model_config.input_size)),
        ],
    );
    let params = load_params(&args.weights)?;
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out)?;

    let points = sweep_dataset_sized(&params, &manifest, model_config.input_size)?;
    let csv_path = args.out.join("sweep.csv");
    write_text(&csv_path, &sweep_to_csv(&points))?;
    println!("best threshold = {}", best_threshold(&points));
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_roc(args: RocArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let model_config = file.model();
    print_config(
        "roc",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("weights", args.weights.display().to_string()),
            ("out", args.out.display().to_string()),
            ("input_size", format!("{:?}", model_config.input_size)),
        ],
    );
    let params = load_params(&args.weights)?;
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out)?;

    let points = sweep_dataset_sized(&params, &manifest, model_config.input_size)?;
    let csv_path = args.out.join("roc.csv");
    write_text(&csv_path, &roc_to_csv(&points))?;
    println!("wrote {}", csv_path.display());
    Ok(())
}
