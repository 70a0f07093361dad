use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use dategrade::align::MirrorMode;
use dategrade::cli::{
    augment_export, create_backend, generate_fixtures, run_eval, run_pipeline, BackendSpec, CliError, FixtureSpec,
    GridConfig, PipelineConfig, EXIT_ERROR, EXIT_OK, EXIT_PARTIAL,
};
use dategrade::dataset::{split_dataset, Manifest, Split};
use dategrade::grade::WeightCalibration;

#[derive(Parser)]
#[command(name = "dategrade", version, about = "Dual-view date tray grading and evaluation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// `oracle` or `model:PATH`.
    #[arg(long)]
    backend: Option<BackendSpec>,
    /// `none` or `horizontal`.
    #[arg(long)]
    mirror: Option<MirrorMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Grade every scene pair in a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Leave stage timings out so reports are byte-reproducible.
        #[arg(long)]
        no_timings: bool,
    },
    /// Score prediction files against manifest labels.
    #[command(alias = "run-eval")]
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<scene>_<view>.txt` files, `class conf cx cy w h` per line.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "model")]
        model: String,
        /// Take `match_iou` from this pipeline config.
        #[arg(long, conflicts_with = "match_iou")]
        config: Option<PathBuf>,
        /// IoU for precision, recall, F1, mIoU and class metrics (default 0.5).
        #[arg(long)]
        match_iou: Option<f64>,
        /// Measured inference time to print in the tables.
        #[arg(long)]
        inference_ms: Option<f64>,
    },
    /// Write synthetic tray photographs, labels and a manifest.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        /// Date center jitter as a fraction of the cell size.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Largest tray corner displacement as a fraction of the photo size.
        #[arg(long, default_value_t = 0.05)]
        perspective: f64,
        /// Take canvas size and taxonomy from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assign train/test splits per category.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.78)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rectify and augment scene views into a training set.
    AugmentExport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `train` or `test`; all scenes when absent.
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Augmentation seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Path, o: &Overrides) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    if let Some(b) = &o.backend {
        cfg.backend = b.clone();
    }
    if let Some(m) = o.mirror {
        cfg.mirror = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            manifest,
            out,
            overrides,
            no_timings,
        } => {
            let mut cfg = load_config(&config, &overrides)?;
            if no_timings {
                cfg.emit_timings = false;
            }
            let manifest = Manifest::load(&manifest)?;
            let backend = create_backend(&cfg, &manifest)?;
            let output = run_pipeline(&cfg, &manifest, backend.as_ref())?;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set out_dir".into()))?;
            output.write(&out, &cfg)?;
            let a = &output.aggregate;
            println!(
                "{} scenes, {} dates, {} defective, {} failed",
                a.scene_ids.len(),
                a.total_dates,
                a.total_defective,
                a.failures.len()
            );
            Ok(if output.failed() { EXIT_PARTIAL } else { EXIT_OK })
        }
        Command::Eval {
            manifest,
            predictions,
            out,
            model,
            config,
            match_iou,
            inference_ms,
        } => {
            let match_iou = match (config, match_iou) {
                (Some(p), _) => PipelineConfig::load(&p)?.match_iou,
                (None, Some(t)) => t,
                (None, None) => 0.5,
            };
            let manifest = Manifest::load(&manifest)?;
            let mut report = run_eval(&manifest, &predictions, &model, match_iou)?;
            report.inference_ms = inference_ms;
            report.write(&out)?;
            print!("{}", dategrade::eval::render_detection_table(&[report.detection_row()]));
            if let Some(row) = report.classification_row() {
                println!();
                print!("{}", dategrade::eval::render_classification_table(&[row]));
            }
            if !report.missing_predictions.is_empty() {
                println!("missing predictions: {}", report.missing_predictions.join(", "));
            }
            Ok(EXIT_OK)
        }
        Command::Fixtures {
            out,
            scenes,
            seed,
            rows,
            cols,
            jitter,
            perspective,
            config,
        } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::new(WeightCalibration::new(1.0, 0.0)?),
            };
            let mut spec = FixtureSpec::for_config(&cfg, scenes, seed);
            spec.grid = GridConfig { rows, cols };
            spec.center_jitter = jitter;
            spec.perspective = perspective;
            let path = generate_fixtures(&spec, &out)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        Command::Split {
            manifest,
            out,
            fraction,
            seed,
        } => {
            let m = Manifest::load(&manifest)?;
            let split = split_dataset(&m, fraction, seed)?;
            split.save(&out)?;
            let train = split.scenes.iter().filter(|s| s.split == Some(Split::Train)).count();
            println!("{train} train, {} test", split.scenes.len() - train);
            Ok(EXIT_OK)
        }
        Command::AugmentExport {
            config,
            manifest,
            out,
            split,
            copies,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.augment.seed = s;
            }
            let split = match split.as_deref() {
                None => None,
                Some("train") => Some(Split::Train),
                Some("test") => Some(Split::Test),
                Some(other) => return Err(CliError::Config(format!("split must be train or test, got {other:?}"))),
            };
            let m = Manifest::load(&manifest)?;
            let s = augment_export(&cfg, &m, &out, split, copies)?;
            info!("{s:?}");
            println!("{} images, {} boxes, {} mosaics", s.images, s.boxes, s.mosaics);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
