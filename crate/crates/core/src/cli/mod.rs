//! Pipeline orchestration, fixtures, evaluation runs and exports behind the
//! `dategrade` binary.

mod config;
mod evaluate;
mod fixtures;
mod pipeline;

pub use config::{BackendSpec, GridConfig, PipelineConfig, CONFIG_SCHEMA_VERSION};
pub use evaluate::{prediction_path, run_eval, EvalReport};
pub use fixtures::{generate_fixtures, generate_scene, load_truth, scene_id, DateTruth, FixtureSpec, GeneratedScene, SceneTruth};
pub use pipeline::{process_pair, process_scene, rectify, run_pipeline, PipelineOutput, Rectified, SceneError};

use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use thiserror::Error;

use crate::augment::{apply_mosaic, apply_spec, sample_spec, AugmentError, Transform, TransformSpec};
use crate::dataset::{parse_labels, serialize_labels, DatasetError, Label, Manifest, Split, View};
use crate::detect::{Backend, DetBox, OracleBackend};
use crate::eval::EvalError;
use crate::grade::GradeError;
use crate::raster::{decode_image, encode_image, Raster};
use crate::rng::stream_rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Grade(#[from] GradeError),
    #[error(transparent)]
    Eval(EvalError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("prediction directory {0} does not exist")]
    MissingPredictions(PathBuf),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Builds the configured backend. The oracle reads the manifest's labels.
pub fn create_backend(cfg: &PipelineConfig, manifest: &Manifest) -> Result<Box<dyn Backend>, CliError> {
    match &cfg.backend {
        BackendSpec::Oracle => Ok(Box::new(OracleBackend::new(
            manifest.load_annotations()?,
            cfg.oracle_jitter,
            cfg.seed,
        ))),
        BackendSpec::Model(p) => {
            if !p.exists() {
                return Err(CliError::Backend(format!("model file {} not found", p.display())));
            }
            Err(CliError::Backend(format!(
                "{}: model inference is not compiled into this build; implement `Backend` for your runtime or use `oracle`",
                p.display()
            )))
        }
    }
}

/// What `augment_export` wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub images: usize,
    pub boxes: usize,
    pub mosaics: usize,
    pub skipped_erasing: usize,
}

fn read_view(manifest: &Manifest, idx: usize, view: View, cfg: &PipelineConfig) -> Result<(Raster, Vec<DetBox>), CliError> {
    let entry = &manifest.scenes[idx];
    let p = manifest.resolve(entry.image(view));
    let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
    let img = decode_image(&bytes).map_err(|source| SceneError::Raster { view, source })?;
    let canvas = rectify(&img, cfg)
        .map_err(|source| SceneError::Raster { view, source })?
        .canvas;
    let lp = manifest.resolve(entry.labels(view));
    let text = std::fs::read_to_string(&lp).map_err(|e| CliError::io(&lp, e))?;
    let boxes = parse_labels(&text)?.iter().map(|l| l.to_box(1.0)).collect();
    Ok((canvas, boxes))
}

/// Rectifies every view of the selected scenes and writes `copies`
/// augmented versions of each to `out/images` and `out/labels`. Mosaic
/// partners are drawn from the same selection. Sampled erasing steps are
/// skipped with a warning.
pub fn augment_export(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    out: &Path,
    split: Option<Split>,
    copies: usize,
) -> Result<ExportSummary, CliError> {
    cfg.validate()?;
    let selected: Vec<usize> = (0..manifest.scenes.len())
        .filter(|&i| split.is_none() || manifest.scenes[i].split == split)
        .collect();
    if selected.is_empty() {
        return Err(DatasetError::EmptyManifest.into());
    }
    for sub in ["images", "labels"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    }
    let views: Vec<(usize, View)> = selected
        .iter()
        .flat_map(|&i| [(i, View::Top), (i, View::Bottom)])
        .collect();
    let mut summary = ExportSummary {
        images: 0,
        boxes: 0,
        mosaics: 0,
        skipped_erasing: 0,
    };
    for (v, &(idx, view)) in views.iter().enumerate() {
        let (canvas, boxes) = read_view(manifest, idx, view, cfg)?;
        for copy in 0..copies {
            let draw = (v * copies + copy) as u64;
            let spec = sample_spec(&cfg.augment, draw);
            let (mut img, mut bx) = (canvas.clone(), boxes.clone());
            if let Some((cx, cy)) = spec.mosaic() {
                let mut rng = stream_rng(cfg.augment.seed ^ 0x6d6f_7361_6963, draw);
                let mut partners = Vec::with_capacity(3);
                for _ in 0..3 {
                    let (pi, pv) = views[rng.random_range(0..views.len())];
                    partners.push(read_view(manifest, pi, pv, cfg)?);
                }
                let tiles = [
                    (&img, &bx[..]),
                    (&partners[0].0, &partners[0].1[..]),
                    (&partners[1].0, &partners[1].1[..]),
                    (&partners[2].0, &partners[2].1[..]),
                ];
                let (m, mb) = apply_mosaic(tiles, canvas.width(), canvas.height(), cx, cy)?;
                img = m;
                bx = mb;
                summary.mosaics += 1;
            }
            let mut steps = spec.without_mosaic();
            let before = steps.transforms.len();
            steps.transforms.retain(|t| *t != Transform::Erasing);
            if steps.transforms.len() != before {
                warn!("erasing is not supported; skipped for draw {draw}");
                summary.skipped_erasing += 1;
            }
            let (img, bx) = apply_spec(&img, &bx, &TransformSpec { transforms: steps.transforms })?;
            let name = format!("{}_{view}_aug{copy:03}", manifest.scenes[idx].id);
            let ip = out.join("images").join(format!("{name}.ppm"));
            std::fs::write(&ip, encode_image(&img)).map_err(|e| CliError::io(&ip, e))?;
            let labels: Vec<Label> = bx.iter().map(Label::from_box).collect();
            let lp = out.join("labels").join(format!("{name}.txt"));
            std::fs::write(&lp, serialize_labels(&labels)).map_err(|e| CliError::io(&lp, e))?;
            summary.images += 1;
            summary.boxes += labels.len();
        }
    }
    Ok(summary)
}
