use std::path::Path;
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use thiserror::Error;

use super::{CliError, PipelineConfig};
use crate::align::{pair_views, sort_grid, AlignError, GridLayout};
use crate::dataset::{DatasetError, Manifest, SceneEntry, View, ViewKey};
use crate::detect::{argmax, nms, validate_scores, Backend, BackendError, CropQuery, DetBox, DetectorInput, Letterbox};
use crate::grade::{
    box_pixels, build_report, date_mask, estimate_area, estimate_weight, fuse_classes, merge_reports, BatchReport,
    DateRecord, GradeError, StageTimings,
};
use crate::raster::{
    decode_image, homography_from_quad, largest_quad, otsu_threshold, threshold, warp, Quad, Raster, RasterError,
};

/// Failure of one scene pair; other scenes are unaffected.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{view} view: {source}")]
    Raster {
        view: View,
        #[source]
        source: RasterError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Grade(#[from] GradeError),
    #[error("{view} view: detection {index} covers no canvas pixels")]
    EmptyCrop { view: View, index: usize },
}

/// Rectified canvas plus the quad it was cut from.
#[derive(Debug, Clone)]
pub struct Rectified {
    pub canvas: Raster,
    pub quad: Quad,
}

/// Threshold (Otsu unless fixed), largest quadrilateral, homography and warp
/// onto the configured canvas.
pub fn rectify(img: &Raster, cfg: &PipelineConfig) -> Result<Rectified, RasterError> {
    let gray = img.to_gray();
    let t = match cfg.threshold {
        Some(t) => t,
        None => otsu_threshold(&gray)?,
    };
    let mask = threshold(&gray, t)?;
    let quad = largest_quad(&mask)?;
    let (w, h) = cfg.canvas_size();
    let hom = homography_from_quad(&quad, w, h)?;
    let canvas = warp(img, &hom, w, h)?.with_mm_per_px(cfg.mm_per_px)?;
    Ok(Rectified { canvas, quad })
}

struct ViewResult {
    canvas: Raster,
    layout: GridLayout,
}

fn detect_view(
    key: &ViewKey,
    canvas: Raster,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
    t: &mut StageTimings,
) -> Result<ViewResult, SceneError> {
    let start = Instant::now();
    let lb = Letterbox::new(canvas.width(), canvas.height(), cfg.detector_input);
    let input = lb.apply(&canvas).map_err(|source| SceneError::Raster { view: key.view, source })?;
    let raw = backend.detect_scene(&DetectorInput {
        key,
        image: &input,
        letterbox: &lb,
    })?;
    let on_canvas: Vec<DetBox> = raw.iter().filter_map(|b| lb.to_canvas(b)).collect();
    let kept = nms(&on_canvas, cfg.nms_iou);
    t.detect_ms += ms(start);

    let start = Instant::now();
    let layout = sort_grid(&kept, cfg.grid.rows, cfg.grid.cols);
    t.align_ms += ms(start);
    debug!("{key}: {} detections, {} unassigned", kept.len(), layout.unassigned().len());
    Ok(ViewResult { canvas, layout })
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn classify(
    key: &ViewKey,
    view: &ViewResult,
    index: usize,
    backend: &dyn Backend,
) -> Result<usize, SceneError> {
    let region = &view.layout.detections()[index];
    let (x0, y0, x1, y1) = box_pixels(region, view.canvas.width(), view.canvas.height());
    let crop = view
        .canvas
        .crop(x0, y0, x1, y1)
        .ok_or(SceneError::EmptyCrop { view: key.view, index })?;
    let scores = backend.classify_crop(&CropQuery {
        key,
        region,
        crop: &crop,
    })?;
    validate_scores(&scores)?;
    Ok(argmax(&scores).expect("validated scores are non-empty"))
}

fn view_area(view: &ViewResult, index: usize) -> Result<f64, GradeError> {
    let mask = date_mask(&view.canvas, &view.layout.detections()[index]);
    estimate_area(&mask, view.canvas.mm_per_px())
}

/// Everything after decoding for one scene pair.
pub fn process_pair(
    scene_id: &str,
    top: &Raster,
    bottom: &Raster,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
    mut timing: StageTimings,
) -> Result<BatchReport, SceneError> {
    let total = Instant::now();
    let start = Instant::now();
    let rect = |img: &Raster, view: View| {
        rectify(img, cfg)
            .map(|r| r.canvas)
            .map_err(|source| SceneError::Raster { view, source })
    };
    let top_canvas = rect(top, View::Top)?;
    let bottom_canvas = rect(bottom, View::Bottom)?;
    timing.rectify_ms += ms(start);

    let top_key = ViewKey::new(scene_id, View::Top);
    let bottom_key = ViewKey::new(scene_id, View::Bottom);
    let tv = detect_view(&top_key, top_canvas, cfg, backend, &mut timing)?;
    let bv = detect_view(&bottom_key, bottom_canvas, cfg, backend, &mut timing)?;

    let start = Instant::now();
    let pairing = pair_views(&tv.layout, &bv.layout, cfg.mirror)?;
    timing.align_ms += ms(start);

    let mut classify_ms = 0.0;
    let start = Instant::now();
    let mut records = Vec::with_capacity(pairing.pairs.len());
    for p in &pairing.pairs {
        let c0 = Instant::now();
        let top_class = p.top.map(|i| classify(&top_key, &tv, i, backend)).transpose()?;
        let bottom_class = p.bottom.map(|i| classify(&bottom_key, &bv, i, backend)).transpose()?;
        classify_ms += ms(c0);
        let final_class = fuse_classes(top_class, bottom_class, &cfg.taxonomy)?;
        let mut areas = Vec::with_capacity(2);
        if let Some(i) = p.top {
            areas.push(view_area(&tv, i)?);
        }
        if let Some(i) = p.bottom {
            areas.push(view_area(&bv, i)?);
        }
        let area_mm2 = areas.iter().sum::<f64>() / areas.len() as f64;
        records.push(DateRecord {
            scene: scene_id.to_string(),
            row: p.cell.0,
            col: p.cell.1,
            top_class,
            bottom_class,
            final_class,
            area_mm2,
            weight_g: estimate_weight(area_mm2, &cfg.weight),
        });
    }
    timing.classify_ms += classify_ms;
    timing.grade_ms += ms(start) - classify_ms;

    timing.total_ms += ms(total);
    let mut report = build_report(records, &cfg.taxonomy, cfg.emit_timings.then_some(timing))?;
    report.scene_ids = vec![scene_id.to_string()];
    report.unassigned_count = tv.layout.unassigned().len() + bv.layout.unassigned().len();
    Ok(report)
}

fn load_image(manifest: &Manifest, entry: &SceneEntry, view: View) -> Result<Raster, SceneError> {
    let path = manifest.resolve(entry.image(view));
    let bytes = std::fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
    decode_image(&bytes).map_err(|source| SceneError::Raster { view, source })
}

/// Decodes and processes one manifest scene.
pub fn process_scene(
    manifest: &Manifest,
    entry: &SceneEntry,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
) -> Result<BatchReport, SceneError> {
    let start = Instant::now();
    let top = load_image(manifest, entry, View::Top)?;
    let bottom = load_image(manifest, entry, View::Bottom)?;
    let timing = StageTimings {
        decode_ms: ms(start),
        total_ms: ms(start),
        ..Default::default()
    };
    process_pair(&entry.id, &top, &bottom, cfg, backend, timing)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Successful scene reports sorted by scene id.
    pub scenes: Vec<BatchReport>,
    pub aggregate: BatchReport,
}

impl PipelineOutput {
    pub fn failed(&self) -> bool {
        !self.aggregate.failures.is_empty()
    }

    /// `report.json`, `report.csv` and `scenes/<id>.json` under `dir`.
    pub fn write(&self, dir: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
        let scenes_dir = dir.join("scenes");
        std::fs::create_dir_all(&scenes_dir).map_err(|e| CliError::io(&scenes_dir, e))?;
        for r in &self.scenes {
            let p = scenes_dir.join(format!("{}.json", r.scene_ids[0]));
            std::fs::write(&p, r.to_json() + "\n").map_err(|e| CliError::io(&p, e))?;
        }
        let p = dir.join("report.json");
        std::fs::write(&p, self.aggregate.to_json() + "\n").map_err(|e| CliError::io(&p, e))?;
        let p = dir.join("report.csv");
        std::fs::write(&p, self.aggregate.to_csv(&cfg.taxonomy)).map_err(|e| CliError::io(&p, e))?;
        Ok(())
    }
}

/// Runs every scene on a pool of `cfg.workers` threads. Scene failures are
/// collected in the aggregate's `failures`; output order is by scene id
/// whatever the worker count.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &Manifest, backend: &dyn Backend) -> Result<PipelineOutput, CliError> {
    cfg.validate()?;
    if manifest.scenes.is_empty() {
        return Err(DatasetError::EmptyManifest.into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let mut results: Vec<(String, Result<BatchReport, SceneError>)> = pool.install(|| {
        manifest
            .scenes
            .par_iter()
            .map(|e| (e.id.clone(), process_scene(manifest, e, cfg, backend)))
            .collect()
    });
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut scenes = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(rep) => {
                info!("{id}: {} dates", rep.total_dates);
                scenes.push(rep);
            }
            Err(e) => {
                warn!("{id}: {e}");
                failures.push(format!("{id}: {e}"));
            }
        }
    }
    let mut aggregate = merge_reports(&scenes, &cfg.taxonomy)?;
    if !cfg.emit_timings {
        aggregate.timing = None;
    }
    aggregate.failures = failures;
    Ok(PipelineOutput { scenes, aggregate })
}
