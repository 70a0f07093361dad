//! Synthetic tray photographs with known geometry, labels and grades.
//!
//! Each view is rendered analytically: every photo pixel is mapped through
//! the inverse tray homography onto the canvas, where the tray is white and
//! dates are filled ellipses on the grid lattice. The bottom view shows the
//! same dates mirrored left to right.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliError, GridConfig, PipelineConfig};
use crate::dataset::{serialize_labels, Label, Manifest, SceneEntry, View};
use crate::grade::{fuse_classes, ClassTaxonomy, ColorTag, WeightCalibration};
use crate::raster::{encode_image, homography_from_corners, Point, Quad, Raster};
use crate::rng::stream_rng;

const BACKGROUND: u8 = 0;
const TRAY: [u8; 3] = [250, 250, 250];
const DARK: [u8; 3] = [52, 34, 28];
const GOLDEN: [u8; 3] = [178, 128, 58];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub grid: GridConfig,
    pub scenes: usize,
    pub seed: u64,
    /// Date center offset, as a fraction of the cell size.
    pub center_jitter: f64,
    /// Largest tray-corner displacement, as a fraction of the photo size.
    pub perspective: f64,
    pub photo_w: usize,
    pub photo_h: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub mm_per_px: f64,
    pub taxonomy: ClassTaxonomy,
}

impl FixtureSpec {
    /// Matches `cfg`'s grid and canvas; the photo has the canvas size.
    pub fn for_config(cfg: &PipelineConfig, scenes: usize, seed: u64) -> Self {
        let (w, h) = cfg.canvas_size();
        Self {
            grid: cfg.grid,
            scenes,
            seed,
            center_jitter: 0.0,
            perspective: 0.05,
            photo_w: w,
            photo_h: h,
            canvas_w: w,
            canvas_h: h,
            mm_per_px: cfg.mm_per_px,
            taxonomy: cfg.taxonomy.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return bad("fixture grid must be non-empty");
        }
        if !(0.0..=0.15).contains(&self.perspective) {
            return bad("perspective must be in [0, 0.15]");
        }
        if !(0.0..=0.5).contains(&self.center_jitter) {
            return bad("center_jitter must be in [0, 0.5]");
        }
        if self.photo_w < 16 || self.photo_h < 16 || self.canvas_w < 16 || self.canvas_h < 16 {
            return bad("images must be at least 16x16");
        }
        Ok(())
    }
}

/// One date; geometry in canvas edge coordinates of the top view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DateTruth {
    pub row: usize,
    pub col: usize,
    pub top_class: usize,
    pub bottom_class: usize,
    pub final_class: usize,
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Analytic ellipse area.
    pub area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub id: String,
    /// Tray corners in photo pixel coordinates, canonical order.
    pub top_quad: [Point; 4],
    pub bottom_quad: [Point; 4],
    pub dates: Vec<DateTruth>,
}

impl SceneTruth {
    /// Count of final classes, indexed by class id.
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for d in &self.dates {
            c[d.final_class] += 1;
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub top: Raster,
    pub bottom: Raster,
    pub top_labels: Vec<Label>,
    pub bottom_labels: Vec<Label>,
    pub truth: SceneTruth,
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

fn random_quad(rng: &mut ChaCha8Rng, spec: &FixtureSpec) -> Quad {
    let (w, h) = ((spec.photo_w - 1) as f64, (spec.photo_h - 1) as f64);
    let m = spec.perspective + 0.02;
    let base = [(m, m), (1.0 - m, m), (1.0 - m, 1.0 - m), (m, 1.0 - m)];
    loop {
        let mut pts = [Point::new(0.0, 0.0); 4];
        for (p, (bx, by)) in pts.iter_mut().zip(base) {
            let dx = if spec.perspective > 0.0 {
                rng.random_range(-spec.perspective..=spec.perspective)
            } else {
                0.0
            };
            let dy = if spec.perspective > 0.0 {
                rng.random_range(-spec.perspective..=spec.perspective)
            } else {
                0.0
            };
            *p = Point::new(((bx + dx) * w).round(), ((by + dy) * h).round());
        }
        if let Ok(q) = Quad::new(pts) {
            return q;
        }
    }
}

fn color_of(tax: &ClassTaxonomy, class: usize) -> [u8; 3] {
    let info = &tax.classes()[class];
    if info.color == Some(ColorTag::Golden) || info.name.contains("Golden") {
        GOLDEN
    } else {
        DARK
    }
}

struct Blob {
    class_id: usize,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [u8; 3],
}

impl Blob {
    fn contains(&self, u: f64, v: f64) -> bool {
        let dx = (u - self.cx) / self.rx;
        let dy = (v - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

/// Renders one view. `blobs` is indexed by canvas cell.
fn render_view(spec: &FixtureSpec, quad: &Quad, blobs: &[Option<Blob>]) -> Raster {
    let (cw, ch) = (spec.canvas_w as f64, spec.canvas_h as f64);
    let canvas_corners = [
        Point::new(0.0, 0.0),
        Point::new(cw - 1.0, 0.0),
        Point::new(cw - 1.0, ch - 1.0),
        Point::new(0.0, ch - 1.0),
    ];
    let to_canvas = homography_from_corners(&quad.corners(), &canvas_corners).expect("fixture quad is convex");
    let (cell_w, cell_h) = (cw / spec.grid.cols as f64, ch / spec.grid.rows as f64);
    let mut img = Raster::filled(spec.photo_w, spec.photo_h, 3, BACKGROUND).expect("positive size");
    for y in 0..spec.photo_h {
        for x in 0..spec.photo_w {
            let Some(q) = to_canvas.apply(Point::new(x as f64, y as f64)) else {
                continue;
            };
            if !(q.x >= 0.0 && q.x <= cw - 1.0 && q.y >= 0.0 && q.y <= ch - 1.0) {
                continue;
            }
            // canvas edge coordinates
            let (u, v) = (q.x + 0.5, q.y + 0.5);
            let c = ((u / cell_w) as usize).min(spec.grid.cols - 1);
            let r = ((v / cell_h) as usize).min(spec.grid.rows - 1);
            let color = match &blobs[r * spec.grid.cols + c] {
                Some(b) if b.contains(u, v) => b.color,
                _ => TRAY,
            };
            img.pixel_mut(x, y).copy_from_slice(&color);
        }
    }
    img
}

fn labels(blobs: &[Option<Blob>], cw: f64, ch: f64) -> Vec<Label> {
    blobs.iter().flatten().map(|b| label(b, cw, ch)).collect()
}

fn label(b: &Blob, cw: f64, ch: f64) -> Label {
    Label {
        class_id: b.class_id,
        cx: b.cx / cw,
        cy: b.cy / ch,
        w: 2.0 * b.rx / cw,
        h: 2.0 * b.ry / ch,
    }
}

/// Deterministic in `(spec.seed, index)`.
pub fn generate_scene(spec: &FixtureSpec, index: usize) -> GeneratedScene {
    let mut rng = stream_rng(spec.seed, index as u64);
    let top_quad = random_quad(&mut rng, spec);
    let bottom_quad = random_quad(&mut rng, spec);
    let (rows, cols) = (spec.grid.rows, spec.grid.cols);
    let (cw, ch) = (spec.canvas_w as f64, spec.canvas_h as f64);
    let (cell_w, cell_h) = (cw / cols as f64, ch / rows as f64);
    let k = spec.taxonomy.len();

    let mut dates = Vec::with_capacity(rows * cols);
    let mut top_blobs: Vec<Option<Blob>> = (0..rows * cols).map(|_| None).collect();
    let mut bottom_blobs: Vec<Option<Blob>> = (0..rows * cols).map(|_| None).collect();
    for r in 0..rows {
        for c in 0..cols {
            let rx = 0.3 * cell_w * rng.random_range(0.9..=1.1);
            let ry = 0.3 * cell_h * rng.random_range(0.9..=1.1);
            let mut cx = (c as f64 + 0.5) * cell_w;
            let mut cy = (r as f64 + 0.5) * cell_h;
            if spec.center_jitter > 0.0 {
                // keep the ellipse inside its cell
                let jx = (spec.center_jitter * cell_w).min(0.5 * cell_w - rx - 1.0).max(0.0);
                let jy = (spec.center_jitter * cell_h).min(0.5 * cell_h - ry - 1.0).max(0.0);
                cx += rng.random_range(-jx..=jx);
                cy += rng.random_range(-jy..=jy);
            }
            let top_class = rng.random_range(0..k);
            let bottom_class = rng.random_range(0..k);
            let final_class = fuse_classes(Some(top_class), Some(bottom_class), &spec.taxonomy).expect("ids in range");
            let tb = Blob {
                class_id: top_class,
                cx,
                cy,
                rx,
                ry,
                color: color_of(&spec.taxonomy, top_class),
            };
            let bb = Blob {
                class_id: bottom_class,
                cx: cw - cx,
                color: color_of(&spec.taxonomy, bottom_class),
                ..tb
            };
            top_blobs[r * cols + c] = Some(tb);
            bottom_blobs[r * cols + (cols - 1 - c)] = Some(bb);
            dates.push(DateTruth {
                row: r,
                col: c,
                top_class,
                bottom_class,
                final_class,
                cx,
                cy,
                rx,
                ry,
                area_mm2: std::f64::consts::PI * rx * ry * spec.mm_per_px * spec.mm_per_px,
            });
        }
    }
    GeneratedScene {
        top: render_view(spec, &top_quad, &top_blobs),
        bottom: render_view(spec, &bottom_quad, &bottom_blobs),
        top_labels: labels(&top_blobs, cw, ch),
        bottom_labels: labels(&bottom_blobs, cw, ch),
        truth: SceneTruth {
            id: scene_id(index),
            top_quad: top_quad.corners(),
            bottom_quad: bottom_quad.corners(),
            dates,
        },
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes images, labels, per-scene truth, `manifest.json` and a matching
/// `config.json` (oracle backend, unit weight calibration) under `out`.
/// Returns the manifest path.
pub fn generate_fixtures(spec: &FixtureSpec, out: &Path) -> Result<PathBuf, CliError> {
    spec.validate()?;
    for sub in ["images", "labels", "truth"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(spec.scenes);
    for i in 0..spec.scenes {
        let g = generate_scene(spec, i);
        let id = &g.truth.id;
        let rel = |dir: &str, view: View, ext: &str| PathBuf::from(dir).join(format!("{id}_{view}.{ext}"));
        for (view, img, labels) in [
            (View::Top, &g.top, &g.top_labels),
            (View::Bottom, &g.bottom, &g.bottom_labels),
        ] {
            write(&out.join(rel("images", view, "ppm")), encode_image(img))?;
            write(&out.join(rel("labels", view, "txt")), serialize_labels(labels))?;
        }
        let truth = serde_json::to_string_pretty(&g.truth).expect("truth serializes") + "\n";
        write(&out.join("truth").join(format!("{id}.json")), truth)?;
        entries.push(SceneEntry {
            id: id.clone(),
            top: rel("images", View::Top, "ppm"),
            bottom: rel("images", View::Bottom, "ppm"),
            labels_top: rel("labels", View::Top, "txt"),
            labels_bottom: rel("labels", View::Bottom, "txt"),
            category: "synthetic".into(),
            split: None,
        });
    }
    let manifest = Manifest::new(entries, spec.taxonomy.names())?;
    let manifest_path = out.join("manifest.json");
    manifest.save(&manifest_path)?;

    let mut cfg = PipelineConfig::new(WeightCalibration::new(1.0, 0.0).expect("unit calibration"));
    cfg.grid = spec.grid;
    cfg.mm_per_px = spec.mm_per_px;
    cfg.tray_mm = [spec.canvas_w as f64 * spec.mm_per_px, spec.canvas_h as f64 * spec.mm_per_px];
    cfg.taxonomy = spec.taxonomy.clone();
    cfg.seed = spec.seed;
    write(&out.join("config.json"), cfg.to_json())?;
    Ok(manifest_path)
}

/// Reads `truth/<id>.json` next to a generated manifest.
pub fn load_truth(dir: &Path, id: &str) -> Result<SceneTruth, CliError> {
    let p = dir.join("truth").join(format!("{id}.json"));
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FixtureSpec {
        let mut cfg = PipelineConfig::new(WeightCalibration::new(1.0, 0.0).unwrap());
        cfg.mm_per_px = 1.0;
        let mut s = FixtureSpec::for_config(&cfg, 2, 7);
        s.photo_w = 400;
        s.photo_h = 560;
        s
    }

    #[test]
    fn deterministic() {
        let s = small();
        let a = generate_scene(&s, 1);
        let b = generate_scene(&s, 1);
        assert_eq!(a.top, b.top);
        assert_eq!(a.bottom, b.bottom);
        assert_eq!(a.top_labels, b.top_labels);
        assert_ne!(generate_scene(&s, 0).top, a.top);
    }

    #[test]
    fn fifty_labels_on_lattice() {
        let s = small();
        let g = generate_scene(&s, 0);
        assert_eq!(g.top_labels.len(), 50);
        assert_eq!(g.bottom_labels.len(), 50);
        for (i, l) in g.top_labels.iter().enumerate() {
            let (r, c) = (i / 10, i % 10);
            assert_eq!(l.cx, (c as f64 + 0.5) * 32.0 / 320.0);
            assert_eq!(l.cy, (r as f64 + 0.5) * 90.0 / 450.0);
        }
    }

    #[test]
    fn bottom_view_is_mirrored() {
        let g = generate_scene(&small(), 0);
        for d in &g.truth.dates {
            let top = g.top_labels[d.row * 10 + d.col];
            let bottom = g.bottom_labels[d.row * 10 + (9 - d.col)];
            assert!((top.cx + bottom.cx - 1.0).abs() < 1e-12);
            assert_eq!(top.class_id, d.top_class);
            assert_eq!(bottom.class_id, d.bottom_class);
        }
    }

    #[test]
    fn photo_has_black_border_and_white_tray() {
        let s = small();
        let g = generate_scene(&s, 0);
        assert_eq!(g.top.pixel(0, 0), &[0, 0, 0]);
        let q = g.truth.top_quad;
        let cx = q.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = q.iter().map(|p| p.y).sum::<f64>() / 4.0;
        assert_ne!(g.top.pixel(cx as usize, cy as usize), &[0, 0, 0]);
    }
}
