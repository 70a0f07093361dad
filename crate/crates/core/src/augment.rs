//! Seeded, box-consistent augmentation.
//!
//! A [`TransformSpec`] is sampled from an [`AugmentConfig`] and a draw index,
//! then applied to an image and its normalized boxes. Geometric transforms
//! move boxes with the pixels; photometric transforms leave boxes alone.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetBox;
use crate::raster::{resize_bilinear, round_to_u8, Raster, RasterError};
use crate::rng::stream_rng;

/// Boxes keeping less than this fraction of their area after clipping are
/// dropped.
pub const MIN_KEPT_AREA: f64 = 0.1;

const BOX_TOL: f64 = 1e-9;
const GAMMA: f64 = 2.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("box outside the unit square: {0}")]
    BoxOutOfRange(String),
    #[error("transform not supported here: {0}")]
    Unsupported(&'static str),
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub hsv_h: f64,
    pub hsv_s: f64,
    pub hsv_v: f64,
    pub translate: f64,
    pub scale: f64,
    pub fliplr: f64,
    pub flipud: f64,
    pub rotate90: f64,
    pub saturation_range: f64,
    pub brightness_range: f64,
    pub exposure_range: f64,
    pub blur_max_px: f64,
    pub noise_max_frac: f64,
    pub erasing: f64,
    pub mosaic: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self::customized()
    }
}

impl AugmentConfig {
    /// Every probability and range zero.
    pub fn none() -> Self {
        Self {
            hsv_h: 0.0,
            hsv_s: 0.0,
            hsv_v: 0.0,
            translate: 0.0,
            scale: 0.0,
            fliplr: 0.0,
            flipud: 0.0,
            rotate90: 0.0,
            saturation_range: 0.0,
            brightness_range: 0.0,
            exposure_range: 0.0,
            blur_max_px: 0.0,
            noise_max_frac: 0.0,
            erasing: 0.0,
            mosaic: 0.0,
            seed: 0,
        }
    }

    /// Stock YOLO training augmentation.
    pub fn yolo_default() -> Self {
        Self {
            hsv_h: 0.015,
            hsv_s: 0.7,
            hsv_v: 0.4,
            translate: 0.1,
            scale: 0.5,
            fliplr: 0.5,
            mosaic: 1.0,
            erasing: 0.4,
            ..Self::none()
        }
    }

    /// Tuned parameters for date trays, with the photometric ranges of the
    /// preprocessing pipeline.
    pub fn customized() -> Self {
        Self {
            translate: 0.1,
            scale: 0.1,
            fliplr: 0.1,
            mosaic: 0.1,
            saturation_range: 0.15,
            brightness_range: 0.15,
            exposure_range: 0.06,
            blur_max_px: 0.6,
            noise_max_frac: 0.005,
            ..Self::none()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let unit = [
            ("hsv_h", self.hsv_h),
            ("hsv_s", self.hsv_s),
            ("hsv_v", self.hsv_v),
            ("translate", self.translate),
            ("scale", self.scale),
            ("fliplr", self.fliplr),
            ("flipud", self.flipud),
            ("rotate90", self.rotate90),
            ("saturation_range", self.saturation_range),
            ("brightness_range", self.brightness_range),
            ("exposure_range", self.exposure_range),
            ("noise_max_frac", self.noise_max_frac),
            ("erasing", self.erasing),
            ("mosaic", self.mosaic),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(AugmentError::InvalidConfig(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !(self.blur_max_px >= 0.0 && self.blur_max_px.is_finite()) {
            return Err(AugmentError::InvalidConfig(format!(
                "blur_max_px must be non-negative, got {}",
                self.blur_max_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    FlipH,
    FlipV,
    /// `k` clockwise quarter turns, 1 to 3.
    Rotate90 { k: u8 },
    /// Shift as a fraction of width and height.
    Translate { dx: f64, dy: f64 },
    /// Zoom about the image center.
    Scale { s: f64 },
    /// Hue shift in turns, saturation and value gains.
    Hsv { dh: f64, ds: f64, dv: f64 },
    Brightness { d: f64 },
    Saturation { d: f64 },
    Exposure { d: f64 },
    Blur { sigma: f64 },
    Noise { frac: f64, seed: u64 },
    Erasing,
    /// 2x2 composition split at `(cx, cy)`.
    Mosaic { cx: f64, cy: f64 },
}

impl Transform {
    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            Transform::FlipH
                | Transform::FlipV
                | Transform::Rotate90 { .. }
                | Transform::Translate { .. }
                | Transform::Scale { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformSpec {
    pub transforms: Vec<Transform>,
}

impl TransformSpec {
    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn mosaic(&self) -> Option<(f64, f64)> {
        self.transforms.iter().find_map(|t| match t {
            Transform::Mosaic { cx, cy } => Some((*cx, *cy)),
            _ => None,
        })
    }

    /// The spec without its mosaic step.
    pub fn without_mosaic(&self) -> TransformSpec {
        TransformSpec {
            transforms: self
                .transforms
                .iter()
                .filter(|t| !matches!(t, Transform::Mosaic { .. }))
                .copied()
                .collect(),
        }
    }
}

fn sym<R: Rng>(rng: &mut R, r: f64) -> f64 {
    rng.random_range(-r..=r)
}

/// Deterministic in `(cfg.seed, draw_index)`.
pub fn sample_spec(cfg: &AugmentConfig, draw_index: u64) -> TransformSpec {
    let mut rng = stream_rng(cfg.seed, draw_index);
    let mut out = Vec::new();
    let chance = |p: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let u: f64 = rng.random();
        u < p
    };

    if chance(cfg.mosaic, &mut rng) {
        let cx = rng.random_range(0.25..=0.75);
        let cy = rng.random_range(0.25..=0.75);
        out.push(Transform::Mosaic { cx, cy });
    }
    if chance(cfg.fliplr, &mut rng) {
        out.push(Transform::FlipH);
    }
    if chance(cfg.flipud, &mut rng) {
        out.push(Transform::FlipV);
    }
    if chance(cfg.rotate90, &mut rng) {
        out.push(Transform::Rotate90 {
            k: rng.random_range(1..=3),
        });
    }
    if cfg.translate > 0.0 {
        let dx = sym(&mut rng, cfg.translate);
        let dy = sym(&mut rng, cfg.translate);
        out.push(Transform::Translate { dx, dy });
    }
    if cfg.scale > 0.0 {
        out.push(Transform::Scale {
            s: 1.0 + sym(&mut rng, cfg.scale),
        });
    }
    if cfg.hsv_h > 0.0 || cfg.hsv_s > 0.0 || cfg.hsv_v > 0.0 {
        let dh = sym(&mut rng, cfg.hsv_h);
        let ds = sym(&mut rng, cfg.hsv_s);
        let dv = sym(&mut rng, cfg.hsv_v);
        out.push(Transform::Hsv { dh, ds, dv });
    }
    if cfg.brightness_range > 0.0 {
        out.push(Transform::Brightness {
            d: sym(&mut rng, cfg.brightness_range),
        });
    }
    if cfg.saturation_range > 0.0 {
        out.push(Transform::Saturation {
            d: sym(&mut rng, cfg.saturation_range),
        });
    }
    if cfg.exposure_range > 0.0 {
        out.push(Transform::Exposure {
            d: sym(&mut rng, cfg.exposure_range),
        });
    }
    if cfg.blur_max_px > 0.0 {
        out.push(Transform::Blur {
            sigma: rng.random_range(0.0..=cfg.blur_max_px),
        });
    }
    if cfg.noise_max_frac > 0.0 {
        let frac = rng.random_range(0.0..=cfg.noise_max_frac);
        out.push(Transform::Noise {
            frac,
            seed: rng.random(),
        });
    }
    if chance(cfg.erasing, &mut rng) {
        out.push(Transform::Erasing);
    }
    TransformSpec { transforms: out }
}

/// Applies every transform in order. Box fields must lie in `[0,1]`; boxes
/// are clipped to the image after translation and scaling, and dropped when
/// less than 10% of their area remains. Mosaic needs four images and is
/// handled by [`apply_mosaic`]; erasing is not implemented.
pub fn apply_spec(img: &Raster, boxes: &[DetBox], spec: &TransformSpec) -> Result<(Raster, Vec<DetBox>), AugmentError> {
    let in_unit = |v: f64| (-BOX_TOL..=1.0 + BOX_TOL).contains(&v);
    for b in boxes {
        if ![b.cx, b.cy, b.w, b.h].into_iter().all(in_unit) || b.w <= 0.0 || b.h <= 0.0 {
            return Err(AugmentError::BoxOutOfRange(format!("{b:?}")));
        }
    }
    let mut img = img.clone();
    // transformed boxes paired with their unclipped area
    let mut cur: Vec<(DetBox, f64)> = boxes.iter().map(|b| (*b, b.area())).collect();
    for t in &simplify(&spec.transforms) {
        match *t {
            Transform::FlipH => {
                img = flip_h(&img);
                map_boxes(&mut cur, |b| b.cx = 1.0 - b.cx);
            }
            Transform::FlipV => {
                img = flip_v(&img);
                map_boxes(&mut cur, |b| b.cy = 1.0 - b.cy);
            }
            Transform::Rotate90 { k } => {
                for _ in 0..k % 4 {
                    img = rotate_cw(&img);
                    map_boxes(&mut cur, |b| {
                        *b = DetBox::new(b.class_id, 1.0 - b.cy, b.cx, b.h, b.w, b.conf);
                    });
                }
            }
            Transform::Translate { dx, dy } => {
                let px = (dx * img.width() as f64).round() as i64;
                let py = (dy * img.height() as f64).round() as i64;
                img = translate(&img, px, py);
                let (fx, fy) = (px as f64 / img.width() as f64, py as f64 / img.height() as f64);
                map_boxes(&mut cur, |b| {
                    b.cx += fx;
                    b.cy += fy;
                });
                clip_boxes(&mut cur);
            }
            Transform::Scale { s } => {
                img = scale(&img, s)?;
                for (b, a) in cur.iter_mut() {
                    b.cx = (b.cx - 0.5) * s + 0.5;
                    b.cy = (b.cy - 0.5) * s + 0.5;
                    b.w *= s;
                    b.h *= s;
                    *a *= s * s;
                }
                clip_boxes(&mut cur);
            }
            Transform::Hsv { dh, ds, dv } => hsv(&mut img, dh, ds, dv),
            Transform::Brightness { d } => brightness(&mut img, d),
            Transform::Saturation { d } => saturation(&mut img, d),
            Transform::Exposure { d } => exposure(&mut img, d),
            Transform::Blur { sigma } => img = gaussian_blur(&img, sigma),
            Transform::Noise { frac, seed } => {
                add_noise(&mut img, frac, seed);
            }
            Transform::Erasing => return Err(AugmentError::Unsupported("erasing")),
            Transform::Mosaic { .. } => return Err(AugmentError::Unsupported("mosaic needs four images")),
        }
    }
    Ok((img, cur.into_iter().map(|(b, _)| b).collect()))
}

/// Cancels adjacent equal flips and folds runs of quarter turns so that
/// involutions are exact on box coordinates.
fn simplify(ts: &[Transform]) -> Vec<Transform> {
    let mut out: Vec<Transform> = Vec::with_capacity(ts.len());
    for t in ts {
        match (out.last().copied(), *t) {
            (Some(Transform::FlipH), Transform::FlipH) | (Some(Transform::FlipV), Transform::FlipV) => {
                out.pop();
            }
            (Some(Transform::Rotate90 { k: a }), Transform::Rotate90 { k: b }) => {
                out.pop();
                let k = (a + b) % 4;
                if k != 0 {
                    out.push(Transform::Rotate90 { k });
                }
            }
            (_, Transform::Rotate90 { k }) if k % 4 == 0 => {}
            _ => out.push(*t),
        }
    }
    out
}

fn map_boxes(boxes: &mut [(DetBox, f64)], f: impl Fn(&mut DetBox)) {
    for (b, _) in boxes.iter_mut() {
        f(b);
    }
}

fn clip_boxes(boxes: &mut Vec<(DetBox, f64)>) {
    boxes.retain_mut(|(b, full)| match b.clip_unit() {
        Some(c) if c.area() >= MIN_KEPT_AREA * *full => {
            *b = c;
            true
        }
        _ => false,
    });
}

fn remap(img: &Raster, out_w: usize, out_h: usize, src: impl Fn(usize, usize) -> Option<(usize, usize)>) -> Raster {
    let c = img.channels() as usize;
    let mut data = vec![0u8; out_w * out_h * c];
    for y in 0..out_h {
        for x in 0..out_w {
            if let Some((sx, sy)) = src(x, y) {
                let o = (y * out_w + x) * c;
                data[o..o + c].copy_from_slice(img.pixel(sx, sy));
            }
        }
    }
    let out = Raster::new(out_w, out_h, img.channels(), data).expect("remap keeps layout");
    match img.mm_per_px() {
        Some(s) => out.with_mm_per_px(s).expect("scale already valid"),
        None => out,
    }
}

pub fn flip_h(img: &Raster) -> Raster {
    let w = img.width();
    remap(img, w, img.height(), |x, y| Some((w - 1 - x, y)))
}

pub fn flip_v(img: &Raster) -> Raster {
    let h = img.height();
    remap(img, img.width(), h, |x, y| Some((x, h - 1 - y)))
}

/// One clockwise quarter turn; output is `height x width`.
pub fn rotate_cw(img: &Raster) -> Raster {
    let h = img.height();
    remap(img, h, img.width(), |x, y| Some((y, h - 1 - x)))
}

/// Whole-pixel shift with black fill.
pub fn translate(img: &Raster, px: i64, py: i64) -> Raster {
    let (w, h) = (img.width() as i64, img.height() as i64);
    remap(img, img.width(), img.height(), |x, y| {
        let (sx, sy) = (x as i64 - px, y as i64 - py);
        ((0..w).contains(&sx) && (0..h).contains(&sy)).then_some((sx as usize, sy as usize))
    })
}

/// Nearest-neighbour zoom about the center with black fill; the physical
/// scale shrinks by `s`.
pub fn scale(img: &Raster, s: f64) -> Result<Raster, AugmentError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(AugmentError::InvalidConfig(format!("scale factor must be positive, got {s}")));
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let out = remap(img, img.width(), img.height(), |x, y| {
        let u = ((x as f64 + 0.5 - w / 2.0) / s + w / 2.0).floor();
        let v = ((y as f64 + 0.5 - h / 2.0) / s + h / 2.0).floor();
        (u >= 0.0 && u < w && v >= 0.0 && v < h).then_some((u as usize, v as usize))
    });
    Ok(match img.mm_per_px() {
        Some(m) => out.with_mm_per_px(m / s)?,
        None => out,
    })
}

/// Multiplies every channel by `1 + d`.
pub fn brightness(img: &mut Raster, d: f64) {
    let g = 1.0 + d;
    for v in img.data_mut() {
        *v = round_to_u8(*v as f64 * g);
    }
}

/// Scales each pixel's distance from its luminance by `1 + d`.
pub fn saturation(img: &mut Raster, d: f64) {
    if img.channels() != 3 {
        return;
    }
    let g = 1.0 + d;
    for px in img.data_mut().chunks_exact_mut(3) {
        let l = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        for v in px.iter_mut() {
            *v = round_to_u8(l + (*v as f64 - l) * g);
        }
    }
}

/// Multiplies linear intensity by `1 + d` through a 2.2 gamma.
pub fn exposure(img: &mut Raster, d: f64) {
    let g = 1.0 + d;
    let lut: Vec<u8> = (0..256)
        .map(|v| {
            let lin = (v as f64 / 255.0).powf(GAMMA) * g;
            round_to_u8(255.0 * lin.max(0.0).powf(1.0 / GAMMA))
        })
        .collect();
    for v in img.data_mut() {
        *v = lut[*v as usize];
    }
}

/// Hue rotation by `dh` turns, saturation and value gains `1 + ds`,
/// `1 + dv`. Single-channel images only take the value gain.
pub fn hsv(img: &mut Raster, dh: f64, ds: f64, dv: f64) {
    if img.channels() != 3 {
        brightness(img, dv);
        return;
    }
    for px in img.data_mut().chunks_exact_mut(3) {
        let [r, g, b] = [px[0], px[1], px[2]].map(|v| v as f64 / 255.0);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let c = max - min;
        let mut hue = if c == 0.0 {
            0.0
        } else if max == r {
            ((g - b) / c).rem_euclid(6.0)
        } else if max == g {
            (b - r) / c + 2.0
        } else {
            (r - g) / c + 4.0
        };
        let sat = if max == 0.0 { 0.0 } else { c / max };
        hue = (hue + dh * 6.0).rem_euclid(6.0);
        let s2 = (sat * (1.0 + ds)).clamp(0.0, 1.0);
        let v2 = (max * (1.0 + dv)).clamp(0.0, 1.0);
        let c2 = v2 * s2;
        let x = c2 * (1.0 - ((hue % 2.0) - 1.0).abs());
        let (r1, g1, b1) = match hue as u32 {
            0 => (c2, x, 0.0),
            1 => (x, c2, 0.0),
            2 => (0.0, c2, x),
            3 => (0.0, x, c2),
            4 => (x, 0.0, c2),
            _ => (c2, 0.0, x),
        };
        let m = v2 - c2;
        px[0] = round_to_u8((r1 + m) * 255.0);
        px[1] = round_to_u8((g1 + m) * 255.0);
        px[2] = round_to_u8((b1 + m) * 255.0);
    }
}

/// Separable Gaussian truncated at three sigma, edges clamped.
pub fn gaussian_blur(img: &Raster, sigma: f64) -> Raster {
    let r = (3.0 * sigma).ceil() as usize;
    if sigma <= 0.0 || r == 0 {
        return img.clone();
    }
    let mut k: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let d = i as f64 - r as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);

    let (w, h, c) = (img.width(), img.height(), img.channels() as usize);
    let src = img.data();
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x + i).saturating_sub(r).min(w - 1);
                    acc += kv * src[(y * w + sx) * c + ch] as f64;
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y + i).saturating_sub(r).min(h - 1);
                    acc += kv * tmp[(sy * w + x) * c + ch];
                }
                dst[(y * w + x) * c + ch] = round_to_u8(acc);
            }
        }
    }
    out
}

/// Salt-and-pepper noise on `floor(frac * w * h)` distinct pixels. Returns
/// the number of pixels touched.
pub fn add_noise(img: &mut Raster, frac: f64, seed: u64) -> usize {
    let n = img.width() * img.height();
    let count = ((frac.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    let mut rng = stream_rng(seed, 0);
    let c = img.channels() as usize;
    let picks = sample(&mut rng, n, count);
    let data = img.data_mut();
    for i in picks.iter() {
        let v = if rng.random::<bool>() { 255 } else { 0 };
        data[i * c..(i + 1) * c].fill(v);
    }
    count
}

/// 2x2 composition split at `(cx, cy)` (fractions of the output size).
/// Tile `i` fills quadrant `i` in reading order, resized to fit; its boxes
/// follow. Boxes of different tiles never overlap a quadrant border.
pub fn apply_mosaic(
    tiles: [(&Raster, &[DetBox]); 4],
    out_w: usize,
    out_h: usize,
    cx: f64,
    cy: f64,
) -> Result<(Raster, Vec<DetBox>), AugmentError> {
    let channels = tiles[0].0.channels();
    if tiles.iter().any(|(t, _)| t.channels() != channels) {
        return Err(AugmentError::InvalidConfig("mosaic tiles must share a channel count".into()));
    }
    let sx = ((cx.clamp(0.0, 1.0) * out_w as f64).round() as usize).clamp(1, out_w.saturating_sub(1).max(1));
    let sy = ((cy.clamp(0.0, 1.0) * out_h as f64).round() as usize).clamp(1, out_h.saturating_sub(1).max(1));
    let mut out = Raster::filled(out_w, out_h, channels, 0)?;
    let mut boxes = Vec::new();
    let rects = [
        (0, 0, sx, sy),
        (sx, 0, out_w - sx, sy),
        (0, sy, sx, out_h - sy),
        (sx, sy, out_w - sx, out_h - sy),
    ];
    let c = channels as usize;
    for ((tile, tboxes), (x0, y0, tw, th)) in tiles.into_iter().zip(rects) {
        if tw == 0 || th == 0 {
            continue;
        }
        let scaled = resize_bilinear(tile, tw, th)?;
        for y in 0..th {
            let src = &scaled.data()[y * tw * c..(y + 1) * tw * c];
            let o = ((y0 + y) * out_w + x0) * c;
            out.data_mut()[o..o + tw * c].copy_from_slice(src);
        }
        let (fx, fy) = (tw as f64 / out_w as f64, th as f64 / out_h as f64);
        let (ox, oy) = (x0 as f64 / out_w as f64, y0 as f64 / out_h as f64);
        boxes.extend(tboxes.iter().map(|b| {
            DetBox::new(b.class_id, ox + b.cx * fx, oy + b.cy * fy, b.w * fx, b.h * fy, b.conf)
        }));
    }
    Ok((out, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(w: usize, h: usize) -> Raster {
        let data = (0..w * h * 3).map(|i| ((i * 37) % 251) as u8).collect();
        Raster::new(w, h, 3, data).unwrap()
    }

    fn spec(t: Vec<Transform>) -> TransformSpec {
        TransformSpec { transforms: t }
    }

    #[test]
    fn zero_config_gives_empty_spec() {
        for i in 0..100 {
            assert!(sample_spec(&AugmentConfig::none().with_seed(4), i).is_empty());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = AugmentConfig::yolo_default().with_seed(11);
        for i in [0, 1, 77, u64::MAX] {
            assert_eq!(sample_spec(&cfg, i), sample_spec(&cfg, i));
        }
        assert_ne!(sample_spec(&cfg, 0), sample_spec(&cfg, 1));
    }

    #[test]
    fn customized_flip_frequency() {
        let cfg = AugmentConfig::customized().with_seed(2024);
        let flips = (0..10_000)
            .filter(|&i| sample_spec(&cfg, i).transforms.contains(&Transform::FlipH))
            .count();
        let f = flips as f64 / 10_000.0;
        assert!((0.08..=0.12).contains(&f), "{f}");
    }

    #[test]
    fn presets_validate() {
        AugmentConfig::yolo_default().validate().unwrap();
        AugmentConfig::customized().validate().unwrap();
        let bad = AugmentConfig {
            fliplr: 1.5,
            ..AugmentConfig::none()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sampled_parameters_in_range() {
        let cfg = AugmentConfig::customized().with_seed(5);
        for i in 0..2000 {
            for t in sample_spec(&cfg, i).transforms {
                match t {
                    Transform::Brightness { d } | Transform::Saturation { d } => assert!(d.abs() <= 0.15),
                    Transform::Exposure { d } => assert!(d.abs() <= 0.06),
                    Transform::Blur { sigma } => assert!((0.0..=0.6).contains(&sigma)),
                    Transform::Noise { frac, .. } => assert!((0.0..=0.005).contains(&frac)),
                    Transform::Translate { dx, dy } => assert!(dx.abs() <= 0.1 && dy.abs() <= 0.1),
                    Transform::Scale { s } => assert!((0.9..=1.1).contains(&s)),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn flip_h_box() {
        let img = gradient(20, 10);
        let b = DetBox::new(0, 0.3, 0.4, 0.1, 0.2, 1.0);
        let (_, out) = apply_spec(&img, &[b], &spec(vec![Transform::FlipH])).unwrap();
        assert!((out[0].cx - 0.7).abs() < 1e-12);
        assert_eq!((out[0].cy, out[0].w, out[0].h), (0.4, 0.1, 0.2));
    }

    #[test]
    fn double_flip_is_identity() {
        let img = gradient(17, 9);
        let b = DetBox::new(2, 0.3, 0.4, 0.1, 0.2, 0.8);
        let (o, ob) = apply_spec(&img, &[b], &spec(vec![Transform::FlipH, Transform::FlipH])).unwrap();
        assert_eq!(o, img);
        assert_eq!(ob, vec![b]);
        let (o, _) = apply_spec(&img, &[], &spec(vec![Transform::FlipV, Transform::FlipV])).unwrap();
        assert_eq!(o, img);
    }

    #[test]
    fn rotate_box_and_pixels() {
        let b = DetBox::new(0, 0.2, 0.1, 0.1, 0.3, 1.0);
        let mut img = Raster::filled(10, 10, 1, 0).unwrap();
        // box covers x in [1.5, 2.5), y in [-0.5, 2.5): pixels x=2, y=0..=2
        for y in 0..3 {
            img.pixel_mut(2, y)[0] = 255;
        }
        let (o, ob) = apply_spec(&img, &[b], &spec(vec![Transform::Rotate90 { k: 1 }])).unwrap();
        let want = DetBox::new(0, 0.9, 0.2, 0.3, 0.1, 1.0);
        for (g, w) in [(ob[0].cx, want.cx), (ob[0].cy, want.cy), (ob[0].w, want.w), (ob[0].h, want.h)] {
            assert!((g - w).abs() < 1e-12);
        }
        // pixel oracle: (x, y) -> (H-1-y, x)
        for y in 0..3 {
            assert_eq!(o.pixel(9 - y, 2)[0], 255);
        }
        assert_eq!(o.data().iter().filter(|v| **v == 255).count(), 3);
        let full = apply_spec(&img, &[b], &spec(vec![Transform::Rotate90 { k: 2 }, Transform::Rotate90 { k: 2 }])).unwrap();
        assert_eq!(full.0, img);
    }

    #[test]
    fn brightness_example() {
        let mut img = Raster::filled(1, 1, 1, 200).unwrap();
        brightness(&mut img, 0.15);
        assert_eq!(img.data()[0], 230);
        let mut img = Raster::filled(1, 1, 1, 250).unwrap();
        brightness(&mut img, 0.15);
        assert_eq!(img.data()[0], 255);
    }

    #[test]
    fn photometric_keeps_boxes() {
        let img = gradient(16, 16);
        let b = DetBox::new(1, 0.5, 0.5, 0.2, 0.2, 1.0);
        let s = spec(vec![
            Transform::Brightness { d: -0.1 },
            Transform::Saturation { d: 0.15 },
            Transform::Exposure { d: 0.06 },
            Transform::Hsv { dh: 0.1, ds: 0.2, dv: -0.1 },
            Transform::Blur { sigma: 0.6 },
            Transform::Noise { frac: 0.005, seed: 1 },
        ]);
        let (o, ob) = apply_spec(&img, &[b], &s).unwrap();
        assert_eq!(ob, vec![b]);
        assert_ne!(o, img);
    }

    #[test]
    fn exposure_and_hsv_identities() {
        let img = gradient(8, 8);
        let mut e = img.clone();
        exposure(&mut e, 0.0);
        assert_eq!(e, img);
        let mut h = img.clone();
        hsv(&mut h, 0.0, 0.0, 0.0);
        let max_diff = h.data().iter().zip(img.data()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        assert!(max_diff <= 1);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Raster::filled(9, 7, 3, 77).unwrap();
        assert_eq!(gaussian_blur(&img, 0.6), img);
    }

    #[test]
    fn out_of_range_box_rejected() {
        let img = gradient(8, 8);
        let b = DetBox::new(0, 1.2, 0.5, 0.2, 0.2, 1.0);
        assert!(matches!(
            apply_spec(&img, &[b], &TransformSpec::default()),
            Err(AugmentError::BoxOutOfRange(_))
        ));
    }

    #[test]
    fn unsupported_steps() {
        let img = gradient(8, 8);
        assert_eq!(
            apply_spec(&img, &[], &spec(vec![Transform::Erasing])).unwrap_err(),
            AugmentError::Unsupported("erasing")
        );
        assert!(apply_spec(&img, &[], &spec(vec![Transform::Mosaic { cx: 0.5, cy: 0.5 }])).is_err());
    }

    #[test]
    fn translate_drops_slivers() {
        let img = gradient(100, 100);
        let b = DetBox::new(0, 0.95, 0.5, 0.1, 0.1, 1.0);
        let (_, out) = apply_spec(&img, &[b], &spec(vec![Transform::Translate { dx: 0.095, dy: 0.0 }])).unwrap();
        assert!(out.is_empty());
        let (_, out) = apply_spec(&img, &[b], &spec(vec![Transform::Translate { dx: 0.05, dy: 0.0 }])).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].w - 0.05).abs() < 1e-12);
    }

    #[test]
    fn mosaic_layout() {
        let tiles: Vec<Raster> = (0..4).map(|i| Raster::filled(10, 10, 1, 50 * (i + 1)).unwrap()).collect();
        let b = [DetBox::new(3, 0.5, 0.5, 0.5, 0.5, 1.0)];
        let (o, boxes) = apply_mosaic(
            [(&tiles[0], &b[..]), (&tiles[1], &[]), (&tiles[2], &[]), (&tiles[3], &b[..])],
            20,
            20,
            0.5,
            0.5,
        )
        .unwrap();
        assert_eq!(o.pixel(0, 0)[0], 50);
        assert_eq!(o.pixel(19, 0)[0], 100);
        assert_eq!(o.pixel(0, 19)[0], 150);
        assert_eq!(o.pixel(19, 19)[0], 200);
        assert_eq!(boxes.len(), 2);
        assert!((boxes[1].cx - 0.75).abs() < 1e-12 && (boxes[1].w - 0.25).abs() < 1e-12);
    }

    /// Bounding box of nonzero pixels in edge coordinates.
    fn refit(img: &Raster) -> Option<(f64, f64, f64, f64)> {
        let mut r: Option<(usize, usize, usize, usize)> = None;
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.pixel(x, y)[0] > 0 {
                    r = Some(match r {
                        None => (x, y, x + 1, y + 1),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
                    });
                }
            }
        }
        r.map(|(a, b, c, d)| (a as f64, b as f64, c as f64, d as f64))
    }

    fn geometric() -> impl Strategy<Value = Transform> {
        prop_oneof![
            Just(Transform::FlipH),
            Just(Transform::FlipV),
            (1u8..=3).prop_map(|k| Transform::Rotate90 { k }),
            (-0.1f64..0.1, -0.1f64..0.1).prop_map(|(dx, dy)| Transform::Translate { dx, dy }),
            (0.9f64..1.1).prop_map(|s| Transform::Scale { s }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn boxes_follow_pixels(
            w in 40usize..80, h in 40usize..80,
            x0 in 5usize..30, y0 in 5usize..30, bw in 4usize..10, bh in 4usize..10,
            ts in proptest::collection::vec(geometric(), 1..4),
        ) {
            let mut img = Raster::filled(w, h, 1, 0).unwrap();
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    img.pixel_mut(x, y)[0] = 255;
                }
            }
            let b = DetBox::from_corners(
                0,
                x0 as f64 / w as f64,
                y0 as f64 / h as f64,
                (x0 + bw) as f64 / w as f64,
                (y0 + bh) as f64 / h as f64,
                1.0,
            );
            let (o, ob) = apply_spec(&img, &[b], &TransformSpec { transforms: ts }).unwrap();
            for bx in &ob {
                let (x1, y1, x2, y2) = bx.corners();
                prop_assert!(x1 >= -1e-12 && y1 >= -1e-12 && x2 <= 1.0 + 1e-12 && y2 <= 1.0 + 1e-12);
            }
            match (refit(&o), ob.first()) {
                (Some((a, bb, c, d)), Some(bx)) => {
                    let (x1, y1, x2, y2) = bx.corners();
                    let (ow, oh) = (o.width() as f64, o.height() as f64);
                    for (p, q) in [(a, x1 * ow), (bb, y1 * oh), (c, x2 * ow), (d, y2 * oh)] {
                        prop_assert!((p - q).abs() <= 1.0, "{p} vs {q}");
                    }
                }
                (None, None) => {}
                (Some(r), None) => {
                    // dropped box: whatever survives is a sliver
                    let area = (r.2 - r.0) * (r.3 - r.1);
                    prop_assert!(area <= MIN_KEPT_AREA * 1.5 * (bw * bh) as f64 + 2.0 * (bw + bh) as f64);
                }
                (None, Some(_)) => prop_assert!(false, "box survived but pixels did not"),
            }
        }

        #[test]
        fn noise_bound(w in 1usize..120, h in 1usize..120, frac in 0.0f64..0.005, seed: u64) {
            let img = Raster::filled(w, h, 3, 128).unwrap();
            let mut o = img.clone();
            add_noise(&mut o, frac, seed);
            let changed = o.data().chunks(3).zip(img.data().chunks(3)).filter(|(a, b)| a != b).count();
            prop_assert!(changed as f64 <= frac * (w * h) as f64);
        }
    }
}
