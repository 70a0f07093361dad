//! Detection math and post-processing: box overlap, the per-cell confidence
//! target, the YOLO training loss, class-wise NMS, and the inference-backend
//! contract.

mod backend;
mod letterbox;
mod loss;
mod nms;

pub use backend::{
    argmax, validate_scores, Backend, BackendError, CropQuery, DetectorInput, OracleBackend,
};
pub use letterbox::Letterbox;
pub use loss::{
    yolo_loss, yolo_loss_with_grad, BoxPrediction, CellPrediction, CellTarget, LossConfig,
    LossError,
};
pub use nms::nms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One detection: class, normalized center/size and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
}

impl DetBox {
    pub const fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64, conf: f64) -> Self {
        Self {
            class_id,
            cx,
            cy,
            w,
            h,
            conf,
        }
    }

    /// `(x1, y1, x2, y2)` corners in normalized coordinates.
    #[inline]
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn from_corners(class_id: usize, x1: f64, y1: f64, x2: f64, y2: f64, conf: f64) -> Self {
        Self::new(
            class_id,
            (x1 + x2) / 2.0,
            (y1 + y2) / 2.0,
            x2 - x1,
            y2 - y1,
            conf,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Checks the domain invariants: finite values, center in `[0,1]`,
    /// size in `(0,1]`, confidence in `[0,1]`.
    pub fn validate(&self) -> Result<(), DetectError> {
        let vals = [self.cx, self.cy, self.w, self.h, self.conf];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DetectError::InvalidBox(format!("non-finite field in {self:?}")));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.cx) || !unit(self.cy) {
            return Err(DetectError::InvalidBox(format!("center outside [0,1]: {self:?}")));
        }
        if !(self.w > 0.0 && self.w <= 1.0 && self.h > 0.0 && self.h <= 1.0) {
            return Err(DetectError::InvalidBox(format!("size outside (0,1]: {self:?}")));
        }
        if !unit(self.conf) {
            return Err(DetectError::InvalidBox(format!("confidence outside [0,1]: {self:?}")));
        }
        Ok(())
    }

    /// Intersects the box with the unit square; `None` when nothing remains.
    pub fn clip_unit(&self) -> Option<DetBox> {
        let (x1, y1, x2, y2) = self.corners();
        let (x1, y1) = (x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
        let (x2, y2) = (x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0));
        if x2 <= x1 || y2 <= y1 {
            return None;
        }
        Some(Self::from_corners(self.class_id, x1, y1, x2, y2, self.conf))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("object present but no ground-truth box supplied")]
    MissingGroundTruth,
}

/// Intersection over union of two axis-aligned boxes. Returns 0 when the
/// union is empty.
pub fn iou(a: &DetBox, b: &DetBox) -> f64 {
    iou_xywh([a.cx, a.cy, a.w, a.h], [b.cx, b.cy, b.w, b.h])
}

pub(crate) fn iou_xywh(a: [f64; 4], b: [f64; 4]) -> f64 {
    let (ax1, ax2) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0);
    let (ay1, ay2) = (a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
    let (bx1, bx2) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0);
    let (by1, by2) = (b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);
    let ix = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let iy = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = ix * iy;
    // areas from the same corner arithmetic keep iou(a, a) exactly 1
    let area_a = (ax2 - ax1).max(0.0) * (ay2 - ay1).max(0.0);
    let area_b = (bx2 - bx1).max(0.0) * (by2 - by1).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Confidence target of a grid cell: the IoU between prediction and ground
/// truth when an object is present, otherwise 0.
pub fn confidence(has_object: bool, pred: &DetBox, gt: Option<&DetBox>) -> Result<f64, DetectError> {
    if !has_object {
        return Ok(0.0);
    }
    let gt = gt.ok_or(DetectError::MissingGroundTruth)?;
    Ok(iou(pred, gt))
}
