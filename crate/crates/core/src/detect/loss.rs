//! The YOLO sum-squared training loss over an `S x S` grid with `B` boxes
//! per cell.
//!
//! Within an object cell the responsible predictor is the box with the
//! highest IoU against the target (ties go to the lowest index). Its target
//! confidence is that IoU. No-object cells push every box confidence toward
//! zero, weighted by `lambda_noobj`. The analytic gradient exists to check
//! the loss against finite differences; nothing here trains a model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::iou_xywh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative box size: {0}")]
    NegativeSize(String),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub grid_size: usize,
    pub boxes_per_cell: usize,
    pub num_classes: usize,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
}

impl LossConfig {
    /// Canonical weights `lambda_coord = 5`, `lambda_noobj = 0.5`.
    pub fn new(grid_size: usize, boxes_per_cell: usize, num_classes: usize) -> Self {
        Self {
            grid_size,
            boxes_per_cell,
            num_classes,
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
        }
    }

    fn validate(&self) -> Result<(), LossError> {
        if self.grid_size == 0 || self.boxes_per_cell == 0 {
            return Err(LossError::InvalidConfig("S and B must be at least 1".into()));
        }
        if !(self.lambda_coord >= 0.0 && self.lambda_noobj >= 0.0) {
            return Err(LossError::InvalidConfig("weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxPrediction {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
}

impl BoxPrediction {
    fn xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellPrediction {
    pub boxes: Vec<BoxPrediction>,
    pub class_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTarget {
    pub has_object: bool,
    /// `(x, y, w, h)`; present iff `has_object`.
    pub bbox: Option<[f64; 4]>,
    pub class_id: usize,
}

impl CellTarget {
    pub fn empty() -> Self {
        Self {
            has_object: false,
            bbox: None,
            class_id: 0,
        }
    }

    pub fn object(bbox: [f64; 4], class_id: usize) -> Self {
        Self {
            has_object: true,
            bbox: Some(bbox),
            class_id,
        }
    }
}

/// Evaluates the loss.
pub fn yolo_loss(preds: &[CellPrediction], targets: &[CellTarget], cfg: &LossConfig) -> Result<f64, LossError> {
    evaluate(preds, targets, cfg, false).map(|(l, _)| l)
}

/// Evaluates the loss and its gradient with respect to every prediction
/// scalar. The gradient has the same shape as `preds`. It is undefined where
/// a size is zero or where two boxes tie for responsibility.
pub fn yolo_loss_with_grad(
    preds: &[CellPrediction],
    targets: &[CellTarget],
    cfg: &LossConfig,
) -> Result<(f64, Vec<CellPrediction>), LossError> {
    evaluate(preds, targets, cfg, true).map(|(l, g)| (l, g.unwrap_or_default()))
}

fn check_shapes(preds: &[CellPrediction], targets: &[CellTarget], cfg: &LossConfig) -> Result<(), LossError> {
    cfg.validate()?;
    let cells = cfg.grid_size * cfg.grid_size;
    if preds.len() != cells || targets.len() != cells {
        return Err(LossError::ShapeMismatch(format!(
            "expected {cells} cells, got {} predictions and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    for (i, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.boxes.len() != cfg.boxes_per_cell {
            return Err(LossError::ShapeMismatch(format!(
                "cell {i} has {} boxes, expected {}",
                p.boxes.len(),
                cfg.boxes_per_cell
            )));
        }
        if p.class_probs.len() != cfg.num_classes {
            return Err(LossError::ShapeMismatch(format!(
                "cell {i} has {} class probabilities, expected {}",
                p.class_probs.len(),
                cfg.num_classes
            )));
        }
        if p.boxes.iter().any(|b| b.w < 0.0 || b.h < 0.0) {
            return Err(LossError::NegativeSize(format!("prediction in cell {i}")));
        }
        match (t.has_object, t.bbox) {
            (true, Some(b)) => {
                if b[2] < 0.0 || b[3] < 0.0 {
                    return Err(LossError::NegativeSize(format!("target in cell {i}")));
                }
                if t.class_id >= cfg.num_classes {
                    return Err(LossError::ShapeMismatch(format!(
                        "target class {} in cell {i} exceeds {} classes",
                        t.class_id, cfg.num_classes
                    )));
                }
            }
            (true, None) => {
                return Err(LossError::ShapeMismatch(format!("object cell {i} lacks a target box")))
            }
            (false, Some(_)) => {
                return Err(LossError::ShapeMismatch(format!("empty cell {i} carries a target box")))
            }
            (false, None) => {}
        }
    }
    Ok(())
}

/// IoU of `a` against fixed `b` and its partial derivatives with respect to
/// `a = (x, y, w, h)`. Mirrors [`iou_xywh`].
fn iou_with_grad(a: [f64; 4], b: [f64; 4]) -> (f64, [f64; 4]) {
    let (ax1, ax2) = (a[0] - a[2] / 2.0, a[0] + a[2] / 2.0);
    let (ay1, ay2) = (a[1] - a[3] / 2.0, a[1] + a[3] / 2.0);
    let (bx1, bx2) = (b[0] - b[2] / 2.0, b[0] + b[2] / 2.0);
    let (by1, by2) = (b[1] - b[3] / 2.0, b[1] + b[3] / 2.0);
    let ix = ax2.min(bx2) - ax1.max(bx1);
    let iy = ay2.min(by2) - ay1.max(by1);
    let value = iou_xywh(a, b);
    if ix <= 0.0 || iy <= 0.0 {
        return (value, [0.0; 4]);
    }
    // d(ix)/d(x), d(ix)/d(w) from which corner bounds the overlap
    let right = if ax2 < bx2 { 1.0 } else { 0.0 };
    let left = if ax1 > bx1 { 1.0 } else { 0.0 };
    let top = if ay1 > by1 { 1.0 } else { 0.0 };
    let bottom = if ay2 < by2 { 1.0 } else { 0.0 };
    let dix = [right - left, 0.0, 0.5 * (right + left), 0.0];
    let diy = [0.0, bottom - top, 0.0, 0.5 * (bottom + top)];
    let inter = ix * iy;
    let area_a = a[2] * a[3];
    let union = area_a + b[2] * b[3] - inter;
    let da = [0.0, 0.0, a[3], a[2]];
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let di = dix[k] * iy + ix * diy[k];
        grad[k] = (di * (union + inter) - inter * da[k]) / (union * union);
    }
    (value, grad)
}

fn responsible_box(cell: &CellPrediction, target: [f64; 4]) -> usize {
    let mut best = 0;
    let mut best_iou = f64::NEG_INFINITY;
    for (j, b) in cell.boxes.iter().enumerate() {
        let v = iou_xywh(b.xywh(), target);
        if v > best_iou {
            best_iou = v;
            best = j;
        }
    }
    best
}

fn evaluate(
    preds: &[CellPrediction],
    targets: &[CellTarget],
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<CellPrediction>>), LossError> {
    check_shapes(preds, targets, cfg)?;
    let mut grad: Option<Vec<CellPrediction>> = want_grad.then(|| {
        preds
            .iter()
            .map(|p| CellPrediction {
                boxes: vec![BoxPrediction::default(); p.boxes.len()],
                class_probs: vec![0.0; p.class_probs.len()],
            })
            .collect()
    });
    let mut coord = 0.0;
    let mut obj = 0.0;
    let mut noobj = 0.0;
    for (i, (cell, target)) in preds.iter().zip(targets).enumerate() {
        match target.bbox {
            Some(t) if target.has_object => {
                let j = responsible_box(cell, t);
                let p = cell.boxes[j];
                let (sw, sh) = (p.w.sqrt(), p.h.sqrt());
                let (tw, th) = (t[2].sqrt(), t[3].sqrt());
                coord += (p.x - t[0]).powi(2) + (p.y - t[1]).powi(2) + (sw - tw).powi(2) + (sh - th).powi(2);
                let (conf_target, diou) = iou_with_grad(p.xywh(), t);
                let conf_res = p.conf - conf_target;
                obj += conf_res * conf_res;
                for (c, &prob) in cell.class_probs.iter().enumerate() {
                    let onehot = if c == target.class_id { 1.0 } else { 0.0 };
                    obj += (prob - onehot).powi(2);
                }
                if let Some(g) = grad.as_mut() {
                    let lc = cfg.lambda_coord;
                    let gb = &mut g[i].boxes[j];
                    gb.x = 2.0 * lc * (p.x - t[0]) - 2.0 * conf_res * diou[0];
                    gb.y = 2.0 * lc * (p.y - t[1]) - 2.0 * conf_res * diou[1];
                    gb.w = lc * (sw - tw) / sw - 2.0 * conf_res * diou[2];
                    gb.h = lc * (sh - th) / sh - 2.0 * conf_res * diou[3];
                    gb.conf = 2.0 * conf_res;
                    for (c, &prob) in cell.class_probs.iter().enumerate() {
                        let onehot = if c == target.class_id { 1.0 } else { 0.0 };
                        g[i].class_probs[c] = 2.0 * (prob - onehot);
                    }
                }
            }
            _ => {
                for (j, b) in cell.boxes.iter().enumerate() {
                    noobj += b.conf * b.conf;
                    if let Some(g) = grad.as_mut() {
                        g[i].boxes[j].conf = 2.0 * cfg.lambda_noobj * b.conf;
                    }
                }
            }
        }
    }
    let loss = cfg.lambda_coord * coord + obj + cfg.lambda_noobj * noobj;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(cfg_classes: usize) -> LossConfig {
        LossConfig::new(1, 1, cfg_classes)
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let t = [0.5, 0.4, 0.2, 0.3];
        let preds = vec![CellPrediction {
            boxes: vec![BoxPrediction {
                x: 0.5,
                y: 0.4,
                w: 0.2,
                h: 0.3,
                conf: 1.0,
            }],
            class_probs: vec![0.0, 1.0, 0.0],
        }];
        let targets = vec![CellTarget::object(t, 1)];
        assert_eq!(yolo_loss(&preds, &targets, &single(3)).unwrap(), 0.0);
    }

    #[test]
    fn no_object_cell() {
        let mut cfg = single(2);
        cfg.lambda_noobj = 0.5;
        let preds = vec![CellPrediction {
            boxes: vec![BoxPrediction {
                x: 0.1,
                y: 0.2,
                w: 0.3,
                h: 0.4,
                conf: 0.5,
            }],
            class_probs: vec![0.3, 0.7],
        }];
        let loss = yolo_loss(&preds, &[CellTarget::empty()], &cfg).unwrap();
        assert_eq!(loss, 0.125);
    }

    #[test]
    fn x_offset_only() {
        let mut cfg = single(2);
        cfg.lambda_coord = 5.0;
        let t = [0.5, 0.5, 0.2, 0.2];
        let shifted = [0.6, 0.5, 0.2, 0.2];
        let preds = vec![CellPrediction {
            boxes: vec![BoxPrediction {
                x: 0.6,
                y: 0.5,
                w: 0.2,
                h: 0.2,
                conf: iou_xywh(shifted, t),
            }],
            class_probs: vec![1.0, 0.0],
        }];
        let loss = yolo_loss(&preds, &[CellTarget::object(t, 0)], &cfg).unwrap();
        // 5 * (0.6 - 0.5)^2; the float residual 0.6 - 0.5 is not exactly 0.1
        let expected = 5.0 * (0.6f64 - 0.5).powi(2);
        assert_eq!(loss, expected);
        assert!((loss - 0.05).abs() < 1e-15);
    }

    #[test]
    fn responsible_box_is_best_iou() {
        let t = [0.5, 0.5, 0.2, 0.2];
        let far = BoxPrediction {
            x: 0.9,
            y: 0.9,
            w: 0.1,
            h: 0.1,
            conf: 0.3,
        };
        let exact = BoxPrediction {
            x: 0.5,
            y: 0.5,
            w: 0.2,
            h: 0.2,
            conf: 1.0,
        };
        let cfg = LossConfig::new(1, 2, 1);
        let preds = vec![CellPrediction {
            boxes: vec![far, exact],
            class_probs: vec![1.0],
        }];
        // the far box is not responsible and is not penalized in an object cell
        assert_eq!(yolo_loss(&preds, &[CellTarget::object(t, 0)], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let cfg = LossConfig::new(2, 1, 1);
        let cell = CellPrediction {
            boxes: vec![BoxPrediction::default()],
            class_probs: vec![0.0],
        };
        let preds = vec![cell.clone(); 3];
        let targets = vec![CellTarget::empty(); 3];
        assert!(matches!(yolo_loss(&preds, &targets, &cfg), Err(LossError::ShapeMismatch(_))));
        let mut preds = vec![cell; 4];
        let targets = vec![CellTarget::empty(); 4];
        preds[2].boxes[0].w = -0.1;
        assert!(matches!(yolo_loss(&preds, &targets, &cfg), Err(LossError::NegativeSize(_))));
        preds[2].boxes[0].w = 0.1;
        preds[1].class_probs.push(0.0);
        assert!(matches!(yolo_loss(&preds, &targets, &cfg), Err(LossError::ShapeMismatch(_))));
    }

    #[test]
    fn object_without_box_is_rejected() {
        let cfg = single(1);
        let preds = vec![CellPrediction {
            boxes: vec![BoxPrediction::default()],
            class_probs: vec![0.0],
        }];
        let t = CellTarget {
            has_object: true,
            bbox: None,
            class_id: 0,
        };
        assert!(matches!(yolo_loss(&preds, &[t], &cfg), Err(LossError::ShapeMismatch(_))));
    }
}
