//! Inference-backend contract and the annotation-replay oracle.
//!
//! Backends see the letterboxed detector input and return boxes normalized
//! to that input; the pipeline maps them back to the canvas. Crops are
//! classified into per-class score vectors that must sum to one.

use rand::Rng;
use thiserror::Error;

use super::{iou, DetBox, Letterbox};
use crate::dataset::{AnnotationSet, ViewKey};
use crate::raster::Raster;
use crate::rng::stream_rng;

pub const SCORE_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no annotations for scene view {0}")]
    UnknownScene(String),
    #[error("no annotation overlaps the queried region in {0}")]
    UnknownRegion(String),
    #[error("score vector sums to {sum}, expected 1")]
    BadScores { sum: f64 },
    #[error("backend failure: {0}")]
    Inference(String),
}

/// Letterboxed detector input for one scene view.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub key: &'a ViewKey,
    pub image: &'a Raster,
    pub letterbox: &'a Letterbox,
}

/// A detection crop cut from the rectified canvas. `region` is the
/// detection in canvas-normalized coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CropQuery<'a> {
    pub key: &'a ViewKey,
    pub region: &'a DetBox,
    pub crop: &'a Raster,
}

/// Detector plus crop classifier. Implementations must tolerate concurrent
/// calls from several scene workers.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Boxes normalized to the letterboxed input.
    fn detect_scene(&self, input: &DetectorInput<'_>) -> Result<Vec<DetBox>, BackendError>;

    /// Per-class scores summing to `1 ± 1e-6`.
    fn classify_crop(&self, query: &CropQuery<'_>) -> Result<Vec<f64>, BackendError>;
}

pub fn validate_scores(scores: &[f64]) -> Result<(), BackendError> {
    let sum: f64 = scores.iter().sum();
    if scores.is_empty() || !sum.is_finite() || (sum - 1.0).abs() > SCORE_SUM_TOL || scores.iter().any(|s| *s < 0.0) {
        return Err(BackendError::BadScores { sum });
    }
    Ok(())
}

/// Index of the highest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Replays ground-truth annotations. Detections are the annotated boxes with
/// centers shifted by independent uniform offsets in `[-jitter, jitter]`
/// (canvas-normalized), drawn from a generator keyed by `(seed, view)` so the
/// result does not depend on query order. Classification is one-hot on the
/// annotation that best overlaps the queried region.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    annotations: AnnotationSet,
    jitter: f64,
    seed: u64,
}

impl OracleBackend {
    pub fn new(annotations: AnnotationSet, jitter: f64, seed: u64) -> Self {
        Self {
            annotations,
            jitter: jitter.max(0.0),
            seed,
        }
    }

    /// Canvas-normalized replay for a view, before letterboxing.
    pub fn replay(&self, key: &ViewKey) -> Result<Vec<DetBox>, BackendError> {
        let labels = self
            .annotations
            .get(key)
            .ok_or_else(|| BackendError::UnknownScene(key.to_string()))?;
        let mut rng = stream_rng(self.seed, key.stream_id());
        Ok(labels
            .iter()
            .map(|l| {
                let mut b = l.to_box(1.0);
                if self.jitter > 0.0 {
                    let dx: f64 = rng.random_range(-self.jitter..=self.jitter);
                    let dy: f64 = rng.random_range(-self.jitter..=self.jitter);
                    b.cx = (b.cx + dx).clamp(0.0, 1.0);
                    b.cy = (b.cy + dy).clamp(0.0, 1.0);
                }
                b
            })
            .collect())
    }
}

impl Backend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn detect_scene(&self, input: &DetectorInput<'_>) -> Result<Vec<DetBox>, BackendError> {
        Ok(self
            .replay(input.key)?
            .iter()
            .map(|b| input.letterbox.to_input(b))
            .collect())
    }

    fn classify_crop(&self, query: &CropQuery<'_>) -> Result<Vec<f64>, BackendError> {
        let labels = self
            .annotations
            .get(query.key)
            .ok_or_else(|| BackendError::UnknownScene(query.key.to_string()))?;
        let mut best: Option<(usize, f64)> = None;
        for l in labels {
            let v = iou(&l.to_box(1.0), query.region);
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((l.class_id, v));
            }
        }
        let (class_id, _) = best.ok_or_else(|| BackendError::UnknownRegion(query.key.to_string()))?;
        let mut scores = vec![0.0; self.annotations.classes().len().max(class_id + 1)];
        scores[class_id] = 1.0;
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, View};

    fn set() -> AnnotationSet {
        let mut s = AnnotationSet::new((0..3).map(|i| format!("c{i}")).collect());
        let labels = vec![
            Label {
                class_id: 1,
                cx: 0.25,
                cy: 0.25,
                w: 0.04,
                h: 0.04,
            },
            Label {
                class_id: 2,
                cx: 0.75,
                cy: 0.5,
                w: 0.04,
                h: 0.04,
            },
        ];
        s.insert(ViewKey::new("s0", View::Top), labels).unwrap();
        s
    }

    #[test]
    fn zero_jitter_is_exact_replay() {
        let oracle = OracleBackend::new(set(), 0.0, 3);
        let key = ViewKey::new("s0", View::Top);
        let got = oracle.replay(&key).unwrap();
        let want: Vec<DetBox> = set().get(&key).unwrap().iter().map(|l| l.to_box(1.0)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn jitter_is_deterministic_and_bounded() {
        let key = ViewKey::new("s0", View::Top);
        let a = OracleBackend::new(set(), 0.005, 9).replay(&key).unwrap();
        let b = OracleBackend::new(set(), 0.005, 9).replay(&key).unwrap();
        assert_eq!(a, b);
        let src = set();
        // worst case for side s and per-axis shift j: (s-j)^2 / (2s^2 - (s-j)^2)
        let (s, j) = (0.04f64, 0.005f64);
        let bound = (s - j).powi(2) / (2.0 * s * s - (s - j).powi(2));
        for (got, l) in a.iter().zip(src.get(&key).unwrap()) {
            assert!((got.cx - l.cx).abs() <= 0.005 && (got.cy - l.cy).abs() <= 0.005);
            assert!(iou(got, &l.to_box(1.0)) >= bound - 1e-12);
        }
    }

    #[test]
    fn small_jitter_keeps_high_overlap() {
        let key = ViewKey::new("s0", View::Top);
        for seed in 0..50 {
            for (got, l) in OracleBackend::new(set(), 0.001, seed)
                .replay(&key)
                .unwrap()
                .iter()
                .zip(set().get(&key).unwrap())
            {
                assert!(iou(got, &l.to_box(1.0)) > 0.9);
            }
        }
    }

    #[test]
    fn unknown_scene() {
        let oracle = OracleBackend::new(set(), 0.0, 0);
        assert!(matches!(
            oracle.replay(&ViewKey::new("nope", View::Top)),
            Err(BackendError::UnknownScene(_))
        ));
    }

    #[test]
    fn classify_is_one_hot() {
        let oracle = OracleBackend::new(set(), 0.0, 0);
        let key = ViewKey::new("s0", View::Top);
        let crop = Raster::filled(4, 4, 1, 0).unwrap();
        let region = DetBox::new(0, 0.751, 0.5, 0.04, 0.04, 1.0);
        let scores = oracle
            .classify_crop(&CropQuery {
                key: &key,
                region: &region,
                crop: &crop,
            })
            .unwrap();
        assert_eq!(scores, vec![0.0, 0.0, 1.0]);
        validate_scores(&scores).unwrap();
        let nowhere = DetBox::new(0, 0.5, 0.9, 0.01, 0.01, 1.0);
        assert!(oracle
            .classify_crop(&CropQuery {
                key: &key,
                region: &nowhere,
                crop: &crop
            })
            .is_err());
    }

    #[test]
    fn score_validation() {
        assert!(validate_scores(&[0.5, 0.5]).is_ok());
        assert!(validate_scores(&[0.5, 0.49]).is_err());
        assert!(validate_scores(&[]).is_err());
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), Some(1));
    }
}
