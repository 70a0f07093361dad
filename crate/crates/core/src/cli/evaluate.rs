use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::dataset::{parse_labels, parse_predictions, Manifest, View};
use crate::detect::DetBox;
use crate::eval::{
    coco_thresholds, map_range_at, render_classification_table, render_detection_table, summary_metrics, ClassMetrics,
    ClassificationRow, ConfusionMatrix, DetectionRow, EvalError, EvalScene, EvalSummary,
};

/// Prediction file for one scene view: `<dir>/<scene>_<view>.txt`.
pub fn prediction_path(dir: &Path, scene: &str, view: View) -> PathBuf {
    dir.join(format!("{scene}_{view}.txt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// IoU at which the operating-point metrics were taken.
    pub match_iou: f64,
    pub detection: EvalSummary,
    /// Class agreement over matches at `match_iou`, when any exist.
    pub classification: Option<ClassMetrics>,
    /// Scene views with no prediction file, scored as zero predictions.
    pub missing_predictions: Vec<String>,
    pub inference_ms: Option<f64>,
}

impl EvalReport {
    pub fn detection_row(&self) -> DetectionRow {
        DetectionRow {
            model: self.model.clone(),
            f1: self.detection.f1,
            precision: self.detection.precision,
            recall: self.detection.recall,
            miou: self.detection.miou,
            map50_95: self.detection.map50_95,
            inference_ms: self.inference_ms,
            resource: String::new(),
        }
    }

    pub fn classification_row(&self) -> Option<ClassificationRow> {
        self.classification.as_ref().map(|c| ClassificationRow {
            model: self.model.clone(),
            accuracy: c.accuracy,
            f1: c.f1,
            precision: c.precision,
            recall: c.recall,
            inference_ms: self.inference_ms,
            gpu_mib: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serializes") + "\n"
    }

    /// `eval.json`, `detection_table.txt` and, when classification metrics
    /// exist, `classification_table.txt`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
        };
        put("eval.json", self.to_json())?;
        put("detection_table.txt", render_detection_table(&[self.detection_row()]))?;
        if let Some(row) = self.classification_row() {
            put("classification_table.txt", render_classification_table(&[row]))?;
        }
        Ok(())
    }
}

/// Scores every scene view of `manifest` against `<pred_dir>/<scene>_<view>.txt`
/// files (`class conf cx cy w h` per line). Precision, recall, F1, mIoU and
/// the classification metrics are taken at `match_iou`.
pub fn run_eval(manifest: &Manifest, pred_dir: &Path, model: &str, match_iou: f64) -> Result<EvalReport, CliError> {
    if !pred_dir.is_dir() {
        return Err(CliError::MissingPredictions(pred_dir.to_path_buf()));
    }
    if manifest.scenes.is_empty() {
        return Err(crate::dataset::DatasetError::EmptyManifest.into());
    }
    let k = manifest.classes.len();
    let mut scenes = Vec::new();
    let mut missing = Vec::new();
    for entry in &manifest.scenes {
        for view in [View::Top, View::Bottom] {
            let lp = manifest.resolve(entry.labels(view));
            let text = std::fs::read_to_string(&lp).map_err(|e| CliError::io(&lp, e))?;
            let gts: Vec<DetBox> = parse_labels(&text)?.iter().map(|l| l.to_box(1.0)).collect();
            let pp = prediction_path(pred_dir, &entry.id, view);
            let preds = match std::fs::read_to_string(&pp) {
                Ok(t) => parse_predictions(&t)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    warn!("no predictions for {}/{view}; scoring as empty", entry.id);
                    missing.push(format!("{}/{view}", entry.id));
                    Vec::new()
                }
                Err(e) => return Err(CliError::io(&pp, e)),
            };
            scenes.push(EvalScene { preds, gts });
        }
    }
    let detection = map_range_at(&scenes, &coco_thresholds(), k, match_iou).map_err(CliError::Eval)?;
    let matched: Vec<Vec<u64>> = detection.confusion[..k].iter().map(|r| r[..k].to_vec()).collect();
    let cm = ConfusionMatrix::from_counts(matched).map_err(CliError::Eval)?;
    let classification = match summary_metrics(&cm) {
        Ok(m) => Some(m),
        Err(EvalError::EmptyMatrix) => None,
        Err(e) => return Err(CliError::Eval(e)),
    };
    Ok(EvalReport {
        model: model.to_string(),
        match_iou,
        detection,
        classification,
        missing_predictions: missing,
        inference_ms: None,
    })
}
