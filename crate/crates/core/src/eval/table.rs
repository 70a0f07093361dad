//! Aligned text tables for detection and classification results.

use serde::{Deserialize, Serialize};

pub const DETECTION_HEADER: [&str; 8] = [
    "Model",
    "F1-Score",
    "Precision",
    "Recall",
    "mIoU",
    "mAP 0.5-0.95",
    "Inference Time (ms)",
    "GPU Usage",
];

pub const CLASSIFICATION_HEADER: [&str; 7] = [
    "Model",
    "Accuracy",
    "F1-score",
    "Precision",
    "Recall",
    "Inference Time (ms)",
    "GPU Usage (MiB)",
];

/// Inference time and resource usage are measured by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub model: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub miou: f64,
    pub map50_95: f64,
    pub inference_ms: Option<f64>,
    pub resource: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub model: String,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub inference_ms: Option<f64>,
    pub gpu_mib: Option<u64>,
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let mut out = vec![line(&head), rule.join("-|-")];
    out.extend(rows.iter().map(|r| line(r)));
    out.join("\n") + "\n"
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into())
}

pub fn render_detection_table(rows: &[DetectionRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.5}", r.f1),
                format!("{:.5}", r.precision),
                format!("{:.5}", r.recall),
                format!("{:.5}", r.miou),
                format!("{:.5}", r.map50_95),
                opt(r.inference_ms, 5),
                if r.resource.is_empty() { "-".into() } else { r.resource.clone() },
            ]
        })
        .collect();
    render(&DETECTION_HEADER, &cells)
}

pub fn render_classification_table(rows: &[ClassificationRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.4}", r.accuracy),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                opt(r.inference_ms, 1),
                r.gpu_mib.map(|g| g.to_string()).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    render(&CLASSIFICATION_HEADER, &cells)
}
