use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::align::MirrorMode;
use crate::augment::AugmentConfig;
use crate::grade::{ClassTaxonomy, WeightCalibration};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Where detections and crop classes come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BackendSpec {
    /// Replays the manifest's annotations.
    #[default]
    Oracle,
    /// Exported model file.
    Model(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self::Oracle),
            _ => match s.strip_prefix("model:") {
                Some(p) if !p.is_empty() => Ok(Self::Model(PathBuf::from(p))),
                _ => Err(format!("backend must be `oracle` or `model:PATH`, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Model(p) => write!(f, "model:{}", p.display()),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { rows: 5, cols: 10 }
    }
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_tray() -> [f64; 2] {
    [320.0, 450.0]
}
fn default_mm_per_px() -> f64 {
    0.25
}
fn default_input() -> usize {
    1280
}
fn default_nms() -> f64 {
    0.45
}
fn default_match() -> f64 {
    0.5
}
fn default_workers() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// Pipeline settings, stored as one JSON document. Only `weight` is
/// required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridConfig,
    /// Tray width and height in mm.
    #[serde(default = "default_tray")]
    pub tray_mm: [f64; 2],
    /// Scale of the rectified canvas.
    #[serde(default = "default_mm_per_px")]
    pub mm_per_px: f64,
    /// Side of the square detector input.
    #[serde(default = "default_input")]
    pub detector_input: usize,
    #[serde(default = "default_nms")]
    pub nms_iou: f64,
    /// Operating-point IoU for `eval --config`.
    #[serde(default = "default_match")]
    pub match_iou: f64,
    #[serde(default)]
    pub mirror: MirrorMode,
    #[serde(default)]
    pub taxonomy: ClassTaxonomy,
    pub weight: WeightCalibration,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub backend: BackendSpec,
    /// Center jitter of the oracle backend, canvas-normalized.
    #[serde(default)]
    pub oracle_jitter: f64,
    /// Fixed tray threshold; Otsu when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u8>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Timings make report files differ between runs.
    #[serde(default = "default_true")]
    pub emit_timings: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(weight: WeightCalibration) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            grid: GridConfig::default(),
            tray_mm: default_tray(),
            mm_per_px: default_mm_per_px(),
            detector_input: default_input(),
            nms_iou: default_nms(),
            match_iou: default_match(),
            mirror: MirrorMode::default(),
            taxonomy: ClassTaxonomy::default(),
            weight,
            augment: AugmentConfig::default(),
            backend: BackendSpec::Oracle,
            oracle_jitter: 0.0,
            threshold: None,
            seed: 0,
            workers: 1,
            emit_timings: true,
            out_dir: None,
        }
    }

    /// Rectified canvas size in pixels.
    pub fn canvas_size(&self) -> (usize, usize) {
        (
            (self.tray_mm[0] / self.mm_per_px).round() as usize,
            (self.tray_mm[1] / self.mm_per_px).round() as usize,
        )
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return bad("grid rows and cols must be positive".into());
        }
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return bad(format!("mm_per_px must be positive, got {}", self.mm_per_px));
        }
        if self.tray_mm.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("tray_mm must be positive".into());
        }
        let (w, h) = self.canvas_size();
        if w < 4 || h < 4 {
            return bad(format!("canvas {w}x{h} is too small"));
        }
        if self.detector_input == 0 {
            return bad("detector_input must be positive".into());
        }
        for (name, v) in [("nms_iou", self.nms_iou), ("match_iou", self.match_iou)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0,1], got {v}"));
            }
        }
        if !(self.oracle_jitter >= 0.0 && self.oracle_jitter.is_finite()) {
            return bad("oracle_jitter must be non-negative".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.weight.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.augment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"weight": {"rho": 1.0}}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.canvas_size(), (1280, 1800));
        assert_eq!(cfg.grid, GridConfig { rows: 5, cols: 10 });
        assert_eq!(cfg.mirror, MirrorMode::Horizontal);
        assert_eq!(cfg.backend, BackendSpec::Oracle);
        assert_eq!(cfg.taxonomy.len(), 11);
    }

    #[test]
    fn weight_is_required() {
        assert!(serde_json::from_str::<PipelineConfig>("{}").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::new(WeightCalibration::new(0.004, 0.5).unwrap());
        cfg.backend = BackendSpec::Model("m.onnx".into());
        cfg.threshold = Some(120);
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn backend_parsing() {
        assert_eq!("oracle".parse::<BackendSpec>().unwrap(), BackendSpec::Oracle);
        assert_eq!(
            "model:/tmp/x.onnx".parse::<BackendSpec>().unwrap(),
            BackendSpec::Model("/tmp/x.onnx".into())
        );
        assert!("model:".parse::<BackendSpec>().is_err());
        assert!("yolo".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let base = PipelineConfig::new(WeightCalibration::new(1.0, 0.0).unwrap());
        let mut c = base.clone();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.nms_iou = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.workers = 0;
        assert!(c.validate().is_err());
    }
}
