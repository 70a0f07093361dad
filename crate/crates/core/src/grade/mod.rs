//! Per-date grading: fusing the two view classes, area and weight
//! estimation, and batch reports.

mod report;

pub use report::{
    build_report, merge_reports, BatchReport, ClassCount, DateRecord, StageTimings,
    REPORT_SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetBox;
use crate::raster::{otsu_threshold, BinaryMask, Raster};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradeError {
    #[error("neither view has a class")]
    BothViewsMissing,
    #[error("class id {0} is not in the taxonomy")]
    UnknownClass(usize),
    #[error("raster has no physical scale")]
    MissingScale,
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("invalid weight calibration: {0}")]
    InvalidCalibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorTag {
    Black,
    Golden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    /// Lower is better.
    pub severity: u32,
    #[serde(default)]
    pub first_grade: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorTag>,
}

impl ClassInfo {
    fn new(name: &str, severity: u32, color: Option<ColorTag>) -> Self {
        Self {
            name: name.to_string(),
            severity,
            first_grade: severity == 0 && color.is_some(),
            color,
        }
    }
}

/// Ordered class list; the position of a class is its id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassTaxonomy {
    classes: Vec<ClassInfo>,
}

impl<'de> Deserialize<'de> for ClassTaxonomy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            classes: Vec<ClassInfo>,
        }
        let raw = Raw::deserialize(d)?;
        ClassTaxonomy::new(raw.classes).map_err(serde::de::Error::custom)
    }
}

impl ClassTaxonomy {
    /// Names must be unique, and exactly the first-grade classes carry a
    /// color tag.
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self, GradeError> {
        if classes.is_empty() {
            return Err(GradeError::InvalidTaxonomy("no classes".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.name == c.name) {
                return Err(GradeError::InvalidTaxonomy(format!("duplicate class name {:?}", c.name)));
            }
            if c.first_grade != c.color.is_some() {
                return Err(GradeError::InvalidTaxonomy(format!(
                    "class {:?}: color tags belong to first-grade classes only",
                    c.name
                )));
            }
        }
        Ok(Self { classes })
    }

    /// The eleven-class date taxonomy. The two reserved slots stand in for
    /// labels that are not named in text; rename them through configuration.
    pub fn default_dates() -> Self {
        use ColorTag::*;
        let classes = vec![
            ClassInfo::new("First Grade Black", 0, Some(Black)),
            ClassInfo::new("First Grade Golden", 0, Some(Golden)),
            ClassInfo::new("Low Skin Separated Black", 1, None),
            ClassInfo::new("Low Skin Separated Golden", 1, None),
            ClassInfo::new("Skin Separated Black", 2, None),
            ClassInfo::new("Skin Separated Golden", 2, None),
            ClassInfo::new("Disintegrated", 3, None),
            ClassInfo::new("Mashed", 4, None),
            ClassInfo::new("Mold", 5, None),
            ClassInfo::new("Reserved 1", 3, None),
            ClassInfo::new("Reserved 2", 3, None),
        ];
        Self::new(classes).expect("default taxonomy is valid")
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&ClassInfo, GradeError> {
        self.classes.get(id).ok_or(GradeError::UnknownClass(id))
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self::default_dates()
    }
}

/// Worst severity wins; equal severities keep the top view's class; a single
/// present view passes through.
pub fn fuse_classes(top: Option<usize>, bottom: Option<usize>, tax: &ClassTaxonomy) -> Result<usize, GradeError> {
    match (top, bottom) {
        (None, None) => Err(GradeError::BothViewsMissing),
        (Some(t), None) => tax.get(t).map(|_| t),
        (None, Some(b)) => tax.get(b).map(|_| b),
        (Some(t), Some(b)) => {
            let (st, sb) = (tax.get(t)?.severity, tax.get(b)?.severity);
            Ok(if sb > st { b } else { t })
        }
    }
}

/// Foreground pixel count times the pixel area.
pub fn estimate_area(mask: &BinaryMask, mm_per_px: Option<f64>) -> Result<f64, GradeError> {
    let s = mm_per_px.filter(|s| *s > 0.0 && s.is_finite()).ok_or(GradeError::MissingScale)?;
    Ok(mask.count() as f64 * s * s)
}

/// Pixel rectangle `[x0, x1) x [y0, y1)` covered by a canvas-normalized box.
pub fn box_pixels(region: &DetBox, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let (x1, y1, x2, y2) = region.corners();
    let px = |v: f64, n: usize| (v * n as f64).clamp(0.0, n as f64);
    (
        px(x1, width).floor() as usize,
        px(y1, height).floor() as usize,
        px(x2, width).ceil() as usize,
        px(y2, height).ceil() as usize,
    )
}

const MIN_CONTRAST: u8 = 32;

/// Dark-on-white segmentation of the date inside its box. Otsu's threshold
/// is computed on the crop; a crop with less than 32 gray levels of contrast
/// is all foreground when darker than mid-gray and all background otherwise.
pub fn date_mask(canvas: &Raster, region: &DetBox) -> BinaryMask {
    let (x0, y0, x1, y1) = box_pixels(region, canvas.width(), canvas.height());
    let Some(crop) = canvas.crop(x0, y0, x1, y1) else {
        return BinaryMask::empty(1, 1);
    };
    let gray = crop.to_gray();
    let (lo, hi) = gray
        .data()
        .iter()
        .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let bits: Vec<bool> = if hi - lo < MIN_CONTRAST {
        let dark = (lo as u16 + hi as u16) / 2 < 128;
        vec![dark; gray.data().len()]
    } else {
        let t = otsu_threshold(&gray).expect("gray crop");
        gray.data().iter().map(|&v| v < t).collect()
    };
    BinaryMask::new(gray.width(), gray.height(), bits).expect("mask matches crop")
}

/// Linear areal-density model `weight = rho * area + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightCalibration {
    /// Grams per mm².
    pub rho: f64,
    /// Grams.
    #[serde(default)]
    pub intercept: f64,
}

impl WeightCalibration {
    pub fn new(rho: f64, intercept: f64) -> Result<Self, GradeError> {
        let c = Self { rho, intercept };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), GradeError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(GradeError::InvalidCalibration(format!("rho must be positive, got {}", self.rho)));
        }
        if !self.intercept.is_finite() {
            return Err(GradeError::InvalidCalibration("intercept must be finite".into()));
        }
        Ok(())
    }
}

/// `rho * area + intercept`, floored at zero.
pub fn estimate_weight(area_mm2: f64, cal: &WeightCalibration) -> f64 {
    (cal.rho * area_mm2 + cal.intercept).max(0.0)
}
