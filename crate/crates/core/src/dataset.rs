//! Annotation and manifest I/O: YOLO label files, scene manifests and
//! stratified train/test splitting.
//!
//! A label file holds one object per line, `class cx cy w h`, with
//! coordinates normalized to the rectified tray canvas. Prediction files add
//! a confidence column: `class conf cx cy w h`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetBox;
use crate::rng::{fnv1a, stream_rng};

const COORD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: expected {expected} tokens, found {found}")]
    BadTokenCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: token {token:?} is not numeric")]
    NonNumeric { line: usize, token: String },
    #[error("line {line}: value {value} outside [0, 1]")]
    OutOfRange { line: usize, value: f64 },
    #[error("class id {class_id} is not below the class count {count}")]
    ClassOutOfRange { class_id: usize, count: usize },
    #[error("manifest has no scenes")]
    EmptyManifest,
    #[error("duplicate scene id {0:?}")]
    DuplicateScene(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One annotated object, normalized to the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Label {
    pub fn to_box(&self, conf: f64) -> DetBox {
        DetBox::new(self.class_id, self.cx, self.cy, self.w, self.h, conf)
    }

    pub fn from_box(b: &DetBox) -> Self {
        Self {
            class_id: b.class_id,
            cx: b.cx,
            cy: b.cy,
            w: b.w,
            h: b.h,
        }
    }
}

fn parse_class(tok: &str, line: usize) -> Result<usize, DatasetError> {
    tok.parse::<usize>().map_err(|_| DatasetError::NonNumeric {
        line,
        token: tok.to_string(),
    })
}

fn parse_coord(tok: &str, line: usize) -> Result<f64, DatasetError> {
    let v: f64 = tok.parse().map_err(|_| DatasetError::NonNumeric {
        line,
        token: tok.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonNumeric {
            line,
            token: tok.to_string(),
        });
    }
    if !(-COORD_TOL..=1.0 + COORD_TOL).contains(&v) {
        return Err(DatasetError::OutOfRange { line, value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Parses a YOLO label file. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_labels(text: &str) -> Result<Vec<Label>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(DatasetError::BadTokenCount {
                line,
                expected: 5,
                found: toks.len(),
            });
        }
        out.push(Label {
            class_id: parse_class(toks[0], line)?,
            cx: parse_coord(toks[1], line)?,
            cy: parse_coord(toks[2], line)?,
            w: parse_coord(toks[3], line)?,
            h: parse_coord(toks[4], line)?,
        });
    }
    Ok(out)
}

/// Six-decimal fixed-point label text, one line per object.
pub fn serialize_labels(labels: &[Label]) -> String {
    labels
        .iter()
        .map(|l| format!("{} {:.6} {:.6} {:.6} {:.6}\n", l.class_id, l.cx, l.cy, l.w, l.h))
        .collect()
}

/// Parses a prediction file (`class conf cx cy w h` per line).
pub fn parse_predictions(text: &str) -> Result<Vec<DetBox>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 6 {
            return Err(DatasetError::BadTokenCount {
                line,
                expected: 6,
                found: toks.len(),
            });
        }
        out.push(DetBox::new(
            parse_class(toks[0], line)?,
            parse_coord(toks[2], line)?,
            parse_coord(toks[3], line)?,
            parse_coord(toks[4], line)?,
            parse_coord(toks[5], line)?,
            parse_coord(toks[1], line)?,
        ));
    }
    Ok(out)
}

pub fn serialize_predictions(boxes: &[DetBox]) -> String {
    boxes
        .iter()
        .map(|b| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
                b.class_id, b.conf, b.cx, b.cy, b.w, b.h
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Top,
    Bottom,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Top => "top",
            View::Bottom => "bottom",
        })
    }
}

/// Identifies one image of a scene pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViewKey {
    pub scene: String,
    pub view: View,
}

impl ViewKey {
    pub fn new(scene: impl Into<String>, view: View) -> Self {
        Self {
            scene: scene.into(),
            view,
        }
    }

    pub(crate) fn stream_id(&self) -> u64 {
        let mut bytes = self.scene.as_bytes().to_vec();
        bytes.push(0);
        bytes.push(self.view as u8);
        fnv1a(&bytes)
    }
}

impl fmt::Display for ViewKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.scene, self.view)
    }
}

/// Ground-truth labels per scene view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    classes: Vec<String>,
    views: BTreeMap<ViewKey, Vec<Label>>,
}

impl AnnotationSet {
    pub fn new(classes: Vec<String>) -> Self {
        Self {
            classes,
            views: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: ViewKey, labels: Vec<Label>) -> Result<(), DatasetError> {
        let count = self.classes.len();
        for l in &labels {
            if l.class_id >= count {
                return Err(DatasetError::ClassOutOfRange {
                    class_id: l.class_id,
                    count,
                });
            }
            for v in [l.cx, l.cy, l.w, l.h] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(DatasetError::OutOfRange { line: 0, value: v });
                }
            }
        }
        self.views.insert(key, labels);
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, key: &ViewKey) -> Option<&[Label]> {
        self.views.get(key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &ViewKey> {
        self.views.keys()
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub top: PathBuf,
    pub bottom: PathBuf,
    pub labels_top: PathBuf,
    pub labels_bottom: PathBuf,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl SceneEntry {
    pub fn image(&self, view: View) -> &Path {
        match view {
            View::Top => &self.top,
            View::Bottom => &self.bottom,
        }
    }

    pub fn labels(&self, view: View) -> &Path {
        match view {
            View::Top => &self.labels_top,
            View::Bottom => &self.labels_bottom,
        }
    }
}

/// Scene list plus class names. Relative paths resolve against the
/// directory the manifest was loaded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenes: Vec<SceneEntry>,
    pub classes: Vec<String>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(scenes: Vec<SceneEntry>, classes: Vec<String>) -> Result<Self, DatasetError> {
        let m = Self {
            scenes,
            classes,
            base_dir: PathBuf::new(),
        };
        m.check_ids()?;
        Ok(m)
    }

    fn check_ids(&self) -> Result<(), DatasetError> {
        let mut seen = BTreeSet::new();
        for s in &self.scenes {
            if !seen.insert(s.id.as_str()) {
                return Err(DatasetError::DuplicateScene(s.id.clone()));
            }
        }
        Ok(())
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        m.check_ids()?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_json()).map_err(|e| DatasetError::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn scene(&self, id: &str) -> Option<&SceneEntry> {
        self.scenes.iter().find(|s| s.id == id)
    }

    /// Reads every label file referenced by the manifest.
    pub fn load_annotations(&self) -> Result<AnnotationSet, DatasetError> {
        let mut set = AnnotationSet::new(self.classes.clone());
        for scene in &self.scenes {
            for view in [View::Top, View::Bottom] {
                let path = self.resolve(scene.labels(view));
                let text = std::fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
                let labels = parse_labels(&text)?;
                set.insert(ViewKey::new(scene.id.clone(), view), labels)?;
            }
        }
        Ok(set)
    }
}

/// Scene-level stratified split. Per category, scenes are ordered by id,
/// shuffled with a generator derived from `(seed, category)`, and the first
/// `round(fraction * n)` go to train.
pub fn split_dataset(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<Manifest, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    if manifest.scenes.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in manifest.scenes.iter().enumerate() {
        by_category.entry(s.category.as_str()).or_default().push(i);
    }
    let mut out = manifest.clone();
    for (category, mut idx) in by_category {
        idx.sort_by(|&a, &b| manifest.scenes[a].id.cmp(&manifest.scenes[b].id));
        let mut rng = stream_rng(seed, fnv1a(category.as_bytes()));
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            out.scenes[i].split = Some(if rank < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(out)
}
