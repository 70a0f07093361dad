//! Batch reports: per-date records, class counts and summary statistics,
//! emitted as JSON or CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ClassTaxonomy, ColorTag, GradeError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Wall-clock milliseconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub decode_ms: f64,
    pub rectify_ms: f64,
    pub detect_ms: f64,
    pub align_ms: f64,
    pub classify_ms: f64,
    pub grade_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn add(&mut self, o: &StageTimings) {
        self.decode_ms += o.decode_ms;
        self.rectify_ms += o.rectify_ms;
        self.detect_ms += o.detect_ms;
        self.align_ms += o.align_ms;
        self.classify_ms += o.classify_ms;
        self.grade_ms += o.grade_ms;
        self.total_ms += o.total_ms;
    }
}

/// One graded date. Views that did not see the date have no class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateRecord {
    pub scene: String,
    pub row: usize,
    pub col: usize,
    pub top_class: Option<usize>,
    pub bottom_class: Option<usize>,
    pub final_class: usize,
    pub area_mm2: f64,
    pub weight_g: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class_id: usize,
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub scene_ids: Vec<String>,
    pub total_dates: usize,
    pub total_defective: usize,
    pub first_grade_black: usize,
    pub first_grade_golden: usize,
    pub per_class: Vec<ClassCount>,
    pub mean_area_mm2: f64,
    pub mean_weight_g: f64,
    pub unassigned_count: usize,
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<StageTimings>,
    #[serde(default)]
    pub failures: Vec<String>,
    pub records: Vec<DateRecord>,
}

/// Counts and means over `records`. Scene ids and the unassigned count are
/// left for the caller.
pub fn build_report(
    records: Vec<DateRecord>,
    tax: &ClassTaxonomy,
    timing: Option<StageTimings>,
) -> Result<BatchReport, GradeError> {
    let mut counts = vec![0usize; tax.len()];
    let (mut black, mut golden) = (0, 0);
    for r in &records {
        let info = tax.get(r.final_class)?;
        counts[r.final_class] += 1;
        if info.first_grade {
            match info.color {
                Some(ColorTag::Black) => black += 1,
                Some(ColorTag::Golden) => golden += 1,
                None => {}
            }
        }
    }
    let n = records.len();
    let mean = |f: fn(&DateRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let first: usize = tax
        .classes()
        .iter()
        .zip(&counts)
        .filter(|(c, _)| c.first_grade)
        .map(|(_, k)| *k)
        .sum();
    Ok(BatchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scene_ids: Vec::new(),
        total_dates: n,
        total_defective: n - first,
        first_grade_black: black,
        first_grade_golden: golden,
        per_class: tax
            .classes()
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (c, count))| ClassCount {
                class_id: i,
                name: c.name.clone(),
                count,
            })
            .collect(),
        mean_area_mm2: mean(|r| r.area_mm2),
        mean_weight_g: mean(|r| r.weight_g),
        unassigned_count: 0,
        empty: n == 0,
        timing,
        failures: Vec::new(),
        records,
    })
}

/// Aggregate of several reports in the given order. Timings are summed when
/// every part carries them.
pub fn merge_reports(parts: &[BatchReport], tax: &ClassTaxonomy) -> Result<BatchReport, GradeError> {
    let records: Vec<DateRecord> = parts.iter().flat_map(|p| p.records.iter().cloned()).collect();
    let timing = parts.iter().try_fold(StageTimings::default(), |mut acc, p| {
        p.timing.map(|t| {
            acc.add(&t);
            acc
        })
    });
    let mut out = build_report(records, tax, if parts.is_empty() { None } else { timing })?;
    out.scene_ids = parts.iter().flat_map(|p| p.scene_ids.iter().cloned()).collect();
    out.unassigned_count = parts.iter().map(|p| p.unassigned_count).sum();
    out.failures = parts.iter().flat_map(|p| p.failures.iter().cloned()).collect();
    Ok(out)
}

const CSV_HEADER: [&str; 17] = [
    "kind",
    "scene",
    "row",
    "col",
    "top_class",
    "bottom_class",
    "final_class",
    "final_name",
    "area_mm2",
    "weight_g",
    "total_dates",
    "total_defective",
    "first_grade_black",
    "first_grade_golden",
    "mean_area_mm2",
    "mean_weight_g",
    "unassigned_count",
];

impl BatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// One `date` row per record, then one `summary` row.
    pub fn write_csv<W: Write>(&self, w: W, tax: &ClassTaxonomy) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let opt = |v: Option<usize>| v.map(|c| c.to_string()).unwrap_or_default();
        for r in &self.records {
            let name = tax.get(r.final_class).map(|c| c.name.clone()).unwrap_or_default();
            let mut row = vec![
                "date".to_string(),
                r.scene.clone(),
                r.row.to_string(),
                r.col.to_string(),
                opt(r.top_class),
                opt(r.bottom_class),
                r.final_class.to_string(),
                name,
                r.area_mm2.to_string(),
                r.weight_g.to_string(),
            ];
            row.resize(CSV_HEADER.len(), String::new());
            out.write_record(&row)?;
        }
        let mut row = vec![String::new(); 10];
        row[0] = "summary".into();
        row.extend([
            self.total_dates.to_string(),
            self.total_defective.to_string(),
            self.first_grade_black.to_string(),
            self.first_grade_golden.to_string(),
            self.mean_area_mm2.to_string(),
            self.mean_weight_g.to_string(),
            self.unassigned_count.to_string(),
        ]);
        out.write_record(&row)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self, tax: &ClassTaxonomy) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, tax).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}
