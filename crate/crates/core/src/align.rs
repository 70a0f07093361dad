//! Grid alignment: sort detections into the rows and columns of the tray,
//! then pair each top-view cell with its bottom-view counterpart.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetBox;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    #[error("layout dimensions differ: top {top_rows}x{top_cols}, bottom {bottom_rows}x{bottom_cols}")]
    DimensionMismatch {
        top_rows: usize,
        top_cols: usize,
        bottom_rows: usize,
        bottom_cols: usize,
    },
}

/// How the bottom view's columns relate to the top view's. Turning a tray
/// over to photograph its underside mirrors the x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorMode {
    None,
    #[default]
    Horizontal,
}

impl std::str::FromStr for MirrorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "horizontal" => Ok(Self::Horizontal),
            other => Err(format!("unknown mirror mode {other:?} (expected none|horizontal)")),
        }
    }
}

/// Assignment of detections to the cells of an `rows x cols` tray.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    detections: Vec<DetBox>,
    cells: Vec<Option<usize>>,
    unassigned: Vec<usize>,
    cx_tie: bool,
}

impl GridLayout {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The detections the layout was built from, in input order.
    pub fn detections(&self) -> &[DetBox] {
        &self.detections
    }

    /// Index into [`Self::detections`] of the detection in cell `(r, c)`.
    pub fn index(&self, r: usize, c: usize) -> Option<usize> {
        self.cells[r * self.cols + c]
    }

    pub fn cell(&self, r: usize, c: usize) -> Option<&DetBox> {
        self.index(r, c).map(|i| &self.detections[i])
    }

    pub fn unassigned(&self) -> &[usize] {
        &self.unassigned
    }

    pub fn assigned_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Set when two boxes of one row share an identical `cx`; their relative
    /// order then falls back to the remaining sort keys.
    pub fn has_cx_tie(&self) -> bool {
        self.cx_tie
    }
}

fn cmp_f(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Total order on box contents, primary key `cy`.
fn row_major_key(a: &DetBox, b: &DetBox) -> Ordering {
    cmp_f(a.cy, b.cy)
        .then(cmp_f(a.cx, b.cx))
        .then(cmp_f(a.conf, b.conf))
        .then(a.class_id.cmp(&b.class_id))
        .then(cmp_f(a.w, b.w))
        .then(cmp_f(a.h, b.h))
}

/// Same, primary key `cx`.
fn col_key(a: &DetBox, b: &DetBox) -> Ordering {
    cmp_f(a.cx, b.cx)
        .then(cmp_f(a.cy, b.cy))
        .then(cmp_f(a.conf, b.conf))
        .then(a.class_id.cmp(&b.class_id))
        .then(cmp_f(a.w, b.w))
        .then(cmp_f(a.h, b.h))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Assigns the boxes of a short row (`n < cols`, sorted by `cx`) to strictly
/// increasing columns minimizing the squared distance to the column centers.
fn fit_columns(cxs: &[f64], centers: &[f64]) -> Vec<usize> {
    let n = cxs.len();
    let c = centers.len();
    let cost = |i: usize, j: usize| (cxs[i] - centers[j]).powi(2);
    // best[i][j]: minimal cost of boxes 0..=i with box i in column j
    let mut best = vec![vec![f64::INFINITY; c]; n];
    let mut from = vec![vec![usize::MAX; c]; n];
    for j in 0..c {
        best[0][j] = cost(0, j);
    }
    for i in 1..n {
        let mut run_min = f64::INFINITY;
        let mut run_arg = usize::MAX;
        for j in i..c {
            if best[i - 1][j - 1] < run_min {
                run_min = best[i - 1][j - 1];
                run_arg = j - 1;
            }
            best[i][j] = run_min + cost(i, j);
            from[i][j] = run_arg;
        }
    }
    let mut j = (n - 1..c)
        .min_by(|&a, &b| best[n - 1][a].total_cmp(&best[n - 1][b]).then(a.cmp(&b)))
        .unwrap_or(n - 1);
    let mut out = vec![0; n];
    for i in (0..n).rev() {
        out[i] = j;
        if i > 0 {
            j = from[i][j];
        }
    }
    out
}

/// Sorts detections into a `rows x cols` grid.
///
/// Boxes are ordered by `cy`; a new row starts when a box's `cy` exceeds the
/// previous box's by more than half the median box height. Each row is
/// ordered by `cx`. Rows map to `r = 0..rows` in order; rows beyond `rows`
/// and the rightmost extras of rows longer than `cols` are unassigned. A row
/// with fewer than `cols` boxes is fitted to column centers estimated from
/// the complete rows, so a missing detection leaves its own cell empty
/// rather than shifting its neighbours; without complete rows, short rows
/// fill from the left.
pub fn sort_grid(boxes: &[DetBox], rows: usize, cols: usize) -> GridLayout {
    let mut layout = GridLayout {
        rows,
        cols,
        detections: boxes.to_vec(),
        cells: vec![None; rows * cols],
        unassigned: Vec::new(),
        cx_tie: false,
    };
    if boxes.is_empty() {
        return layout;
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| row_major_key(&boxes[a], &boxes[b]).then(a.cmp(&b)));
    let break_gap = 0.5 * median(boxes.iter().map(|b| b.h).collect());

    let mut grid_rows: Vec<Vec<usize>> = Vec::new();
    let mut prev_cy = f64::NEG_INFINITY;
    for &i in &order {
        let cy = boxes[i].cy;
        match grid_rows.last_mut() {
            Some(row) if cy - prev_cy <= break_gap => row.push(i),
            _ => grid_rows.push(vec![i]),
        }
        prev_cy = cy;
    }
    for row in &mut grid_rows {
        row.sort_by(|&a, &b| col_key(&boxes[a], &boxes[b]).then(a.cmp(&b)));
        if row.windows(2).any(|w| boxes[w[0]].cx == boxes[w[1]].cx) {
            layout.cx_tie = true;
        }
    }

    let full: Vec<&Vec<usize>> = grid_rows.iter().take(rows).filter(|r| r.len() == cols).collect();
    let centers: Option<Vec<f64>> = (!full.is_empty()).then(|| {
        (0..cols)
            .map(|c| median(full.iter().map(|r| boxes[r[c]].cx).collect()))
            .collect()
    });

    for (r, row) in grid_rows.iter().enumerate() {
        if r >= rows {
            layout.unassigned.extend(row.iter().copied());
            continue;
        }
        let placed = row.len().min(cols);
        let columns: Vec<usize> = match &centers {
            Some(ctr) if row.len() < cols => {
                let cxs: Vec<f64> = row.iter().map(|&i| boxes[i].cx).collect();
                fit_columns(&cxs, ctr)
            }
            _ => (0..placed).collect(),
        };
        for (k, &c) in columns.iter().enumerate() {
            layout.cells[r * cols + c] = Some(row[k]);
        }
        layout.unassigned.extend(row[placed..].iter().copied());
    }
    layout
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPair {
    /// Cell in top-view coordinates.
    pub cell: (usize, usize),
    /// Detection index into the top layout.
    pub top: Option<usize>,
    /// Detection index into the bottom layout.
    pub bottom: Option<usize>,
    /// Cell the bottom detection was taken from, in bottom-view coordinates.
    pub bottom_cell: (usize, usize),
}

impl CellPair {
    pub fn is_complete(&self) -> bool {
        self.top.is_some() && self.bottom.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPairing {
    pub pairs: Vec<CellPair>,
    pub mirror_mode: MirrorMode,
}

impl ViewPairing {
    pub fn complete(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_complete()).count()
    }

    pub fn half_pairs(&self) -> impl Iterator<Item = &CellPair> {
        self.pairs.iter().filter(|p| !p.is_complete())
    }
}

/// Pairs top cell `(r, c)` with bottom cell `(r, c)`, or `(r, cols-1-c)`
/// under horizontal mirroring. Cells occupied in only one view become
/// half-pairs; cells empty in both are skipped.
pub fn pair_views(top: &GridLayout, bottom: &GridLayout, mirror_mode: MirrorMode) -> Result<ViewPairing, AlignError> {
    if top.rows != bottom.rows || top.cols != bottom.cols {
        return Err(AlignError::DimensionMismatch {
            top_rows: top.rows,
            top_cols: top.cols,
            bottom_rows: bottom.rows,
            bottom_cols: bottom.cols,
        });
    }
    let mut pairs = Vec::new();
    for r in 0..top.rows {
        for c in 0..top.cols {
            let bc = match mirror_mode {
                MirrorMode::None => c,
                MirrorMode::Horizontal => top.cols - 1 - c,
            };
            let t = top.index(r, c);
            let b = bottom.index(r, bc);
            if t.is_some() || b.is_some() {
                pairs.push(CellPair {
                    cell: (r, c),
                    top: t,
                    bottom: b,
                    bottom_cell: (r, bc),
                });
            }
        }
    }
    Ok(ViewPairing { pairs, mirror_mode })
}
