use super::{BinaryMask, Point, RasterError};

/// Convex quadrilateral in canonical corner order: top-left (minimal
/// `x + y`), then clockwise on screen (y grows downward): top-right,
/// bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    /// Orders four corners canonically and validates strict convexity.
    pub fn new(corners: [Point; 4]) -> Result<Self, RasterError> {
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(RasterError::DegenerateComponent("non-finite corner".into()));
        }
        let cx = corners.iter().map(|p| p.x).sum::<f64>() / 4.0;
        let cy = corners.iter().map(|p| p.y).sum::<f64>() / 4.0;
        let mut sorted = corners;
        sorted.sort_by(|a, b| {
            let ta = (a.y - cy).atan2(a.x - cx);
            let tb = (b.y - cy).atan2(b.x - cx);
            ta.total_cmp(&tb)
        });
        let start = (0..4)
            .min_by(|&a, &b| {
                let ka = (sorted[a].x + sorted[a].y, sorted[a].y);
                let kb = (sorted[b].x + sorted[b].y, sorted[b].y);
                ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
            .unwrap_or(0);
        sorted.rotate_left(start);
        for i in 0..4 {
            let a = sorted[i];
            let b = sorted[(i + 1) % 4];
            let c = sorted[(i + 2) % 4];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if cross <= 0.0 {
                return Err(RasterError::DegenerateComponent(
                    "corners do not form a strictly convex quadrilateral".into(),
                ));
            }
        }
        Ok(Self { corners: sorted })
    }

    pub fn corners(&self) -> [Point; 4] {
        self.corners
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners)
    }
}

fn polygon_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s.abs() / 2.0
}

/// Horizontal foreground runs `(y, x_start, x_end)` in scan order, plus the
/// run indices of the largest 4-connected component. Equal sizes resolve to
/// the component found first in row-major scan order.
fn largest_component_runs(mask: &BinaryMask) -> Option<(Vec<(usize, usize, usize)>, Vec<usize>)> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut prev = 0..0;
    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        let first = runs.len();
        let mut x = 0;
        while x < w {
            if !row[x] {
                x += 1;
                continue;
            }
            let x0 = x;
            while x < w && row[x] {
                x += 1;
            }
            runs.push((y, x0, x));
            parent.push(runs.len() - 1);
        }
        // overlapping spans in consecutive rows touch 4-connectedly
        let (mut a, mut b) = (prev.start, first);
        while a < prev.end && b < runs.len() {
            let (ra, rb) = (runs[a], runs[b]);
            if ra.1 < rb.2 && rb.1 < ra.2 {
                let (pa, pb) = (find(&mut parent, a), find(&mut parent, b));
                if pa != pb {
                    // the earlier run stays root so roots mark scan order
                    let (lo, hi) = if pa < pb { (pa, pb) } else { (pb, pa) };
                    parent[hi] = lo;
                }
            }
            if ra.2 <= rb.2 {
                a += 1;
            } else {
                b += 1;
            }
        }
        prev = first..runs.len();
    }
    if runs.is_empty() {
        return None;
    }
    let roots: Vec<usize> = (0..runs.len()).map(|i| find(&mut parent, i)).collect();
    let mut size = vec![0usize; runs.len()];
    for (run, &r) in runs.iter().zip(&roots) {
        size[r] += run.2 - run.1;
    }
    let mut best = 0;
    for i in 0..runs.len() {
        if roots[i] == i && size[i] > size[best] {
            best = i;
        }
    }
    let members = (0..runs.len()).filter(|&i| roots[i] == best).collect();
    Some((runs, members))
}

/// Pixels of the largest 4-connected foreground component, as
/// `(x, y)` pairs in scan order. Equal sizes resolve to the component
/// found first in row-major scan order.
pub fn largest_component(mask: &BinaryMask) -> Option<Vec<(usize, usize)>> {
    let (runs, members) = largest_component_runs(mask)?;
    Some(
        members
            .iter()
            .flat_map(|&i| {
                let (y, x0, x1) = runs[i];
                (x0..x1).map(move |x| (x, y))
            })
            .collect(),
    )
}

/// Andrew's monotone chain over integer points. Collinear points are
/// dropped; the result is counter-clockwise in a y-up frame (clockwise on
/// screen), starting at the lexicographically smallest point.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Twice the unsigned triangle area, exact.
#[inline]
fn tri2(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
}

/// Maximal-area quadrilateral with vertices on a convex polygon (given in
/// order, no collinear triples). Returns hull indices in increasing order
/// and twice the area. Ties keep the lexicographically smallest index tuple.
pub(crate) fn max_area_quad(hull: &[(i64, i64)]) -> Option<([usize; 4], i64)> {
    let n = hull.len();
    if n < 4 {
        return None;
    }
    let at = |i: usize| hull[i % n];
    let mut best: Option<([usize; 4], i64)> = None;
    let mut consider = |idx: [usize; 4], area: i64| {
        let mut sorted = idx.map(|i| i % n);
        sorted.sort_unstable();
        match best {
            Some((b, a)) if area < a || (area == a && sorted >= b) => {}
            _ => best = Some((sorted, area)),
        }
    };
    for i in 0..n {
        // diagonal (i, j); k on the arc i..j, l on the arc j..i+n
        let mut k = i + 1;
        let mut l = i + 3;
        for j in i + 2..i + n - 1 {
            if k >= j {
                k = j - 1;
            }
            while k + 1 < j && tri2(at(i), at(k + 1), at(j)) > tri2(at(i), at(k), at(j)) {
                k += 1;
            }
            if l <= j {
                l = j + 1;
            }
            while l + 1 < i + n && tri2(at(j), at(l + 1), at(i)) > tri2(at(j), at(l), at(i)) {
                l += 1;
            }
            let area = tri2(at(i), at(k), at(j)) + tri2(at(j), at(l), at(i));
            consider([i, k, j, l], area);
        }
    }
    best
}

/// Finds the largest 4-connected foreground component and fits the
/// maximal-area quadrilateral to its convex hull.
pub fn largest_quad(mask: &BinaryMask) -> Result<Quad, RasterError> {
    let (runs, members) = largest_component_runs(mask).ok_or(RasterError::EmptyMask)?;
    // the hull only depends on the extreme pixels of each row
    let mut rows: Vec<Option<(i64, i64)>> = vec![None; mask.height()];
    for &i in &members {
        let (y, x0, x1) = runs[i];
        let (x0, x1) = (x0 as i64, x1 as i64 - 1);
        rows[y] = Some(match rows[y] {
            None => (x0, x1),
            Some((lo, hi)) => (lo.min(x0), hi.max(x1)),
        });
    }
    let mut extremes = Vec::with_capacity(2 * rows.len());
    for (y, span) in rows.iter().enumerate() {
        if let Some((lo, hi)) = span {
            extremes.push((*lo, y as i64));
            extremes.push((*hi, y as i64));
        }
    }
    let hull = convex_hull(&extremes);
    if hull.len() < 4 {
        return Err(RasterError::DegenerateComponent(format!(
            "convex hull has {} vertices",
            hull.len()
        )));
    }
    let (idx, area2) = max_area_quad(&hull).ok_or_else(|| {
        RasterError::DegenerateComponent("no quadrilateral on hull".into())
    })?;
    if area2 < 32 {
        return Err(RasterError::DegenerateComponent(format!(
            "quadrilateral area {} px² is below 16",
            area2 as f64 / 2.0
        )));
    }
    let corners = idx.map(|i| Point::new(hull[i].0 as f64, hull[i].1 as f64));
    Quad::new(corners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn axis_aligned_rectangle_is_its_own_quad() {
        let m = rect_mask(120, 80, 0, 0, 100, 60);
        let q = largest_quad(&m).unwrap();
        assert_eq!(
            q.corners(),
            [
                Point::new(0.0, 0.0),
                Point::new(99.0, 0.0),
                Point::new(99.0, 59.0),
                Point::new(0.0, 59.0)
            ]
        );
    }

    #[test]
    fn rotated_rectangle_corners() {
        // 100x60 rectangle rotated by 30 degrees about (100, 100)
        let (w, h) = (220usize, 220usize);
        let theta = 30f64.to_radians();
        let (s, c) = theta.sin_cos();
        let center = (100.0, 100.0);
        let half = (50.0, 30.0);
        let mut m = BinaryMask::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                if u.abs() <= half.0 && v.abs() <= half.1 {
                    m.set(x, y, true);
                }
            }
        }
        let analytic: Vec<Point> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|(a, b)| {
                let u = a * half.0;
                let v = b * half.1;
                Point::new(center.0 + c * u - s * v, center.1 + s * u + c * v)
            })
            .collect();
        let q = largest_quad(&m).unwrap();
        for corner in q.corners() {
            let d = analytic
                .iter()
                .map(|p| p.dist(corner))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1.5, "corner {corner:?} is {d} px from the analytic corners");
        }
    }

    #[test]
    fn picks_largest_component() {
        let mut m = rect_mask(200, 200, 0, 0, 25, 20); // 500 px
        for y in 100..150 {
            for x in 100..200 {
                m.set(x, y, true); // 5000 px
            }
        }
        let q = largest_quad(&m).unwrap();
        assert_eq!(q.corners()[0], Point::new(100.0, 100.0));
        assert_eq!(q.corners()[2], Point::new(199.0, 149.0));
    }

    #[test]
    fn empty_and_degenerate() {
        assert_eq!(largest_quad(&BinaryMask::empty(5, 5)), Err(RasterError::EmptyMask));
        let line = rect_mask(20, 20, 2, 5, 10, 1);
        assert!(matches!(largest_quad(&line), Err(RasterError::DegenerateComponent(_))));
        let tiny = rect_mask(20, 20, 2, 5, 3, 3); // area 4 px²
        assert!(matches!(largest_quad(&tiny), Err(RasterError::DegenerateComponent(_))));
    }

    #[test]
    fn quad_rejects_non_convex() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 10.0),
        ];
        assert!(Quad::new(pts).is_err());
        let collinear = [
            Point::new(0.0, 0.0),
            Point::new(5.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(0.0, 10.0),
        ];
        assert!(Quad::new(collinear).is_err());
    }

    fn brute_max_quad(hull: &[(i64, i64)]) -> i64 {
        let n = hull.len();
        let mut best = 0;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        let area = tri2(hull[a], hull[b], hull[c]) + tri2(hull[a], hull[c], hull[d]);
                        best = best.max(area);
                    }
                }
            }
        }
        best
    }

    fn flood_largest(mask: &BinaryMask) -> Option<Vec<(usize, usize)>> {
        let (w, h) = (mask.width(), mask.height());
        let mut seen = vec![false; w * h];
        let mut best: Option<Vec<(usize, usize)>> = None;
        for start in 0..w * h {
            if !mask.bits()[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                comp.push((y, x));
                let mut nb = Vec::new();
                if x > 0 { nb.push(i - 1); }
                if x + 1 < w { nb.push(i + 1); }
                if y > 0 { nb.push(i - w); }
                if y + 1 < h { nb.push(i + w); }
                for j in nb {
                    if mask.bits()[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
                best = Some(comp.iter().map(|&(y, x)| (x, y)).collect());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn run_labeling_matches_flood_fill(
            w in 1usize..24, h in 1usize..24, bits in proptest::collection::vec(any::<bool>(), 576)
        ) {
            let mut m = BinaryMask::empty(w, h);
            for y in 0..h {
                for x in 0..w {
                    m.set(x, y, bits[y * 24 + x]);
                }
            }
            prop_assert_eq!(largest_component(&m), flood_largest(&m));
        }

        #[test]
        fn max_area_quad_matches_brute_force(pts in proptest::collection::vec((0i64..60, 0i64..60), 4..40)) {
            let hull = convex_hull(&pts);
            prop_assume!(hull.len() >= 4);
            let (_, area) = max_area_quad(&hull).unwrap();
            prop_assert_eq!(area, brute_max_quad(&hull));
        }

        #[test]
        fn quad_corners_are_canonical_and_in_bbox(
            x0 in 0usize..30, y0 in 0usize..30, rw in 5usize..40, rh in 5usize..40, skew in 0usize..10
        ) {
            // sheared parallelogram
            let (w, h) = (100usize, 100usize);
            let mut m = BinaryMask::empty(w, h);
            for y in 0..rh {
                let shift = skew * y / rh;
                for x in 0..rw {
                    m.set(x0 + x + shift, y0 + y, true);
                }
            }
            let q = largest_quad(&m).unwrap();
            let c = q.corners();
            let s0 = c[0].x + c[0].y;
            for p in &c {
                prop_assert!(p.x >= x0 as f64 && p.x <= (x0 + rw + skew) as f64);
                prop_assert!(p.y >= y0 as f64 && p.y < (y0 + rh) as f64);
                prop_assert!(s0 <= p.x + p.y);
            }
            prop_assert!(Quad::new(c).unwrap() == q);
        }
    }
}
