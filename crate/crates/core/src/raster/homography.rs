use super::{Point, Quad, RasterError};

/// Projective 3x3 transform, normalized so `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

const DET_EPS: f64 = 1e-12;

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Normalizes by `m[2][2]` and checks invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, RasterError> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < DET_EPS {
            return Err(RasterError::SingularSystem(
                "m[2][2] vanishes; cannot normalize".into(),
            ));
        }
        let m = m.map(|row| row.map(|v| v / s));
        let h = Self { m };
        let d = det3(&h.m);
        if !d.is_finite() || d.abs() <= DET_EPS {
            return Err(RasterError::SingularSystem(format!("determinant {d:e}")));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    #[inline]
    pub fn apply(&self, p: Point) -> Option<Point> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < 1e-300 {
            return None;
        }
        Some(Point::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self, RasterError> {
        Self::from_matrix(inv3(&self.m)?)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, RasterError> {
        Self::from_matrix(mul3(&self.m, &other.m))
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3], RasterError> {
    let d = det3(m);
    if !d.is_finite() || d.abs() <= DET_EPS {
        return Err(RasterError::SingularSystem(format!("determinant {d:e}")));
    }
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / d)))
}

fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Closed-form projective map from the unit square corners
/// `(0,0), (1,0), (1,1), (0,1)` onto `p[0..4]`.
fn square_to_quad(p: &[Point; 4]) -> [[f64; 3]; 3] {
    let (x0, y0, x1, y1, x2, y2, x3, y3) = (p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y);
    let sx = x0 - x1 + x2 - x3;
    let sy = y0 - y1 + y2 - y3;
    if sx == 0.0 && sy == 0.0 {
        return [[x1 - x0, x3 - x0, x0], [y1 - y0, y3 - y0, y0], [0.0, 0.0, 1.0]];
    }
    let dx1 = x1 - x2;
    let dx2 = x3 - x2;
    let dy1 = y1 - y2;
    let dy2 = y3 - y2;
    let den = dx1 * dy2 - dx2 * dy1;
    let g = (sx * dy2 - dx2 * sy) / den;
    let h = (dx1 * sy - sx * dy1) / den;
    [
        [x1 - x0 + g * x1, x3 - x0 + h * x3, x0],
        [y1 - y0 + g * y1, y3 - y0 + h * y3, y0],
        [g, h, 1.0],
    ]
}

fn has_collinear_triple(p: &[Point; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|q| [q.x.abs(), q.y.abs()])
        .fold(1.0f64, f64::max);
    let tol = 1e-9 * scale * scale;
    for skip in 0..4 {
        let t: Vec<Point> = (0..4).filter(|&i| i != skip).map(|i| p[i]).collect();
        let cross = (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[1].y - t[0].y) * (t[2].x - t[0].x);
        if cross.abs() <= tol {
            return true;
        }
    }
    false
}

/// Four-point homography taking `src[i]` to `dst[i]`.
pub fn homography_from_corners(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography, RasterError> {
    if has_collinear_triple(src) {
        return Err(RasterError::SingularSystem("three source corners are collinear".into()));
    }
    if has_collinear_triple(dst) {
        return Err(RasterError::SingularSystem("three target corners are collinear".into()));
    }
    let to_src = square_to_quad(src);
    let to_dst = square_to_quad(dst);
    let from_src = inv3(&to_src)?;
    Homography::from_matrix(mul3(&to_dst, &from_src))
}

/// Maps the quad's canonical corners onto the output canvas corners
/// `(0,0), (w-1,0), (w-1,h-1), (0,h-1)`.
pub fn homography_from_quad(q: &Quad, out_w: usize, out_h: usize) -> Result<Homography, RasterError> {
    if out_w < 2 || out_h < 2 {
        return Err(RasterError::InvalidRaster(format!(
            "output canvas must be at least 2x2, got {out_w}x{out_h}"
        )));
    }
    let (w, h) = ((out_w - 1) as f64, (out_h - 1) as f64);
    let dst = [
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h),
        Point::new(0.0, h),
    ];
    homography_from_corners(&q.corners(), &dst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reproj_err(h: &Homography, src: &[Point; 4], dst: &[Point; 4]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| h.apply(*s).unwrap().dist(*d))
            .fold(0.0, f64::max)
    }

    #[test]
    fn full_canvas_quad_is_identity() {
        let (w, h) = (64usize, 48usize);
        let q = Quad::new([
            Point::new(0.0, 0.0),
            Point::new(63.0, 0.0),
            Point::new(63.0, 47.0),
            Point::new(0.0, 47.0),
        ])
        .unwrap();
        let hom = homography_from_quad(&q, w, h).unwrap();
        let id = Homography::identity().matrix();
        for (r, row) in hom.matrix().iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((v - id[r][c]).abs() < 1e-12, "{:?}", hom.matrix());
            }
        }
    }

    #[test]
    fn scaled_square_gives_half_scale() {
        // unit square scaled by 2 onto a 2x2 canvas (corners 0..1)
        let src = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        let q = Quad::new(src).unwrap();
        let hom = homography_from_quad(&q, 2, 2).unwrap();
        let m = hom.matrix();
        assert!((m[0][0] - 0.5).abs() < 1e-12 && (m[1][1] - 0.5).abs() < 1e-12);
        assert!(m[0][1].abs() < 1e-12 && m[1][0].abs() < 1e-12);
        assert!(m[2][0].abs() < 1e-12 && m[2][1].abs() < 1e-12);
        let dst = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert!(reproj_err(&hom, &src, &dst) < 1e-9);
    }

    #[test]
    fn collinear_corners_are_singular() {
        let src = [
            Point::new(0.0, 0.0),
            Point::new(5.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(0.0, 10.0),
        ];
        let dst = [
            Point::new(0.0, 0.0),
            Point::new(9.0, 0.0),
            Point::new(9.0, 9.0),
            Point::new(0.0, 9.0),
        ];
        assert!(matches!(
            homography_from_corners(&src, &dst),
            Err(RasterError::SingularSystem(_))
        ));
    }

    #[test]
    fn rejects_tiny_canvas() {
        let q = Quad::new([
            Point::new(0.0, 0.0),
            Point::new(9.0, 0.0),
            Point::new(9.0, 9.0),
            Point::new(0.0, 9.0),
        ])
        .unwrap();
        assert!(homography_from_quad(&q, 1, 10).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let h = Homography::from_matrix([[1.1, 0.2, 3.0], [-0.1, 0.9, 5.0], [1e-4, -2e-4, 1.0]]).unwrap();
        let inv = h.inverse().unwrap();
        let p = Point::new(123.0, 45.0);
        let back = inv.apply(h.apply(p).unwrap()).unwrap();
        assert!(back.dist(p) < 1e-9);
    }

    proptest! {
        #[test]
        fn corners_reproject(
            d in proptest::collection::vec(-150.0f64..150.0, 8),
            w in 100usize..2000, h in 100usize..2000
        ) {
            let base = [(200.0, 200.0), (1200.0, 200.0), (1200.0, 1600.0), (200.0, 1600.0)];
            let pts: Vec<Point> = base.iter().enumerate().map(|(i, (x, y))| Point::new(x + d[2 * i], y + d[2 * i + 1])).collect();
            let q = Quad::new([pts[0], pts[1], pts[2], pts[3]]).unwrap();
            let hom = homography_from_quad(&q, w, h).unwrap();
            let (fw, fh) = ((w - 1) as f64, (h - 1) as f64);
            let dst = [Point::new(0.0, 0.0), Point::new(fw, 0.0), Point::new(fw, fh), Point::new(0.0, fh)];
            prop_assert!(reproj_err(&hom, &q.corners(), &dst) < 1e-6);
        }
    }
}
