use super::{Homography, Raster, RasterError};

const EDGE_EPS: f64 = 1e-9;

/// Perspective warp: `h` maps source pixels onto the output canvas. Every
/// output pixel is inverse-mapped and bilinearly sampled; samples falling
/// outside the source are black. The result carries no physical scale.
pub fn warp(img: &Raster, h: &Homography, out_w: usize, out_h: usize) -> Result<Raster, RasterError> {
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::InvalidRaster(format!(
            "output must be non-empty, got {out_w}x{out_h}"
        )));
    }
    let inv = h.inverse()?.matrix();
    let mut out = vec![0u8; out_w * out_h * img.channels() as usize];
    if img.channels() == 1 {
        warp_n::<1>(img, &inv, out_w, &mut out);
    } else {
        warp_n::<3>(img, &inv, out_w, &mut out);
    }
    Raster::new(out_w, out_h, img.channels(), out)
}

fn warp_n<const N: usize>(img: &Raster, inv: &[[f64; 3]; 3], out_w: usize, out: &mut [u8]) {
    let (sw, sh) = (img.width(), img.height());
    let (max_x, max_y) = ((sw - 1) as f64, (sh - 1) as f64);
    let src = img.data();
    let stride = sw * N;
    for (v, row) in out.chunks_exact_mut(out_w * N).enumerate() {
        let vf = v as f64;
        let bx = inv[0][1] * vf + inv[0][2];
        let by = inv[1][1] * vf + inv[1][2];
        let bz = inv[2][1] * vf + inv[2][2];
        for (u, dst) in row.chunks_exact_mut(N).enumerate() {
            let uf = u as f64;
            let wz = inv[2][0] * uf + bz;
            if wz.abs() < 1e-300 {
                continue;
            }
            let x = (inv[0][0] * uf + bx) / wz;
            let y = (inv[1][0] * uf + by) / wz;
            if !(x >= -EDGE_EPS && x <= max_x + EDGE_EPS && y >= -EDGE_EPS && y <= max_y + EDGE_EPS) {
                continue;
            }
            let x = x.clamp(0.0, max_x);
            let y = y.clamp(0.0, max_y);
            let (x0, y0) = (x as usize, y as usize);
            let x1 = (x0 + 1).min(sw - 1);
            let y1 = (y0 + 1).min(sh - 1);
            let r0 = &src[y0 * stride..(y0 + 1) * stride];
            let r1 = &src[y1 * stride..(y1 + 1) * stride];
            blend::<N>(r0, r1, x0 * N, x1 * N, weight(x - x0 as f64), weight(y - y0 as f64), dst);
        }
    }
}

const FRAC_BITS: u32 = 11;
const ONE: u32 = 1 << FRAC_BITS;

/// Fixed-point interpolation weight; a zero fraction reads the corner
/// exactly.
#[inline(always)]
fn weight(f: f64) -> u32 {
    ((f * ONE as f64 + 0.5) as u32).min(ONE)
}

#[inline(always)]
fn blend<const N: usize>(r0: &[u8], r1: &[u8], i0: usize, i1: usize, fx: u32, fy: u32, dst: &mut [u8]) {
    for k in 0..N {
        let top = r0[i0 + k] as u32 * (ONE - fx) + r0[i1 + k] as u32 * fx;
        let bot = r1[i0 + k] as u32 * (ONE - fx) + r1[i1 + k] as u32 * fx;
        dst[k] = ((top * (ONE - fy) + bot * fy + (1 << (2 * FRAC_BITS - 1))) >> (2 * FRAC_BITS)) as u8;
    }
}

/// Bilinear resize with pixel-center alignment; keeps the channel count and
/// drops the physical scale.
pub fn resize_bilinear(img: &Raster, out_w: usize, out_h: usize) -> Result<Raster, RasterError> {
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::InvalidRaster(format!(
            "output must be non-empty, got {out_w}x{out_h}"
        )));
    }
    let mut out = vec![0u8; out_w * out_h * img.channels() as usize];
    if img.channels() == 1 {
        resize_n::<1>(img, out_w, out_h, &mut out);
    } else {
        resize_n::<3>(img, out_w, out_h, &mut out);
    }
    Raster::new(out_w, out_h, img.channels(), out)
}

fn resize_n<const N: usize>(img: &Raster, out_w: usize, out_h: usize, out: &mut [u8]) {
    let (sw, sh) = (img.width(), img.height());
    let sx = sw as f64 / out_w as f64;
    let sy = sh as f64 / out_h as f64;
    let src = img.data();
    let stride = sw * N;
    let xs: Vec<(usize, usize, u32)> = (0..out_w)
        .map(|u| {
            let x = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = x.floor() as usize;
            (x0 * N, (x0 + 1).min(sw - 1) * N, weight(x - x0 as f64))
        })
        .collect();
    for (v, row) in out.chunks_exact_mut(out_w * N).enumerate() {
        let y = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = weight(y - y0 as f64);
        let r0 = &src[y0 * stride..(y0 + 1) * stride];
        let r1 = &src[y1 * stride..(y1 + 1) * stride];
        for (dst, &(i0, i1, fx)) in row.chunks_exact_mut(N).zip(&xs) {
            blend::<N>(r0, r1, i0, i1, fx, fy, dst);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{homography_from_corners, Point};

    fn checkerboard(w: usize, h: usize, cell: usize) -> Raster {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(if (x / cell + y / cell) % 2 == 0 { 30 } else { 220 });
            }
        }
        Raster::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn identity_is_byte_exact() {
        let img = checkerboard(37, 23, 4);
        let out = warp(&img, &Homography::identity(), 37, 23).unwrap();
        assert_eq!(out.data(), img.data());
        let rgb = Raster::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(warp(&rgb, &Homography::identity(), 2, 1).unwrap(), rgb);
    }

    #[test]
    fn identity_crop_is_overlap_exact() {
        let img = checkerboard(40, 30, 5);
        let out = warp(&img, &Homography::identity(), 50, 20).unwrap();
        for y in 0..20 {
            for x in 0..50 {
                let expected = if x < 40 { img.pixel(x, y)[0] } else { 0 };
                assert_eq!(out.pixel(x, y)[0], expected);
            }
        }
    }

    #[test]
    fn outside_source_is_black() {
        let img = Raster::filled(20, 20, 1, 200).unwrap();
        let shift = Homography::from_matrix([[1.0, 0.0, 500.0], [0.0, 1.0, 500.0], [0.0, 0.0, 1.0]]).unwrap();
        let out = warp(&img, &shift, 20, 20).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn perspective_round_trip_mae() {
        let img = checkerboard(200, 160, 64);
        let src = [
            Point::new(0.0, 0.0),
            Point::new(199.0, 0.0),
            Point::new(199.0, 159.0),
            Point::new(0.0, 159.0),
        ];
        let dst = [
            Point::new(12.0, 8.0),
            Point::new(190.0, 20.0),
            Point::new(180.0, 150.0),
            Point::new(5.0, 140.0),
        ];
        let fwd = homography_from_corners(&src, &dst).unwrap();
        let warped = warp(&img, &fwd, 200, 160).unwrap();
        let back = warp(&warped, &fwd.inverse().unwrap(), 200, 160).unwrap();
        // compare where the round trip stays inside the warped footprint
        let inv = fwd;
        let mut sum = 0u64;
        let mut n = 0u64;
        for y in 0..160 {
            for x in 0..200 {
                if !(2..198).contains(&x) || !(2..158).contains(&y) {
                    continue;
                }
                let p = inv.apply(Point::new(x as f64, y as f64)).unwrap();
                if p.x >= 1.0 && p.x <= 198.0 && p.y >= 1.0 && p.y <= 158.0 {
                    sum += (back.pixel(x, y)[0] as i32 - img.pixel(x, y)[0] as i32).unsigned_abs() as u64;
                    n += 1;
                }
            }
        }
        let mae = sum as f64 / n as f64;
        assert!(mae < 3.0, "round-trip MAE {mae}");
    }

    #[test]
    fn resize_constant_and_shape() {
        let img = Raster::filled(30, 10, 3, 77).unwrap();
        let out = resize_bilinear(&img, 12, 4).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (12, 4, 3));
        assert!(out.data().iter().all(|&v| v == 77));
    }
}
