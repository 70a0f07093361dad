use super::{Raster, RasterError};

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(RasterError::InvalidRaster(format!(
                "mask of {width}x{height} cannot hold {} bits",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn invert(mut self) -> Self {
        self.bits.iter_mut().for_each(|b| *b = !*b);
        self
    }
}

/// Sets a mask bit iff the gray sample is `>= t`.
pub fn threshold(img: &Raster, t: u8) -> Result<BinaryMask, RasterError> {
    if img.channels() != 1 {
        return Err(RasterError::WrongChannelCount {
            expected: 1,
            found: img.channels(),
        });
    }
    let bits = img.data().iter().map(|&v| v >= t).collect();
    Ok(BinaryMask {
        width: img.width(),
        height: img.height(),
        bits,
    })
}

/// Otsu's threshold on the gray histogram, returned in the `>= t` convention
/// used by [`threshold`]: the split maximizing between-class variance puts
/// values `<= k` in the background, so `t = k + 1`. Ties pick the lowest `k`.
/// A constant image yields `value + 1` (saturating at 255).
pub fn otsu_threshold(img: &Raster) -> Result<u8, RasterError> {
    if img.channels() != 1 {
        return Err(RasterError::WrongChannelCount {
            expected: 1,
            found: img.channels(),
        });
    }
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    Ok(otsu_from_histogram(&hist))
}

pub(crate) fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best_k = None;
    let mut best_var = -1.0f64;
    let mut w0 = 0u64;
    let mut sum0 = 0.0f64;
    for k in 0..255usize {
        w0 += hist[k];
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_k = Some(k);
        }
    }
    match best_k {
        Some(k) => (k + 1) as u8,
        // single-valued histogram
        None => {
            let v = hist.iter().position(|&c| c > 0).unwrap_or(0);
            (v as u8).saturating_add(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, data: Vec<u8>) -> Raster {
        Raster::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn zero_image_is_all_false() {
        let m = threshold(&gray(4, 4, vec![0; 16]), 128).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn zero_threshold_is_all_true() {
        let m = threshold(&gray(4, 4, vec![255; 16]), 0).unwrap();
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn per_pixel_comparison() {
        let m = threshold(&gray(2, 2, vec![10, 200, 128, 127]), 128).unwrap();
        assert_eq!(m.bits(), &[false, true, true, false]);
    }

    #[test]
    fn rgb_is_rejected() {
        let rgb = Raster::filled(2, 2, 3, 0).unwrap();
        assert_eq!(
            threshold(&rgb, 1),
            Err(RasterError::WrongChannelCount {
                expected: 1,
                found: 3
            })
        );
    }

    #[test]
    fn otsu_splits_bimodal() {
        let mut data = vec![20u8; 50];
        data.extend(vec![230u8; 50]);
        let t = otsu_threshold(&gray(10, 10, data)).unwrap();
        assert!(t > 20 && t <= 230, "t = {t}");
        let m = threshold(&gray(2, 1, vec![20, 230]), t).unwrap();
        assert_eq!(m.bits(), &[false, true]);
    }

    #[test]
    fn otsu_constant_image() {
        assert_eq!(otsu_threshold(&gray(2, 2, vec![7; 4])).unwrap(), 8);
        assert_eq!(otsu_threshold(&gray(2, 2, vec![255; 4])).unwrap(), 255);
    }

    proptest! {
        #[test]
        fn threshold_is_monotone(data in proptest::collection::vec(any::<u8>(), 1..64), t1 in any::<u8>(), t2 in any::<u8>()) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let img = gray(data.len(), 1, data);
            let m_lo = threshold(&img, lo).unwrap();
            let m_hi = threshold(&img, hi).unwrap();
            for (a, b) in m_hi.bits().iter().zip(m_lo.bits()) {
                prop_assert!(!*a || *b);
            }
        }
    }
}
