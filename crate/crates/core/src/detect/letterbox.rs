use serde::{Deserialize, Serialize};

use super::DetBox;
use crate::raster::{resize_bilinear, Raster, RasterError};

/// Aspect-preserving resize onto a square detector input with black bars.
///
/// Box conversions work on normalized coordinates of the source canvas and
/// of the square input respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Letterbox {
    pub src_w: usize,
    pub src_h: usize,
    pub size: usize,
    pub new_w: usize,
    pub new_h: usize,
    pub pad_x: usize,
    pub pad_y: usize,
}

impl Letterbox {
    pub fn new(src_w: usize, src_h: usize, size: usize) -> Self {
        let scale = (size as f64 / src_w as f64).min(size as f64 / src_h as f64);
        let new_w = ((src_w as f64 * scale).round() as usize).clamp(1, size);
        let new_h = ((src_h as f64 * scale).round() as usize).clamp(1, size);
        Self {
            src_w,
            src_h,
            size,
            new_w,
            new_h,
            pad_x: (size - new_w) / 2,
            pad_y: (size - new_h) / 2,
        }
    }

    pub fn apply(&self, img: &Raster) -> Result<Raster, RasterError> {
        if img.width() != self.src_w || img.height() != self.src_h {
            return Err(RasterError::InvalidRaster(format!(
                "letterbox built for {}x{}, got {}x{}",
                self.src_w,
                self.src_h,
                img.width(),
                img.height()
            )));
        }
        let resized = if (self.new_w, self.new_h) == (self.src_w, self.src_h) {
            img.clone()
        } else {
            resize_bilinear(img, self.new_w, self.new_h)?
        };
        let ch = img.channels() as usize;
        let mut out = Raster::filled(self.size, self.size, img.channels(), 0)?;
        let row_len = self.new_w * ch;
        for y in 0..self.new_h {
            let src_start = resized.index(0, y);
            let dst_start = out.index(self.pad_x, y + self.pad_y);
            out.data_mut()[dst_start..dst_start + row_len]
                .copy_from_slice(&resized.data()[src_start..src_start + row_len]);
        }
        Ok(out)
    }

    /// Canvas-normalized box to input-normalized box.
    pub fn to_input(&self, b: &DetBox) -> DetBox {
        let s = self.size as f64;
        DetBox {
            cx: (b.cx * self.new_w as f64 + self.pad_x as f64) / s,
            cy: (b.cy * self.new_h as f64 + self.pad_y as f64) / s,
            w: b.w * self.new_w as f64 / s,
            h: b.h * self.new_h as f64 / s,
            ..*b
        }
    }

    /// Input-normalized box back to the canvas, clipped to the unit square.
    pub fn to_canvas(&self, b: &DetBox) -> Option<DetBox> {
        let s = self.size as f64;
        DetBox {
            cx: (b.cx * s - self.pad_x as f64) / self.new_w as f64,
            cy: (b.cy * s - self.pad_y as f64) / self.new_h as f64,
            w: b.w * s / self.new_w as f64,
            h: b.h * s / self.new_h as f64,
            ..*b
        }
        .clip_unit()
    }
}
