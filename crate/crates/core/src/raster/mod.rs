//! Owned 8-bit rasters and the rectification stage: PGM/PPM I/O,
//! thresholding, component contouring, quad extraction, homography
//! estimation and perspective warp.
//!
//! Pixel coordinates used by [`Quad`], [`Homography`] and [`warp`] refer to
//! pixel centers: pixel `(x, y)` sits at the integer point `(x, y)`.

mod contour;
mod homography;
mod io;
mod threshold;
mod warp;

pub use contour::{convex_hull, largest_component, largest_quad, Quad};
pub use homography::{homography_from_corners, homography_from_quad, Homography};
pub use io::{decode_image, encode_image};
pub use threshold::{otsu_threshold, threshold, BinaryMask};
pub use warp::{resize_bilinear, warp};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("malformed image header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("operation needs a {expected}-channel raster, got {found}")]
    WrongChannelCount { expected: u8, found: u8 },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("largest component is degenerate: {0}")]
    DegenerateComponent(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
}

/// A 2-D point in pixel-center coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: u8,
    data: Vec<u8>,
    mm_per_px: Option<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: u8, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidRaster(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width * height * channels as usize;
        if data.len() != expected {
            return Err(RasterError::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            mm_per_px: None,
        })
    }

    /// Solid-color raster. `value` is replicated into every channel.
    pub fn filled(width: usize, height: usize, channels: u8, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, channels, vec![value; width * height * channels as usize])
    }

    pub fn with_mm_per_px(mut self, mm_per_px: f64) -> Result<Self, RasterError> {
        if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
            return Err(RasterError::InvalidRaster(format!(
                "mm_per_px must be positive, got {mm_per_px}"
            )));
        }
        self.mm_per_px = Some(mm_per_px);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn mm_per_px(&self) -> Option<f64> {
        self.mm_per_px
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels as usize
    }

    /// Samples of pixel `(x, y)`; one entry for gray, three for RGB.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = self.index(x, y);
        let c = self.channels as usize;
        &mut self.data[i..i + c]
    }

    /// Luminance conversion `0.299R + 0.587G + 0.114B`, rounded half-up.
    /// Gray rasters are returned unchanged.
    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            mm_per_px: self.mm_per_px,
        }
    }

    /// Copies the pixel rectangle `[x0, x1) x [y0, y1)`, clamped to the image.
    /// Returns `None` when the clamped rectangle is empty.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<Raster> {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        let c = self.channels as usize;
        let w = x1 - x0;
        let mut data = Vec::with_capacity(w * (y1 - y0) * c);
        for y in y0..y1 {
            let start = self.index(x0, y);
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Some(Raster {
            width: w,
            height: y1 - y0,
            channels: self.channels,
            data,
            mm_per_px: self.mm_per_px,
        })
    }
}

/// `0.299R + 0.587G + 0.114B` rounded half-up, in exact integer arithmetic.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let sum = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((sum + 500) / 1000) as u8
}

/// Rounds half-up and clamps into `0..=255`.
#[inline]
pub fn round_to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}
