//! Raster type, box geometry, resampling and colour conversion.

mod color;
mod geometry;
mod resample;

pub use color::{hsv_to_rgb, rgb_pixel_to_hsv, rgb_to_hsv};
pub use geometry::{iou, BoundingBox};
pub use resample::{bicubic_weight, resize_bicubic, Resampler};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Hsv => 3,
        }
    }
}

/// Owned row-major, channel-interleaved raster of intensities in `[0, 1]`.
///
/// Every constructor validates the invariants (dimensions ≥ 1, exact data
/// length, finite values in range), so any `Image` in hand is well formed.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("image dimensions must be positive, got {width}x{height}"));
        }
        let expected = width * height * colorspace.channels();
        if data.len() != expected {
            return Err(invalid!("image data has {} values, expected {expected}", data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("intensity {v} outside [0, 1]"));
        }
        Ok(Self { width, height, colorspace, data })
    }

    /// Builds an image from arbitrary values, clamping each into `[0, 1]`
    /// (NaN maps to 0).
    pub fn from_clamped(width: usize, height: usize, colorspace: ColorSpace, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = clamp01(*v);
        }
        Self::new(width, height, colorspace, data)
    }

    pub fn filled(width: usize, height: usize, colorspace: ColorSpace, pixel: &[f64]) -> Result<Self> {
        if pixel.len() != colorspace.channels() {
            return Err(invalid!("fill pixel has {} channels, expected {}", pixel.len(), colorspace.channels()));
        }
        let mut data = Vec::with_capacity(width * height * pixel.len());
        for _ in 0..width * height {
            data.extend_from_slice(pixel);
        }
        Self::new(width, height, colorspace, data)
    }

    pub fn from_fn<F>(width: usize, height: usize, colorspace: ColorSpace, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let ch = colorspace.channels();
        let mut data = vec![0.0; width * height * ch];
        for y in 0..height {
            for x in 0..width {
                for c in 0..ch {
                    data[(y * width + x) * ch + c] = f(x, y, c);
                }
            }
        }
        Self::new(width, height, colorspace, data)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_raw(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * colorspace.channels());
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self { width, height, colorspace, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let ch = self.channels();
        let i = (y * self.width + x) * ch;
        &self.data[i..i + ch]
    }

    /// Overwrites one pixel, clamping each channel into `[0, 1]`.
    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[f64]) {
        let ch = self.channels();
        let i = (y * self.width + x) * ch;
        for (dst, v) in self.data[i..i + ch].iter_mut().zip(value) {
            *dst = clamp01(*v);
        }
    }

    /// Applies `f` to every stored value, clamping the result.
    pub(crate) fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Image {
        let data = self.data.iter().map(|&v| clamp01(f(v))).collect();
        Image::from_raw(self.width, self.height, self.colorspace, data)
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox::new(0, 0, self.width as u32, self.height as u32)
    }

    /// Copies the region `b`; output pixel `(i, j)` is input pixel `(b.x + i, b.y + j)`.
    pub fn crop(&self, b: BoundingBox) -> Result<Image> {
        if b.w == 0 || b.h == 0 || !b.fits_within(self.width, self.height) {
            return Err(invalid!("crop box {b:?} outside {}x{} image", self.width, self.height));
        }
        let ch = self.channels();
        let (x0, y0, w, h) = (b.x as usize, b.y as usize, b.w as usize, b.h as usize);
        let mut data = Vec::with_capacity(w * h * ch);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        Ok(Image::from_raw(w, h, self.colorspace, data))
    }

    /// Pastes `src` with its top-left corner at `(x, y)`; parts falling
    /// outside `self` are dropped.
    pub fn blit(&mut self, src: &Image, x: usize, y: usize) -> Result<()> {
        if src.colorspace != self.colorspace {
            return Err(invalid!("blit colorspace mismatch"));
        }
        let ch = self.channels();
        if x >= self.width || y >= self.height {
            return Ok(());
        }
        let w = src.width.min(self.width - x);
        let h = src.height.min(self.height - y);
        for row in 0..h {
            let d = ((y + row) * self.width + x) * ch;
            let s = row * src.width * ch;
            self.data[d..d + w * ch].copy_from_slice(&src.data[s..s + w * ch]);
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    if v >= 0.0 {
        if v > 1.0 {
            1.0
        } else {
            v
        }
    } else {
        0.0
    }
}
