use alloc::vec;
use alloc::vec::Vec;

use super::{clamp01, Image};
use crate::error::{invalid, Result};

const CATMULL_ROM_A: f64 = -0.5;

/// Cubic convolution kernel (Keys, `a = -0.5`, i.e. Catmull-Rom).
pub fn bicubic_weight(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = libm::fabs(x);
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-sample taps along one axis: `(source index, weight)` with
/// weights summing to one. When shrinking, the kernel is stretched by the
/// scale factor so the resample also low-passes; source indices are clamped
/// to the edge.
struct AxisTaps {
    offsets: Vec<usize>,
    taps: Vec<(usize, f64)>,
}

impl AxisTaps {
    fn new(in_len: usize, out_len: usize) -> Self {
        let scale = in_len as f64 / out_len as f64;
        let stretch = if scale > 1.0 { scale } else { 1.0 };
        let support = 2.0 * stretch;
        let mut offsets = Vec::with_capacity(out_len + 1);
        let mut taps = Vec::new();
        offsets.push(0);
        for o in 0..out_len {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = libm::ceil(center - support) as i64;
            let hi = libm::floor(center + support) as i64;
            let first = taps.len();
            let mut sum = 0.0;
            for j in lo..=hi {
                let w = bicubic_weight((j as f64 - center) / stretch);
                if w != 0.0 {
                    let idx = j.clamp(0, in_len as i64 - 1) as usize;
                    taps.push((idx, w));
                    sum += w;
                }
            }
            for t in &mut taps[first..] {
                t.1 /= sum;
            }
            offsets.push(taps.len());
        }
        Self { offsets, taps }
    }

    fn of(&self, o: usize) -> &[(usize, f64)] {
        &self.taps[self.offsets[o]..self.offsets[o + 1]]
    }
}

/// Bicubic resample to `out_w × out_h`, clamp-to-edge borders, output clamped
/// to `[0, 1]`. Resampling to the input size returns a bit-identical image.
pub fn resize_bicubic(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    let mut r = Resampler::new(img.width(), img.height(), out_w, out_h)?;
    let mut out = Image::from_raw(0, 0, img.colorspace(), Vec::new());
    r.resample_into(img, &mut out)?;
    Ok(out)
}

/// [`resize_bicubic`] for a fixed geometry, keeping its tap tables and
/// scratch buffers between calls.
pub struct Resampler {
    in_w: usize,
    in_h: usize,
    out_w: usize,
    out_h: usize,
    xt: AxisTaps,
    yt: AxisTaps,
    tmp: Vec<f64>,
}

impl Resampler {
    pub fn new(in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Result<Self> {
        if out_w == 0 || out_h == 0 {
            return Err(invalid!("resize target must be positive, got {out_w}x{out_h}"));
        }
        if in_w == 0 || in_h == 0 {
            return Err(invalid!("cannot resize an empty image"));
        }
        let (xt, yt) = (AxisTaps::new(in_w, out_w), AxisTaps::new(in_h, out_h));
        Ok(Self { in_w, in_h, out_w, out_h, xt, yt, tmp: Vec::new() })
    }

    pub fn resample_into(&mut self, img: &Image, out: &mut Image) -> Result<()> {
        if (img.width(), img.height()) != (self.in_w, self.in_h) {
            return Err(invalid!("resampler built for {}x{}, got {}x{}", self.in_w, self.in_h, img.width(), img.height()));
        }
        let (out_w, out_h, ch) = (self.out_w, self.out_h, img.channels());
        let src = img.data();
        let xt = &self.xt;
        self.tmp.clear();
        self.tmp.resize(out_w * self.in_h * ch, 0.0);
        for (row, dst) in src.chunks_exact(self.in_w * ch).zip(self.tmp.chunks_exact_mut(out_w * ch)) {
            if ch == 3 {
                for (ox, o) in dst.chunks_exact_mut(3).enumerate() {
                    let mut acc = [0.0; 3];
                    for &(ix, w) in xt.of(ox) {
                        let p = &row[ix * 3..ix * 3 + 3];
                        acc[0] += w * p[0];
                        acc[1] += w * p[1];
                        acc[2] += w * p[2];
                    }
                    o.copy_from_slice(&acc);
                }
            } else {
                for (ox, o) in dst.chunks_exact_mut(ch).enumerate() {
                    for &(ix, w) in xt.of(ox) {
                        for (a, p) in o.iter_mut().zip(&row[ix * ch..(ix + 1) * ch]) {
                            *a += w * p;
                        }
                    }
                }
            }
        }

        if (out.width(), out.height(), out.colorspace()) != (out_w, out_h, img.colorspace()) {
            *out = Image::from_raw(out_w, out_h, img.colorspace(), vec![0.0; out_w * out_h * ch]);
        }
        let stride = out_w * ch;
        let data = out.data_mut();
        data.fill(0.0);
        for (oy, dst) in data.chunks_exact_mut(stride).enumerate() {
            for &(iy, w) in self.yt.of(oy) {
                let row = &self.tmp[iy * stride..(iy + 1) * stride];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += w * s;
                }
            }
            for d in dst.iter_mut() {
                *d = clamp01(*d);
            }
        }
        Ok(())
    }
}
