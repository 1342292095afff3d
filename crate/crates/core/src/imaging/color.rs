use alloc::vec::Vec;

use super::{ColorSpace, Image};
use crate::error::{invalid, Result};

/// Hexcone HSV of one RGB pixel; hue scaled to `[0, 1)`, hue 0 when grey.
#[inline]
pub fn rgb_pixel_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let mut h = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    } / 6.0;
    if h < 0.0 {
        h += 1.0;
    }
    if h >= 1.0 {
        h -= 1.0;
    }
    (h, s, v)
}

#[inline]
fn hsv_pixel_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h6 = h * 6.0;
    let sector = libm::floor(h6);
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (sector as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn convert(img: &Image, from: ColorSpace, to: ColorSpace, f: fn(f64, f64, f64) -> (f64, f64, f64)) -> Result<Image> {
    if img.colorspace() != from {
        return Err(invalid!("expected {from:?} image, got {:?}", img.colorspace()));
    }
    let data: Vec<f64> = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| {
            let (a, b, c) = f(p[0], p[1], p[2]);
            [super::clamp01(a), super::clamp01(b), super::clamp01(c)]
        })
        .collect();
    Ok(Image::from_raw(img.width(), img.height(), to, data))
}

pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    convert(img, ColorSpace::Rgb, ColorSpace::Hsv, rgb_pixel_to_hsv)
}

pub fn hsv_to_rgb(img: &Image) -> Result<Image> {
    convert(img, ColorSpace::Hsv, ColorSpace::Rgb, hsv_pixel_to_rgb)
}
