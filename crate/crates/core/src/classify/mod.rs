//! Crop normalisation, colour-histogram features, a softmax classifier and
//! temporal smoothing of its scores.

mod model;
mod smooth;

pub use model::{
    featurize, loss_and_gradient, predict, train, train_from, EpochStats, Example, Gradients, Optimizer, SoftmaxModel, TrainConfig,
};
pub use smooth::{temporal_smooth, Smoothed, SmoothingPolicy, TemporalSmoother};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{resize_bicubic, rgb_pixel_to_hsv, ColorSpace, Image};

/// Classifier input side length.
pub const CROP_SIZE: usize = 227;

/// A crop stretched to exactly 227×227 RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedCrop(Image);

impl PreparedCrop {
    pub fn image(&self) -> &Image {
        &self.0
    }
}

/// Resizes straight to 227×227 without keeping the aspect ratio.
pub fn prepare_crop(crop: &Image) -> Result<PreparedCrop> {
    if crop.colorspace() != ColorSpace::Rgb {
        return Err(invalid!("classifier crops must be RGB"));
    }
    if crop.width() == 0 || crop.height() == 0 {
        return Err(invalid!("empty crop"));
    }
    Ok(PreparedCrop(resize_bicubic(crop, CROP_SIZE, CROP_SIZE)?))
}

/// Per-crop photometric normalisation applied before resizing. A power law
/// moves the `percentile`-th value (the housing's black level on a tower
/// crop) to `target`, with the exponent clamped to
/// `[min_exponent, max_exponent]`; then an optional min-max stretch over all
/// channels. The clamp bounds how much exposure error is corrected: an
/// over-bright crop may be darkened up to a squaring, a dark one only
/// brightened a little since that mostly amplifies noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exposure {
    pub percentile: f64,
    pub target: f64,
    pub min_exponent: f64,
    pub max_exponent: f64,
    pub stretch: bool,
}

impl Default for Exposure {
    fn default() -> Self {
        Self { percentile: 0.1, target: 0.09, min_exponent: 0.7, max_exponent: 2.0, stretch: true }
    }
}

impl Exposure {
    /// Leaves crops untouched.
    pub fn none() -> Self {
        Self { percentile: 0.5, target: 0.5, min_exponent: 1.0, max_exponent: 1.0, stretch: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.percentile) {
            return Err(invalid!("exposure percentile must lie in [0, 1]"));
        }
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(invalid!("exposure target must lie in (0, 1)"));
        }
        if !(self.min_exponent > 0.0 && self.min_exponent <= self.max_exponent && self.max_exponent.is_finite()) {
            return Err(invalid!("exposure exponents must satisfy 0 < min <= max"));
        }
        Ok(())
    }
}

/// Applies [`Exposure`] to an RGB crop.
pub fn normalise_exposure(crop: &Image, e: &Exposure) -> Result<Image> {
    e.validate()?;
    if crop.colorspace() != ColorSpace::Rgb {
        return Err(invalid!("classifier crops must be RGB"));
    }
    if crop.width() == 0 || crop.height() == 0 {
        return Err(invalid!("empty crop"));
    }
    let mut data = crop.data().to_vec();
    if e.min_exponent != 1.0 || e.max_exponent != 1.0 {
        let mut v: Vec<f64> = data.chunks_exact(3).map(|p| p[0].max(p[1]).max(p[2])).collect();
        let k = ((v.len() - 1) as f64 * e.percentile) as usize;
        let (_, r, _) = v.select_nth_unstable_by(k, f64::total_cmp);
        let r = r.clamp(1e-4, 0.999);
        let k = (libm::log(e.target) / libm::log(r)).clamp(e.min_exponent, e.max_exponent);
        if k != 1.0 {
            data.iter_mut().for_each(|x| *x = libm::pow(*x, k));
        }
    }
    if e.stretch {
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-6 {
            data.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
        }
    }
    Image::new(crop.width(), crop.height(), ColorSpace::Rgb, data)
}

/// Layout of the feature vector: per horizontal band, hue, saturation and
/// value histograms, then one mean value per band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub bands: usize,
    pub hue_bins: usize,
    pub sat_bins: usize,
    pub val_bins: usize,
    pub exposure: Exposure,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { bands: 3, hue_bins: 8, sat_bins: 8, val_bins: 8, exposure: Exposure::default() }
    }
}

impl FeatureConfig {
    pub fn len(&self) -> usize {
        self.bands * (self.hue_bins + self.sat_bins + self.val_bins) + self.bands
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.hue_bins == 0 || self.sat_bins == 0 || self.val_bins == 0 {
            return Err(invalid!("feature bands and bins must be positive"));
        }
        if self.bands > CROP_SIZE {
            return Err(invalid!("more bands than crop rows"));
        }
        self.exposure.validate()
    }
}

/// Splits `w` of a sample at `t ∈ [0, 1]` between the two nearest bin
/// centres. Linear histograms pile the ends into the edge bins; circular
/// ones wrap.
fn soft_bin(hist: &mut [f64], t: f64, w: f64, circular: bool) {
    let n = hist.len();
    let p = t * n as f64 - 0.5;
    let lo = libm::floor(p);
    let frac = p - lo;
    let lo = lo as i64;
    if circular {
        let a = lo.rem_euclid(n as i64) as usize;
        hist[a] += w * (1.0 - frac);
        hist[(a + 1) % n] += w * frac;
    } else if lo < 0 {
        hist[0] += w;
    } else if lo as usize >= n - 1 {
        hist[n - 1] += w;
    } else {
        hist[lo as usize] += w * (1.0 - frac);
        hist[lo as usize + 1] += w * frac;
    }
}

fn normalise(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    } else {
        hist.fill(0.0);
        hist[0] = 1.0;
    }
}

/// Band histograms of a prepared crop. Hue votes are weighted by `s·v` so
/// grey backdrop barely registers; a band with no chromatic pixel puts its
/// hue mass in bin 0.
pub fn extract_features(crop: &PreparedCrop, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let img = crop.image();
    let (w, h) = (img.width(), img.height());
    let per_band = cfg.hue_bins + cfg.sat_bins + cfg.val_bins;
    let mut out = vec![0.0; cfg.len()];
    for band in 0..cfg.bands {
        let (y0, y1) = (band * h / cfg.bands, (band + 1) * h / cfg.bands);
        let slot = &mut out[band * per_band..(band + 1) * per_band];
        let (hue, rest) = slot.split_at_mut(cfg.hue_bins);
        let (sat, val) = rest.split_at_mut(cfg.sat_bins);
        let mut v_sum = 0.0;
        for p in img.data()[y0 * w * 3..y1 * w * 3].chunks_exact(3) {
            let (hh, s, v) = rgb_pixel_to_hsv(p[0], p[1], p[2]);
            soft_bin(hue, hh, s * v, true);
            soft_bin(sat, s, 1.0, false);
            soft_bin(val, v, 1.0, false);
            v_sum += v;
        }
        normalise(hue);
        normalise(sat);
        normalise(val);
        out[cfg.bands * per_band + band] = v_sum / ((y1 - y0) * w) as f64;
    }
    Ok(out)
}

/// Full feature path for a raw crop: exposure normalisation, resize to
/// 227×227, band histograms.
pub fn crop_features(crop: &Image, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    extract_features(&prepare_crop(&normalise_exposure(crop, &cfg.exposure)?)?, cfg)
}
