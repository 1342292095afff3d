//! Image degradations: defocus (Gaussian) blur, horizontal-or-angled motion
//! blur, gamma correction and downscaling, plus the size × degradation sweep
//! grid used by the robustness experiment.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{resize_bicubic, Image};

/// One degradation, or an ordered composition of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PerturbationSpec {
    Downscale { width: usize, height: usize },
    Defocus { sigma: f64 },
    Motion { angle_deg: f64, strength_px: usize },
    Gamma { gamma: f64 },
    Compose { steps: Vec<PerturbationSpec> },
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        PerturbationSpec::Compose { steps: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PerturbationSpec::Downscale { width, height } if *width == 0 || *height == 0 => {
                Err(invalid!("downscale target must be positive"))
            }
            PerturbationSpec::Defocus { sigma } if !(*sigma > 0.0) || !sigma.is_finite() => {
                Err(invalid!("defocus sigma must be positive, got {sigma}"))
            }
            PerturbationSpec::Motion { strength_px, angle_deg } if *strength_px == 0 || !angle_deg.is_finite() => {
                Err(invalid!("motion blur needs strength >= 1 and a finite angle"))
            }
            PerturbationSpec::Gamma { gamma } if !(*gamma > 0.0) || !gamma.is_finite() => {
                Err(invalid!("gamma must be positive, got {gamma}"))
            }
            PerturbationSpec::Compose { steps } => steps.iter().try_for_each(|s| s.validate()),
            _ => Ok(()),
        }
    }

    /// Short family name used in sweep tables.
    pub fn family(&self) -> &'static str {
        match self {
            PerturbationSpec::Downscale { .. } => "downscale",
            PerturbationSpec::Defocus { .. } => "defocus",
            PerturbationSpec::Motion { .. } => "motion",
            PerturbationSpec::Gamma { .. } => "gamma",
            PerturbationSpec::Compose { steps } if steps.is_empty() => "clean",
            PerturbationSpec::Compose { .. } => "compose",
        }
    }

    /// The family's main parameter (0 for clean/compose).
    pub fn param(&self) -> f64 {
        match self {
            PerturbationSpec::Downscale { width, .. } => *width as f64,
            PerturbationSpec::Defocus { sigma } => *sigma,
            PerturbationSpec::Motion { strength_px, .. } => *strength_px as f64,
            PerturbationSpec::Gamma { gamma } => *gamma,
            PerturbationSpec::Compose { .. } => 0.0,
        }
    }
}

/// Applies `spec`; compositions run left to right.
pub fn apply(spec: &PerturbationSpec, img: &Image) -> Result<Image> {
    spec.validate()?;
    apply_unchecked(spec, img)
}

fn apply_unchecked(spec: &PerturbationSpec, img: &Image) -> Result<Image> {
    match spec {
        PerturbationSpec::Downscale { width, height } => resize_bicubic(img, *width, *height),
        PerturbationSpec::Defocus { sigma } => gaussian_blur(img, *sigma),
        PerturbationSpec::Motion { angle_deg, strength_px } => motion_blur(img, *angle_deg, *strength_px),
        PerturbationSpec::Gamma { gamma } => gamma_correct(img, *gamma),
        PerturbationSpec::Compose { steps } => {
            let mut out = img.clone();
            for s in steps {
                out = apply_unchecked(s, &out)?;
            }
            Ok(out)
        }
    }
}

/// Normalised 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = libm::ceil(3.0 * sigma) as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

// The convolutions accumulate `centre + Σ w·(neighbour − centre)`, which
// equals `Σ w·neighbour` for a unit-sum kernel but keeps constant regions
// bit-exact whatever the rounding of the kernel sum.

fn convolve_rows(src: &[f64], w: usize, h: usize, ch: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut out = src.to_vec();
    for y in 0..h {
        let row = &src[y * w * ch..(y + 1) * w * ch];
        let dst = &mut out[y * w * ch..(y + 1) * w * ch];
        for x in 0..w {
            for (k, &kw) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                for c in 0..ch {
                    dst[x * ch + c] += kw * (row[sx * ch + c] - row[x * ch + c]);
                }
            }
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, ch: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let stride = w * ch;
    let mut out = src.to_vec();
    for y in 0..h {
        let centre = &src[y * stride..(y + 1) * stride];
        let dst = &mut out[y * stride..(y + 1) * stride];
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
            for ((d, s), c) in dst.iter_mut().zip(&src[sy * stride..(sy + 1) * stride]).zip(centre) {
                *d += kw * (s - c);
            }
        }
    }
    out
}

/// Separable blur without the final clamp; exposed for linearity checks.
pub fn gaussian_blur_raw(img: &Image, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!("gaussian sigma must be positive, got {sigma}"));
    }
    let k = gaussian_kernel(sigma);
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let rows = convolve_rows(img.data(), w, h, ch, &k);
    Ok(convolve_cols(&rows, w, h, ch, &k))
}

/// Defocus blur: separable Gaussian, radius `ceil(3σ)`, clamp-to-edge.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let data = gaussian_blur_raw(img, sigma)?;
    Image::from_clamped(img.width(), img.height(), img.colorspace(), data)
}

/// Sparse 2D kernel: `(dx, dy, weight)` sampled as `out(x, y) = Σ w · in(x + dx, y + dy)`.
pub type SparseKernel = Vec<(i64, i64, f64)>;

/// Line kernel of `length` taps along `angle_deg` (0° = +x, 90° = up, i.e. −y).
///
/// Tap `k` sits at distance `k - length/2` along the line; taps falling
/// between pixels are spread bilinearly over their four neighbours, so
/// axis-aligned lines give exactly `length` cells of weight `1/length`.
pub fn motion_kernel(angle_deg: f64, length: usize) -> SparseKernel {
    let theta = angle_deg.to_radians();
    let snap = |v: f64| if libm::fabs(v) < 1e-12 { 0.0 } else { v };
    let (dx, dy) = (snap(libm::cos(theta)), snap(-libm::sin(theta)));
    let half = (length / 2) as f64;
    let tap = 1.0 / length as f64;
    let mut cells: Vec<(i64, i64, f64)> = Vec::new();
    let mut add = |x: i64, y: i64, w: f64| {
        if w == 0.0 {
            return;
        }
        match cells.iter_mut().find(|c| c.0 == x && c.1 == y) {
            Some(c) => c.2 += w,
            None => cells.push((x, y, w)),
        }
    };
    for k in 0..length {
        let t = k as f64 - half;
        let (px, py) = (t * dx, t * dy);
        let (x0, y0) = (libm::floor(px), libm::floor(py));
        let (fx, fy) = (px - x0, py - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        add(x0, y0, tap * (1.0 - fx) * (1.0 - fy));
        add(x0 + 1, y0, tap * fx * (1.0 - fy));
        add(x0, y0 + 1, tap * (1.0 - fx) * fy);
        add(x0 + 1, y0 + 1, tap * fx * fy);
    }
    cells.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    cells
}

fn convolve_sparse(img: &Image, kernel: &[(i64, i64, f64)]) -> Vec<f64> {
    let (w, h, ch) = (img.width() as i64, img.height() as i64, img.channels());
    let src = img.data();
    let mut out = src.to_vec();
    for y in 0..h {
        let crow = &src[(y * w) as usize * ch..((y + 1) * w) as usize * ch];
        for &(dx, dy, kw) in kernel {
            let sy = (y + dy).clamp(0, h - 1);
            let srow = &src[(sy * w) as usize * ch..((sy + 1) * w) as usize * ch];
            let drow = &mut out[(y * w) as usize * ch..((y + 1) * w) as usize * ch];
            for x in 0..w {
                let sx = (x + dx).clamp(0, w - 1) as usize;
                for c in 0..ch {
                    drow[x as usize * ch + c] += kw * (srow[sx * ch + c] - crow[x as usize * ch + c]);
                }
            }
        }
    }
    out
}

pub fn motion_blur_raw(img: &Image, angle_deg: f64, strength_px: usize) -> Result<Vec<f64>> {
    if strength_px == 0 {
        return Err(invalid!("motion blur strength must be >= 1"));
    }
    if !angle_deg.is_finite() {
        return Err(invalid!("motion blur angle must be finite"));
    }
    Ok(convolve_sparse(img, &motion_kernel(angle_deg, strength_px)))
}

/// Motion blur of `strength_px` pixels along `angle_deg`, clamp-to-edge.
pub fn motion_blur(img: &Image, angle_deg: f64, strength_px: usize) -> Result<Image> {
    let data = motion_blur_raw(img, angle_deg, strength_px)?;
    Image::from_clamped(img.width(), img.height(), img.colorspace(), data)
}

/// Per-value power law `out = in^γ`; γ < 1 brightens, γ > 1 darkens.
pub fn gamma_correct(img: &Image, gamma: f64) -> Result<Image> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid!("gamma must be positive, got {gamma}"));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map_values(|v| libm::pow(v, gamma)))
}

/// A named degradation column of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub name: String,
    pub spec: PerturbationSpec,
}

impl Degradation {
    pub fn new(name: &str, spec: PerturbationSpec) -> Self {
        Self { name: name.into(), spec }
    }
}

/// Crop sizes × degradations evaluated by the robustness sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub sizes: Vec<(usize, usize)>,
    pub degradations: Vec<Degradation>,
}

/// The seven crop sizes, largest first.
pub const DEFAULT_SIZES: [(usize, usize); 7] = [(20, 45), (8, 15), (7, 13), (6, 11), (5, 9), (4, 7), (3, 6)];

impl SweepGrid {
    /// Seven sizes × {clean, defocus σ 1.5/3, motion 10/20 px at 0°,
    /// gamma 0.5/0.25/1.5/2.5}: 63 cells.
    pub fn paper_default() -> Self {
        use PerturbationSpec::*;
        let motion = |s| Motion { angle_deg: 0.0, strength_px: s };
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            degradations: vec![
                Degradation::new("clean", PerturbationSpec::identity()),
                Degradation::new("defocus_moderate", Defocus { sigma: 1.5 }),
                Degradation::new("defocus_severe", Defocus { sigma: 3.0 }),
                Degradation::new("motion_moderate", motion(10)),
                Degradation::new("motion_severe", motion(20)),
                Degradation::new("gamma_bright_moderate", Gamma { gamma: 0.5 }),
                Degradation::new("gamma_bright_severe", Gamma { gamma: 0.25 }),
                Degradation::new("gamma_dark_moderate", Gamma { gamma: 1.5 }),
                Degradation::new("gamma_dark_severe", Gamma { gamma: 2.5 }),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.degradations.is_empty() {
            return Err(invalid!("sweep grid needs at least one size and one degradation"));
        }
        if self.sizes.iter().any(|&(w, h)| w == 0 || h == 0) {
            return Err(invalid!("sweep sizes must be positive"));
        }
        self.degradations.iter().try_for_each(|d| d.spec.validate())
    }

    pub fn cell_count(&self) -> usize {
        self.sizes.len() * self.degradations.len()
    }

    /// Every `(size, degradation)` cell as a composed spec.
    pub fn cells(&self, degrade_first: bool) -> Vec<((usize, usize), &Degradation, PerturbationSpec)> {
        let mut out = Vec::with_capacity(self.cell_count());
        for &(w, h) in &self.sizes {
            for d in &self.degradations {
                let resize = PerturbationSpec::Downscale { width: w, height: h };
                let steps = if degrade_first { vec![d.spec.clone(), resize] } else { vec![resize, d.spec.clone()] };
                out.push(((w, h), d, PerturbationSpec::Compose { steps }));
            }
        }
        out
    }
}
