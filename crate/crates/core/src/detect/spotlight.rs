use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::components::{label, Component};
use super::{Detection, Detector};
use crate::error::{invalid, Result};
use crate::imaging::{rgb_pixel_to_hsv, BoundingBox, ColorSpace, Image};

/// Thresholds of the classical spot-light detector, in working-frame pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotlightParams {
    /// Coloured lens: V and S at least these.
    pub bright_value: f64,
    pub bright_saturation: f64,
    /// White lens: V at least this, any saturation.
    pub white_value: f64,
    /// Housing: V at most this.
    pub dark_value: f64,
    /// Lens blob bbox width/height.
    pub lens_aspect: (f64, f64),
    /// Lens blob pixel count.
    pub lens_area: (u64, u64),
    /// Lens blob pixels over bbox area.
    pub lens_fill: f64,
    /// Tower height/width.
    pub tower_aspect: (f64, f64),
    pub tower_width: (u32, u32),
    pub tower_height: (u32, u32),
    /// Housing pixels over tower box area for the dark-rectangle rule.
    pub housing_fill: f64,
    /// Parts closer than this (after dilation) merge into one candidate.
    pub merge_distance: u32,
    pub score_threshold: f64,
    pub padding: u32,
}

impl Default for SpotlightParams {
    fn default() -> Self {
        Self {
            bright_value: 0.78,
            bright_saturation: 0.35,
            white_value: 0.85,
            dark_value: 0.25,
            lens_aspect: (0.5, 2.0),
            lens_area: (12, 4000),
            lens_fill: 0.5,
            tower_aspect: (1.4, 6.0),
            tower_width: (6, 120),
            tower_height: (18, 360),
            housing_fill: 0.35,
            merge_distance: 2,
            score_threshold: 0.5,
            padding: 0,
        }
    }
}

impl SpotlightParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 < a && a <= b;
        if !ordered(self.lens_aspect) || !ordered(self.tower_aspect) {
            return Err(invalid!("aspect bands must be positive and ordered"));
        }
        if self.lens_area.0 > self.lens_area.1 || self.tower_width.0 > self.tower_width.1 || self.tower_height.0 > self.tower_height.1 {
            return Err(invalid!("size bands must be ordered"));
        }
        for v in [self.bright_value, self.bright_saturation, self.white_value, self.dark_value, self.lens_fill, self.housing_fill, self.score_threshold] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid!("threshold {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Bright-blob plus dark-housing detector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpotlightDetector {
    pub params: SpotlightParams,
}

impl SpotlightDetector {
    pub fn new(params: SpotlightParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl Detector for SpotlightDetector {
    fn detect(&self, tile: &Image) -> Result<Vec<Detection>> {
        spotlight_detect(tile, &self.params)
    }
}

struct Part {
    bbox: BoundingBox,
    dark: u64,
    lens: Option<(f64, u64)>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn near(a: &BoundingBox, b: &BoundingBox, d: u32) -> bool {
    let grown = BoundingBox::new(a.x.saturating_sub(d), a.y.saturating_sub(d), a.w + 2 * d, a.h + 2 * d);
    grown.intersection(b).is_some()
}

fn x_overlaps(lens_cx: f64, b: &BoundingBox) -> bool {
    (b.x as f64..b.right() as f64).contains(&lens_cx)
}

/// Detects stack-light towers in one RGB tile; boxes are tile-local.
///
/// Bright saturated (or white) blobs that look like lenses and dark blobs
/// that look like housing are merged when they touch; a merged group is a
/// tower if its box is upright and either mostly housing or holds at least
/// two vertically aligned lenses. The score is the product of a fill term
/// (housing plus lens pixels over box area, saturating at 0.8) and an
/// alignment term (mean horizontal offset of lenses from the box centre,
/// 0.7 when no lens is lit).
pub fn spotlight_detect(tile: &Image, params: &SpotlightParams) -> Result<Vec<Detection>> {
    if tile.colorspace() != ColorSpace::Rgb {
        return Err(invalid!("detector expects an RGB tile"));
    }
    let (w, h) = (tile.width(), tile.height());
    let mut bright = Vec::with_capacity(w * h);
    let mut dark = Vec::with_capacity(w * h);
    for p in tile.data().chunks_exact(3) {
        let (_, s, v) = rgb_pixel_to_hsv(p[0], p[1], p[2]);
        bright.push((v >= params.bright_value && s >= params.bright_saturation) || v >= params.white_value);
        dark.push(v <= params.dark_value);
    }

    let lens_ok = |c: &Component| {
        let aspect = c.bbox.w as f64 / c.bbox.h as f64;
        (params.lens_aspect.0..=params.lens_aspect.1).contains(&aspect)
            && (params.lens_area.0..=params.lens_area.1).contains(&c.pixels)
            && c.fill() >= params.lens_fill
    };
    let mut parts: Vec<Part> = label(&dark, w).into_iter().map(|c| Part { bbox: c.bbox, dark: c.pixels, lens: None }).collect();
    let housings = parts.len();
    parts.extend(label(&bright, w).into_iter().filter(lens_ok).map(|c| Part { bbox: c.bbox, dark: 0, lens: Some((c.cx, c.pixels)) }));

    let d = params.merge_distance;
    let mut parent: Vec<usize> = (0..parts.len()).collect();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            let (a, b) = (&parts[i], &parts[j]);
            let joined = match (a.lens, b.lens) {
                (None, None) => near(&a.bbox, &b.bbox, d),
                (Some((cx, _)), None) => near(&a.bbox, &b.bbox, d) && x_overlaps(cx, &b.bbox),
                (None, Some((cx, _))) => near(&b.bbox, &a.bbox, d) && x_overlaps(cx, &a.bbox),
                (Some((ca, _)), Some((cb, _))) => {
                    let gap = (a.bbox.w.max(b.bbox.w)) as f64;
                    libm::fabs(ca - cb) <= 0.25 * gap && near(&a.bbox, &b.bbox, a.bbox.h.max(b.bbox.h))
                }
            };
            if joined {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut out = Vec::new();
    for root in 0..parts.len() {
        if find(&mut parent, root) != root {
            continue;
        }
        let members: Vec<usize> = (0..parts.len()).filter(|&i| find(&mut parent, i) == root).collect();
        let bbox = members.iter().skip(1).fold(parts[members[0]].bbox, |acc, &i| acc.union_box(&parts[i].bbox));
        let dark_px: u64 = members.iter().filter(|&&i| i < housings).map(|&i| parts[i].dark).sum();
        let lenses: Vec<(f64, u64)> = members.iter().filter_map(|&i| parts[i].lens).collect();

        let aspect = bbox.h as f64 / bbox.w as f64;
        if !(params.tower_aspect.0..=params.tower_aspect.1).contains(&aspect)
            || !(params.tower_width.0..=params.tower_width.1).contains(&bbox.w)
            || !(params.tower_height.0..=params.tower_height.1).contains(&bbox.h)
        {
            continue;
        }
        let area = bbox.area() as f64;
        let housing = dark_px as f64 / area;
        if housing < params.housing_fill && lenses.len() < 2 {
            continue;
        }
        let lens_px: u64 = lenses.iter().map(|l| l.1).sum();
        let shape_fit = ((dark_px + lens_px) as f64 / area / 0.8).min(1.0);
        let (cx, half) = (bbox.x as f64 + bbox.w as f64 / 2.0, bbox.w as f64 / 2.0);
        let alignment_fit = if lenses.is_empty() {
            0.7
        } else {
            1.0 - lenses.iter().map(|l| libm::fabs(l.0 - cx) / half).sum::<f64>() / lenses.len() as f64
        };
        let score = (shape_fit * alignment_fit).clamp(0.0, 1.0);
        if score < params.score_threshold {
            continue;
        }
        let p = params.padding;
        out.push(Detection { bbox: bbox.expand_clipped(p, p, p, p, w, h), score });
    }
    Ok(out)
}
