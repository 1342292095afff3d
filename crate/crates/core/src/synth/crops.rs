use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::{covering_occluder, random_bright_color, ClassDistribution, SceneConfig};
use super::{BackgroundSpec, Distractor, LightSegment, Scene, SceneRenderer, Timeline, TowerModel, TowerSpec};
use super::{TOWER_HEIGHT_RANGE, TOWER_WIDTH_RANGE};
use crate::error::{invalid, Error, Result};
use crate::imaging::{iou, BoundingBox, Image};
use crate::label::LightCombination;
use crate::seed::{self, stream};

/// Largest random context margin added on each side of a light crop.
pub const MARGIN_MAX: u32 = 20;

/// `b` grown by an independent uniform integer in `[0, 20]` per side (drawn
/// from `margin_seed`), clipped to the frame.
pub fn light_crop_box(frame_w: usize, frame_h: usize, b: BoundingBox, margin_seed: u64) -> BoundingBox {
    let mut rng = seed::rng(margin_seed, stream::MARGIN, 0);
    let m: [u32; 4] = core::array::from_fn(|_| rng.random_range(0..=MARGIN_MAX));
    b.expand_clipped(m[0], m[1], m[2], m[3], frame_w, frame_h)
}

/// Crops a light with random background context.
pub fn crop_light(frame: &Image, b: BoundingBox, margin_seed: u64) -> Result<Image> {
    if !b.fits_within(frame.width(), frame.height()) {
        return Err(invalid!("light box {b:?} outside frame"));
    }
    frame.crop(light_crop_box(frame.width(), frame.height(), b, margin_seed))
}

/// Random scene crop for the "other objects" class: uniform position, size
/// uniform in the given ranges, IoU < 0.2 with every tower box.
pub fn random_other_crop(
    frame: &Image,
    towers: &[BoundingBox],
    width_range: (u32, u32),
    height_range: (u32, u32),
    seed: u64,
) -> Result<(Image, BoundingBox)> {
    let (fw, fh) = (frame.width() as u32, frame.height() as u32);
    if width_range.0 == 0 || height_range.0 == 0 || width_range.0 > width_range.1 || height_range.0 > height_range.1 {
        return Err(invalid!("invalid crop size range"));
    }
    if width_range.1 > fw || height_range.1 > fh {
        return Err(invalid!("requested crop larger than the {fw}x{fh} frame"));
    }
    let mut rng = seed::rng(seed, stream::OTHER_CROP, 0);
    for _ in 0..1_000 {
        let w = rng.random_range(width_range.0..=width_range.1);
        let h = rng.random_range(height_range.0..=height_range.1);
        let b = BoundingBox::new(rng.random_range(0..=fw - w), rng.random_range(0..=fh - h), w, h);
        if towers.iter().all(|t| iou(&b, t) < 0.2) {
            return Ok((frame.crop(b)?, b));
        }
    }
    Err(Error::Placement(format!("no crop with IoU < 0.2 after 1000 tries")))
}

/// A classifier sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCrop {
    /// Stable identity used to check split disjointness.
    pub id: u64,
    pub label: LightCombination,
    pub image: Image,
}

/// Parameters of the in-memory classification set: each sample is a small
/// scene rendered with the frame renderer and cropped with random context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSetConfig {
    pub distribution: ClassDistribution,
    /// Share of lamp samples caught in a non-ambiguous part of a fade.
    pub fade_fraction: f64,
    /// Share of "other" samples that are plain backdrop crops rather than
    /// occluded towers.
    pub backdrop_other_fraction: f64,
    pub noise_sigma: f64,
}

impl Default for CropSetConfig {
    fn default() -> Self {
        Self { distribution: ClassDistribution::slcd(), fade_fraction: 0.1, backdrop_other_fraction: 0.5, noise_sigma: 0.008 }
    }
}

impl CropSetConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.shares()?;
        for (name, v) in [("fade_fraction", self.fade_fraction), ("backdrop_other_fraction", self.backdrop_other_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0..=0.01).contains(&self.noise_sigma) {
            return Err(invalid!("noise sigma must lie in [0, 0.01], got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// Exact per-class counts for `n` samples (largest remainder rounding),
/// returned as a shuffled label list.
fn label_plan(shares: &[f64; 10], n: usize, rng: &mut impl Rng) -> Vec<LightCombination> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| libm::floor(*r) as usize).collect();
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| (raw[b] - counts[b] as f64).total_cmp(&(raw[a] - counts[a] as f64)).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    let mut labels: Vec<LightCombination> =
        counts.iter().enumerate().flat_map(|(i, &k)| core::iter::repeat_n(LightCombination::ALL[i], k)).collect();
    labels.shuffle(rng);
    labels
}

/// Labels of the `n` samples [`sample_crops`] would render, without
/// rendering them.
pub fn crop_labels(cfg: &CropSetConfig, n: usize, seed: u64) -> Result<Vec<LightCombination>> {
    cfg.validate()?;
    let shares = cfg.distribution.shares()?;
    Ok(label_plan(&shares, n, &mut seed::rng(seed, stream::CROP_SET, u64::MAX)))
}

/// Renders `n` labelled light crops; sample `i` depends only on `(seed, i)`
/// and the label plan.
pub fn sample_crops(cfg: &CropSetConfig, n: usize, seed: u64) -> Result<Vec<LabeledCrop>> {
    let all: Vec<usize> = (0..n).collect();
    sample_crops_at(cfg, n, seed, &all)
}

/// The samples of `sample_crops(cfg, n, seed)` at `indices`, rendered alone.
pub fn sample_crops_at(cfg: &CropSetConfig, n: usize, seed: u64, indices: &[usize]) -> Result<Vec<LabeledCrop>> {
    let labels = crop_labels(cfg, n, seed)?;
    indices
        .iter()
        .map(|&i| {
            let label = *labels.get(i).ok_or_else(|| invalid!("sample index {i} out of range for {n} samples"))?;
            let image = sample_one(cfg, label, seed::derive(seed, stream::CROP_SET, i as u64))?;
            Ok(LabeledCrop { id: i as u64, label, image })
        })
        .collect()
}

fn sample_one(cfg: &CropSetConfig, label: LightCombination, sample_seed: u64) -> Result<Image> {
    let mut rng = seed::rng(sample_seed, stream::CROP_SET, 0);
    let w = rng.random_range(TOWER_WIDTH_RANGE.0..=TOWER_WIDTH_RANGE.1);
    let h = rng.random_range(TOWER_HEIGHT_RANGE.0..=TOWER_HEIGHT_RANGE.1);
    let pad = 60u32;
    let (fw, fh) = ((w + 2 * pad) as usize, (h + 2 * pad) as usize);
    let tower_box = BoundingBox::new(pad, pad, w, h);
    let mut background = BackgroundSpec::plain(seed::derive(sample_seed, stream::BACKGROUND, 0));
    background.level = rng.random_range(0.45..0.55);

    let backdrop_only = label == LightCombination::Other && rng.random_bool(cfg.backdrop_other_fraction);
    if backdrop_only {
        // a bright spot somewhere in the middle, like a lamp that is not a stack light
        if rng.random_bool(0.7) {
            let r = rng.random_range(5.0..14.0);
            background.distractors.push(Distractor {
                cx: rng.random_range(pad as f64..(pad + w) as f64),
                cy: rng.random_range(pad as f64..(pad + h) as f64),
                radius: r,
                color: random_bright_color(&mut rng),
            });
        }
        let scene = Scene {
            width: fw,
            height: fh,
            towers: vec![],
            background,
            timeline: Timeline { frames: 1, towers: vec![], occluders: vec![] },
            noise_sigma: cfg.noise_sigma,
        };
        let (frame, _) = SceneRenderer::new(&scene)?.render(0, sample_seed)?;
        let cw = (w + rng.random_range(0..=2 * MARGIN_MAX)).min(fw as u32);
        let ch = (h + rng.random_range(0..=2 * MARGIN_MAX)).min(fh as u32);
        let (img, _) = random_other_crop(&frame, &[], (cw, cw), (ch, ch), sample_seed)?;
        return Ok(img);
    }

    let model = match label {
        LightCombination::GreenWhite => TowerModel::Bicolor,
        LightCombination::Green | LightCombination::Off | LightCombination::Other => {
            if rng.random_bool(0.3) {
                TowerModel::Bicolor
            } else {
                TowerModel::Tricolor
            }
        }
        _ => TowerModel::Tricolor,
    };
    let options: Vec<LightCombination> = LightCombination::ALL.iter().copied().filter(|&c| model.supports(c)).collect();
    let shown = if label == LightCombination::Other { options[rng.random_range(0..options.len())] } else { label };

    // optionally catch the lamp near the end or start of a fade
    let fade_frames = 20;
    let (segments, frame_index) = if rng.random_bool(cfg.fade_fraction) {
        let other: Vec<LightCombination> = options.iter().copied().filter(|&c| c != shown).collect();
        let prev = other[rng.random_range(0..other.len())];
        if rng.random_bool(0.5) {
            // label is the new state, phase in [0.75, 0.95]
            let k = rng.random_range(15..=19);
            (vec![seg(0, prev, 0), seg(1, shown, fade_frames)], 1 + k)
        } else {
            // label is still the old state, phase in [0.05, 0.25]
            let next = prev;
            let k = rng.random_range(1..=5);
            (vec![seg(0, shown, 0), seg(1, next, fade_frames)], 1 + k)
        }
    } else {
        (vec![seg(0, shown, 0)], 0)
    };
    let tower = TowerSpec { id: "t".into(), model, position: tower_box };
    let mut occluders = vec![];
    if label == LightCombination::Other {
        let cfg_frame = SceneConfig { width: fw, height: fh, ..SceneConfig::default() };
        occluders.push(covering_occluder(&tower_box, 0, frame_index + 1, &cfg_frame, &mut rng));
    }
    let scene = Scene {
        width: fw,
        height: fh,
        towers: vec![tower],
        background,
        timeline: Timeline { frames: fade_frames + 2, towers: vec![segments], occluders },
        noise_sigma: cfg.noise_sigma,
    };
    let (frame, annotation) = SceneRenderer::new(&scene)?.render(frame_index, sample_seed)?;
    debug_assert_eq!(annotation.towers[0].label, label);
    crop_light(&frame, tower_box, sample_seed)
}

fn seg(start: usize, combination: LightCombination, fade_frames: usize) -> LightSegment {
    LightSegment { start, combination, fade_frames }
}
