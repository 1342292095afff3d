use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    BackgroundSpec, Distractor, LightSegment, OccluderEvent, Panel, Scene, Timeline, TowerModel, TowerSpec,
    TOWER_HEIGHT_RANGE, TOWER_WIDTH_RANGE,
};
use crate::detect::TileGrid;
use crate::error::{invalid, Error, Result};
use crate::imaging::{rgb_pixel_to_hsv, BoundingBox};
use crate::label::LightCombination;
use crate::seed::{self, stream};

/// Relative class frequencies over tower-frames (need not be normalised).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution(pub BTreeMap<LightCombination, f64>);

impl ClassDistribution {
    fn from_counts(counts: [f64; 10]) -> Self {
        Self(LightCombination::ALL.iter().copied().zip(counts).collect())
    }

    /// Near-uniform mix of the curated classification set (11037 crops).
    pub fn slcd() -> Self {
        Self::from_counts([1060.0, 1017.0, 1057.0, 1061.0, 916.0, 1114.0, 1041.0, 1042.0, 1067.0, 1662.0])
    }

    /// Skewed mix of the raw factory recording (no "other" class).
    pub fn avs() -> Self {
        Self::from_counts([
            253253.0, 29585.0, 17454.0, 198514.0, 10905.0, 60124.0, 11739.0, 21143.0, 25348.0, 0.0,
        ])
    }

    pub fn uniform() -> Self {
        Self::from_counts([1.0; 10])
    }

    /// Shares in canonical class order, summing to one.
    pub fn shares(&self) -> Result<[f64; 10]> {
        let mut out = [0.0; 10];
        for (c, &w) in &self.0 {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid!("class weight for {c} must be non-negative"));
            }
            out[c.index()] = w;
        }
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return Err(invalid!("class distribution is empty"));
        }
        Ok(out.map(|w| w / total))
    }
}

impl Default for ClassDistribution {
    fn default() -> Self {
        Self::slcd()
    }
}

/// Layout of generated scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub towers: usize,
    /// How many of the towers are the white-over-green model.
    pub bicolor_towers: usize,
    pub distractors: usize,
    pub panels: usize,
    pub noise_sigma: f64,
    /// Keep towers clear of the detector's tile seams.
    pub avoid_tile_seams: bool,
    /// Minimum gap between towers, in frame pixels.
    pub tower_gap: u32,
    /// Multiplies the tower size range (object-scale variants).
    pub tower_scale: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 2560,
            height: 1440,
            towers: 5,
            bicolor_towers: 1,
            distractors: 6,
            panels: 3,
            noise_sigma: 0.008,
            avoid_tile_seams: true,
            tower_gap: 80,
            tower_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelineConfig {
    /// Frames per scene; a new layout starts after this many frames.
    pub frames_per_scene: usize,
    pub min_segment: usize,
    pub max_segment: usize,
    pub fade_probability: f64,
    pub max_fade: usize,
    pub distribution: ClassDistribution,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        Self {
            frames_per_scene: 100,
            min_segment: 12,
            max_segment: 40,
            fade_probability: 0.5,
            max_fade: 8,
            distribution: ClassDistribution::slcd(),
        }
    }
}

fn tower_models(cfg: &SceneConfig) -> Vec<TowerModel> {
    (0..cfg.towers)
        .map(|i| if i >= cfg.towers.saturating_sub(cfg.bicolor_towers) { TowerModel::Bicolor } else { TowerModel::Tricolor })
        .collect()
}

fn eligible(model: TowerModel, c: LightCombination) -> bool {
    c == LightCombination::Other || model.supports(c)
}

/// Per-tower class shares whose average matches `target`, respecting which
/// classes each tower model can show (Sinkhorn scaling on the eligibility
/// matrix).
fn tower_quotas(models: &[TowerModel], target: &[f64; 10]) -> Vec<[f64; 10]> {
    let n = models.len() as f64;
    let mut a: Vec<[f64; 10]> = models
        .iter()
        .map(|&m| core::array::from_fn(|c| if eligible(m, LightCombination::ALL[c]) { target[c] } else { 0.0 }))
        .collect();
    for _ in 0..500 {
        for row in &mut a {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v *= 1.0 / (n * s));
            }
        }
        for c in 0..10 {
            let s: f64 = a.iter().map(|r| r[c]).sum();
            if s > 0.0 {
                a.iter_mut().for_each(|r| r[c] *= target[c] / s);
            }
        }
    }
    a.into_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 { row.map(|v| v / s) } else { row }
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
struct SlotTally {
    counts: [f64; 10],
    total: f64,
}

/// Generates successive scenes (layout + timeline) from one seed. Class
/// deficits carry across scenes so long datasets converge on the requested
/// distribution.
#[derive(Clone, Debug)]
pub struct DatasetPlan {
    scene: SceneConfig,
    timeline: TimelineConfig,
    seed: u64,
    models: Vec<TowerModel>,
    quotas: Vec<[f64; 10]>,
    tallies: Vec<SlotTally>,
    next_scene: usize,
}

impl DatasetPlan {
    pub fn new(scene: SceneConfig, timeline: TimelineConfig, seed: u64) -> Result<Self> {
        if !(scene.tower_scale > 0.0 && scene.tower_scale <= 8.0) {
            return Err(invalid!("tower scale must lie in (0, 8]"));
        }
        if scene.towers == 0 || scene.bicolor_towers > scene.towers {
            return Err(invalid!("need at least one tower and no more bicolour towers than towers"));
        }
        if timeline.frames_per_scene == 0 || timeline.min_segment == 0 || timeline.min_segment > timeline.max_segment {
            return Err(invalid!("invalid timeline segment bounds"));
        }
        if !(0.0..=1.0).contains(&timeline.fade_probability) {
            return Err(invalid!("fade probability must lie in [0, 1]"));
        }
        let shares = timeline.distribution.shares()?;
        let models = tower_models(&scene);
        let quotas = tower_quotas(&models, &shares);
        let tallies = vec![SlotTally::default(); models.len()];
        Ok(Self { scene, timeline, seed, models, quotas, tallies, next_scene: 0 })
    }

    pub fn scene_config(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn timeline_config(&self) -> &TimelineConfig {
        &self.timeline
    }

    /// Scenes covering `total_frames` frames; scene `s` covers global frames
    /// `[s·F, (s+1)·F)` with `F = frames_per_scene`.
    pub fn scenes(&mut self, total_frames: usize) -> Result<Vec<Scene>> {
        let per = self.timeline.frames_per_scene;
        let mut out = Vec::new();
        let mut done = 0;
        while done < total_frames {
            let frames = per.min(total_frames - done);
            out.push(self.next(frames)?);
            done += frames;
        }
        Ok(out)
    }

    /// The next scene with a timeline of `frames` frames.
    pub fn next(&mut self, frames: usize) -> Result<Scene> {
        if frames == 0 {
            return Err(invalid!("scene needs at least one frame"));
        }
        let index = self.next_scene as u64;
        self.next_scene += 1;
        let mut layout_rng = seed::rng(self.seed, stream::LAYOUT, index);
        let towers = layout_towers(&self.scene, &self.models, &mut layout_rng)?;
        let background = layout_background(&self.scene, &towers, seed::derive(self.seed, stream::BACKGROUND, index), &mut layout_rng)?;

        let mut rng = seed::rng(self.seed, stream::TIMELINE, index);
        let mut timeline = Timeline { frames, towers: Vec::new(), occluders: Vec::new() };
        for (slot, tower) in towers.iter().enumerate() {
            let (segments, hidden) = self.tower_timeline(slot, frames, &mut rng);
            for (start, end) in hidden {
                timeline.occluders.push(covering_occluder(&tower.position, start, end, &self.scene, &mut rng));
            }
            timeline.towers.push(segments);
        }
        let scene = Scene { width: self.scene.width, height: self.scene.height, towers, background, timeline, noise_sigma: self.scene.noise_sigma };
        scene.validate()?;
        Ok(scene)
    }

    fn tower_timeline(&mut self, slot: usize, frames: usize, rng: &mut ChaCha8Rng) -> (Vec<LightSegment>, Vec<(usize, usize)>) {
        let model = self.models[slot];
        let quota = self.quotas[slot];
        let cfg = &self.timeline;
        let tally = &mut self.tallies[slot];
        let mut segments: Vec<LightSegment> = Vec::new();
        let mut hidden = Vec::new();
        let mut lit: Option<LightCombination> = None;
        let mut prev: Option<LightCombination> = None;
        let mut f = 0;
        while f < frames {
            let len = rng.random_range(cfg.min_segment..=cfg.max_segment).min(frames - f);
            let mut w: [f64; 10] = core::array::from_fn(|c| {
                let class = LightCombination::ALL[c];
                if quota[c] <= 0.0 || prev == Some(class) {
                    0.0
                } else {
                    (quota[c] * (tally.total + len as f64) - tally.counts[c]).max(0.0)
                }
            });
            if w.iter().sum::<f64>() <= 0.0 {
                w = core::array::from_fn(|c| if prev == Some(LightCombination::ALL[c]) { 0.0 } else { quota[c] });
            }
            if w.iter().sum::<f64>() <= 0.0 {
                w = quota;
            }
            let class = LightCombination::ALL[pick_weighted(&w, rng)];
            tally.counts[class.index()] += len as f64;
            tally.total += len as f64;

            if class == LightCombination::Other {
                if lit.is_none() {
                    let options: Vec<LightCombination> =
                        LightCombination::ALL.iter().copied().filter(|&c| model.supports(c)).collect();
                    let c = options[rng.random_range(0..options.len())];
                    segments.push(LightSegment { start: f, combination: c, fade_frames: 0 });
                    lit = Some(c);
                }
                hidden.push((f, f + len));
            } else if lit != Some(class) {
                let visible_change = !segments.is_empty() && prev != Some(LightCombination::Other);
                let fade = if visible_change && len > 1 && cfg.max_fade > 0 && rng.random_bool(cfg.fade_probability) {
                    rng.random_range(1..=cfg.max_fade.min(len - 1))
                } else {
                    0
                };
                segments.push(LightSegment { start: f, combination: class, fade_frames: fade });
                lit = Some(class);
            }
            prev = Some(class);
            f += len;
        }
        (segments, hidden)
    }
}

fn pick_weighted(w: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = w.iter().sum();
    let mut r = rng.random_range(0.0..total);
    for (i, &x) in w.iter().enumerate() {
        if r < x {
            return i;
        }
        r -= x;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

fn crosses_seams(b: &BoundingBox, cfg: &SceneConfig) -> bool {
    let grid = TileGrid::default();
    let sx = grid.working_width() as f64 / cfg.width as f64;
    let sy = grid.working_height() as f64 / cfg.height as f64;
    let wb = b.scaled(sx, sy);
    let margin = 6;
    let tile = grid.tile as u32;
    let cuts = |lo: u32, hi: u32, n: usize| (1..n as u32).any(|k| lo < k * tile + margin && k * tile < hi + margin);
    cuts(wb.x, wb.right(), grid.cols) || cuts(wb.y, wb.bottom(), grid.rows)
}

fn gap_box(b: &BoundingBox, gap: u32) -> BoundingBox {
    BoundingBox::new(b.x.saturating_sub(gap), b.y.saturating_sub(gap), b.w + 2 * gap, b.h + 2 * gap)
}

fn layout_towers(cfg: &SceneConfig, models: &[TowerModel], rng: &mut ChaCha8Rng) -> Result<Vec<TowerSpec>> {
    let border = 40u32;
    let mut towers: Vec<TowerSpec> = Vec::with_capacity(models.len());
    for (i, &model) in models.iter().enumerate() {
        let mut placed = None;
        for _ in 0..20_000 {
            let scaled = |v: u32| (libm::round(v as f64 * cfg.tower_scale) as u32).max(1);
            let w = scaled(rng.random_range(TOWER_WIDTH_RANGE.0..=TOWER_WIDTH_RANGE.1));
            let h = scaled(rng.random_range(TOWER_HEIGHT_RANGE.0..=TOWER_HEIGHT_RANGE.1));
            let (fw, fh) = (cfg.width as u32, cfg.height as u32);
            if fw < w + 2 * border || fh < h + 2 * border {
                return Err(invalid!("frame {}x{} too small for towers", cfg.width, cfg.height));
            }
            let b = BoundingBox::new(rng.random_range(border..=fw - w - border), rng.random_range(border..=fh - h - border), w, h);
            if cfg.avoid_tile_seams && crosses_seams(&b, cfg) {
                continue;
            }
            let g = gap_box(&b, cfg.tower_gap);
            if towers.iter().any(|t| t.position.intersection(&g).is_some()) {
                continue;
            }
            placed = Some(b);
            break;
        }
        let position = placed.ok_or_else(|| Error::Placement(format!("could not place tower {i}")))?;
        towers.push(TowerSpec { id: format!("m{i}"), model, position });
    }
    Ok(towers)
}

pub(crate) fn random_bright_color(rng: &mut impl Rng) -> [f64; 3] {
    if rng.random_bool(0.2) {
        let v = rng.random_range(0.9..1.0);
        return [v, v, v * 0.97];
    }
    let hue: f64 = rng.random_range(0.0..1.0);
    let s = rng.random_range(0.6..0.95);
    let v = rng.random_range(0.88..1.0);
    hsv(hue, s, v)
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let rgb = crate::imaging::hsv_to_rgb(&crate::imaging::Image::from_raw(1, 1, crate::imaging::ColorSpace::Hsv, vec![h, s, v]))
        .expect("hsv tagged");
    [rgb.data()[0], rgb.data()[1], rgb.data()[2]]
}

/// Mid-tone clothing colour: never dark enough to pass for a tower housing
/// nor bright enough to pass for a lamp.
pub(crate) fn occluder_color(rng: &mut impl Rng) -> [f64; 3] {
    let c = hsv(rng.random_range(0.0..1.0), rng.random_range(0.0..0.4), rng.random_range(0.45..0.7));
    debug_assert!(rgb_pixel_to_hsv(c[0], c[1], c[2]).2 >= 0.44);
    c
}

fn layout_background(cfg: &SceneConfig, towers: &[TowerSpec], seed: u64, rng: &mut ChaCha8Rng) -> Result<BackgroundSpec> {
    let mut bg = BackgroundSpec::plain(seed);
    let (fw, fh) = (cfg.width as f64, cfg.height as f64);
    let clear_of_towers = |b: &BoundingBox, gap: u32| towers.iter().all(|t| gap_box(&t.position, gap).intersection(b).is_none());
    let mut taken: Vec<BoundingBox> = Vec::new();
    for _ in 0..cfg.distractors {
        for _ in 0..2_000 {
            let r = rng.random_range(5.0..16.0);
            let (cx, cy) = (rng.random_range(r + 2.0..fw - r - 2.0), rng.random_range(r + 2.0..fh - r - 2.0));
            let b = BoundingBox::new((cx - r) as u32, (cy - r) as u32, (2.0 * r) as u32 + 2, (2.0 * r) as u32 + 2);
            if !clear_of_towers(&b, 60) || taken.iter().any(|t| gap_box(t, 40).intersection(&b).is_some()) {
                continue;
            }
            taken.push(b);
            bg.distractors.push(Distractor { cx, cy, radius: r, color: random_bright_color(rng) });
            break;
        }
    }
    for _ in 0..cfg.panels {
        for _ in 0..2_000 {
            let w = rng.random_range(150u32..400).min(cfg.width as u32 / 2);
            let h = rng.random_range(16u32..50).min(w / 3);
            if cfg.width as u32 <= w + 2 || cfg.height as u32 <= h + 2 {
                break;
            }
            let b = BoundingBox::new(rng.random_range(1..cfg.width as u32 - w - 1), rng.random_range(1..cfg.height as u32 - h - 1), w, h);
            if !clear_of_towers(&b, 80) || taken.iter().any(|t| gap_box(t, 40).intersection(&b).is_some()) {
                continue;
            }
            taken.push(b);
            let g = rng.random_range(0.08..0.2);
            bg.panels.push(Panel { bbox: b, color: [g, g, g * 1.05] });
            break;
        }
    }
    Ok(bg)
}

/// A passer-by fully covering `tower` over `[start, end)`.
pub(crate) fn covering_occluder(tower: &BoundingBox, start: usize, end: usize, cfg: &SceneConfig, rng: &mut impl Rng) -> OccluderEvent {
    let mut cover = || {
        let m: [u32; 4] = core::array::from_fn(|_| rng.random_range(5..=25));
        tower.expand_clipped(m[0], m[1], m[2], m[3], cfg.width, cfg.height)
    };
    let from = cover();
    let to = cover();
    OccluderEvent { start, end, from, to, color: occluder_color(rng) }
}
