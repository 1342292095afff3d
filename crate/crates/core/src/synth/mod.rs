//! Synthetic ground truth: stack-light towers on a factory-like backdrop,
//! scripted lamp timelines with fades, passing occluders, and exact
//! per-frame annotations.

mod crops;
mod generate;
mod render;

pub use crops::{crop_labels, crop_light, light_crop_box, random_other_crop, sample_crops, sample_crops_at, CropSetConfig, LabeledCrop, MARGIN_MAX};
pub use generate::{ClassDistribution, DatasetPlan, SceneConfig, TimelineConfig};
pub use render::{lamp_rgb, lens_center, lens_radius, render_frame, BackgroundSpec, Distractor, Panel, SceneRenderer};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::BoundingBox;
use crate::label::{Lamp, LightCombination};

/// Lamp arrangement of a tower, listed top to bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TowerModel {
    /// Red over yellow over green.
    Tricolor,
    /// White over green.
    Bicolor,
}

impl TowerModel {
    pub fn lamps(self) -> &'static [Lamp] {
        match self {
            TowerModel::Tricolor => &[Lamp::Red, Lamp::Yellow, Lamp::Green],
            TowerModel::Bicolor => &[Lamp::White, Lamp::Green],
        }
    }

    /// Whether the tower can physically show `c` (Other never is a lamp state).
    pub fn supports(self, c: LightCombination) -> bool {
        if c == LightCombination::Other {
            return false;
        }
        [Lamp::Green, Lamp::Yellow, Lamp::Red, Lamp::White]
            .iter()
            .all(|&l| !c.contains(l) || self.lamps().contains(&l))
    }
}

/// Smallest and largest tower crops at base scale.
pub const TOWER_WIDTH_RANGE: (u32, u32) = (25, 57);
pub const TOWER_HEIGHT_RANGE: (u32, u32) = (86, 123);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub id: String,
    pub model: TowerModel,
    pub position: BoundingBox,
}

/// From `start` onwards the tower shows `combination`, cross-fading from the
/// previous combination over `fade_frames` frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSegment {
    pub start: usize,
    pub combination: LightCombination,
    #[serde(default)]
    pub fade_frames: usize,
}

/// An opaque occluder (a passer-by) active on `[start, end)`, moving
/// linearly from `from` to `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccluderEvent {
    pub start: usize,
    pub end: usize,
    pub from: BoundingBox,
    pub to: BoundingBox,
    pub color: [f64; 3],
}

impl OccluderEvent {
    pub fn active(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }

    pub fn box_at(&self, frame: usize) -> BoundingBox {
        let span = self.end.saturating_sub(self.start + 1);
        let t = if span == 0 { 0.0 } else { (frame.saturating_sub(self.start)) as f64 / span as f64 };
        let lerp = |a: u32, b: u32| libm::round(a as f64 + (b as f64 - a as f64) * t) as u32;
        BoundingBox::new(
            lerp(self.from.x, self.to.x),
            lerp(self.from.y, self.to.y),
            lerp(self.from.w, self.to.w),
            lerp(self.from.h, self.to.h),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub frames: usize,
    /// One segment list per tower, in tower order.
    pub towers: Vec<Vec<LightSegment>>,
    #[serde(default)]
    pub occluders: Vec<OccluderEvent>,
}

/// Ground truth for one tower in one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerAnnotation {
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: LightCombination,
    /// 0 = previous combination, 1 = fully in the current one.
    pub fade: f64,
    /// Any part of the tower is hidden by an occluder.
    #[serde(default)]
    pub occluded: bool,
    /// Mid-fade or partially occluded; excluded from classifier data by default.
    #[serde(default)]
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_index: usize,
    pub towers: Vec<TowerAnnotation>,
}

/// One JSONL manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub frame: String,
    #[serde(default)]
    pub index: usize,
    pub towers: Vec<TowerAnnotation>,
}

/// Fade phases strictly inside this band are flagged ambiguous.
pub const AMBIGUOUS_FADE: (f64, f64) = (0.25, 0.75);

/// Lamp intensities of one tower at one frame, top to bottom, in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LampState {
    pub intensities: Vec<f64>,
    pub label: LightCombination,
    pub fade: f64,
}

/// A renderable scene: frame geometry, towers, backdrop and timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub towers: Vec<TowerSpec>,
    pub background: BackgroundSpec,
    pub timeline: Timeline,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
}

fn default_noise() -> f64 {
    0.008
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid!("scene dimensions must be positive"));
        }
        if !(0.0..=0.01).contains(&self.noise_sigma) {
            return Err(invalid!("noise sigma must lie in [0, 0.01], got {}", self.noise_sigma));
        }
        if self.timeline.towers.len() != self.towers.len() {
            return Err(invalid!(
                "timeline lists {} towers, scene has {}",
                self.timeline.towers.len(),
                self.towers.len()
            ));
        }
        for (tower, segments) in self.towers.iter().zip(&self.timeline.towers) {
            let b = tower.position;
            if b.w == 0 || b.h == 0 || !b.fits_within(self.width, self.height) {
                return Err(invalid!("tower {} box {b:?} outside frame", tower.id));
            }
            if b.h < tower.model.lamps().len() as u32 * 4 {
                return Err(invalid!("tower {} too short for its lamps", tower.id));
            }
            if segments.is_empty() || segments[0].start != 0 {
                return Err(invalid!("tower {} timeline must start at frame 0", tower.id));
            }
            for (i, s) in segments.iter().enumerate() {
                if !tower.model.supports(s.combination) {
                    return Err(invalid!("tower {} ({:?}) cannot show {}", tower.id, tower.model, s.combination));
                }
                let end = segments.get(i + 1).map_or(self.timeline.frames.max(s.start + 1), |n| n.start);
                if end <= s.start {
                    return Err(invalid!("tower {} segments overlap at frame {}", tower.id, s.start));
                }
                if s.fade_frames > 0 && s.fade_frames >= end - s.start {
                    return Err(invalid!("tower {} fade at frame {} is not shorter than its segment", tower.id, s.start));
                }
            }
        }
        for o in &self.timeline.occluders {
            if o.start >= o.end {
                return Err(invalid!("occluder span [{}, {}) is empty", o.start, o.end));
            }
            if o.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(invalid!("occluder colour outside [0, 1]"));
            }
        }
        Ok(())
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.timeline.frames {
            return Err(invalid!("frame {frame} outside timeline of {} frames", self.timeline.frames));
        }
        Ok(())
    }

    /// Lamp intensities and the label they imply, before occlusion.
    pub fn lamp_state(&self, tower: usize, frame: usize) -> LampState {
        let spec = &self.towers[tower];
        let segments = &self.timeline.towers[tower];
        let i = segments.iter().rposition(|s| s.start <= frame).unwrap_or(0);
        let cur = segments[i];
        let prev = if i > 0 { segments[i - 1].combination } else { cur.combination };
        let fade = if i == 0 || cur.fade_frames == 0 {
            1.0
        } else {
            ((frame - cur.start) as f64 / cur.fade_frames as f64).min(1.0)
        };
        let intensities = spec
            .model
            .lamps()
            .iter()
            .map(|&l| {
                let on = |c: LightCombination| if c.contains(l) { 1.0 } else { 0.0 };
                on(prev) * (1.0 - fade) + on(cur.combination) * fade
            })
            .collect();
        let label = if fade >= 0.5 { cur.combination } else { prev };
        LampState { intensities, label, fade }
    }

    pub fn occluder_boxes(&self, frame: usize) -> Vec<(BoundingBox, [f64; 3])> {
        self.timeline
            .occluders
            .iter()
            .filter(|o| o.active(frame))
            .map(|o| (o.box_at(frame), o.color))
            .collect()
    }

    /// Exact annotation of `frame` without rendering it.
    pub fn annotate(&self, frame: usize) -> Result<FrameAnnotation> {
        self.check_frame(frame)?;
        let occluders = self.occluder_boxes(frame);
        let towers = self
            .towers
            .iter()
            .enumerate()
            .map(|(t, spec)| {
                let state = self.lamp_state(t, frame);
                let covered = covered_fraction(&spec.position, occluders.iter().map(|o| &o.0));
                let mut ambiguous = state.fade > AMBIGUOUS_FADE.0 && state.fade < AMBIGUOUS_FADE.1;
                let label = if covered >= 0.5 {
                    LightCombination::Other
                } else {
                    if covered > 0.0 {
                        ambiguous = true;
                    }
                    state.label
                };
                TowerAnnotation {
                    id: spec.id.clone(),
                    bbox: spec.position,
                    label,
                    fade: state.fade,
                    occluded: covered > 0.0,
                    ambiguous,
                }
            })
            .collect();
        Ok(FrameAnnotation { frame_index: frame, towers })
    }
}

/// Fraction of `target`'s pixels covered by the union of `boxes`.
fn covered_fraction<'a>(target: &BoundingBox, boxes: impl Iterator<Item = &'a BoundingBox>) -> f64 {
    let clipped: Vec<BoundingBox> = boxes.filter_map(|b| b.intersection(target)).collect();
    match clipped.len() {
        0 => 0.0,
        1 => clipped[0].area() as f64 / target.area() as f64,
        _ => {
            let mut covered = 0u64;
            for y in target.y..target.bottom() {
                for x in target.x..target.right() {
                    if clipped.iter().any(|b| (b.x..b.right()).contains(&x) && (b.y..b.bottom()).contains(&y)) {
                        covered += 1;
                    }
                }
            }
            covered as f64 / target.area() as f64
        }
    }
}

#[cfg(test)]
mod tests;
