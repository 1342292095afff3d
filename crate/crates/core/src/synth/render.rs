use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FrameAnnotation, Scene, TowerSpec};
use crate::error::Result;
use crate::imaging::{clamp01, BoundingBox, ColorSpace, Image};
use crate::label::Lamp;
use crate::seed::{self, stream};

/// Bright spot painted on the backdrop (lamps, reflections, screens).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub color: [f64; 3],
}

/// Flat rectangle painted on the backdrop (dark machine panels, rails).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub color: [f64; 3],
}

/// Procedural grey backdrop: two octaves of value noise around `level`,
/// a small per-channel tint, plus painted distractors and panels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_texture")]
    pub texture: f64,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
    #[serde(default)]
    pub panels: Vec<Panel>,
}

fn default_level() -> f64 {
    0.5
}

fn default_texture() -> f64 {
    0.1
}

impl BackgroundSpec {
    pub fn plain(seed: u64) -> Self {
        Self { seed, level: default_level(), texture: default_texture(), distractors: Vec::new(), panels: Vec::new() }
    }
}

const HOUSING: [f64; 3] = [0.09, 0.09, 0.10];

/// Lamp colour at full intensity.
pub fn lamp_rgb(lamp: Lamp) -> [f64; 3] {
    match lamp {
        Lamp::Green => [0.08, 0.95, 0.15],
        Lamp::Yellow => [1.0, 0.85, 0.08],
        Lamp::Red => [0.95, 0.08, 0.06],
        Lamp::White => [0.95, 0.95, 0.92],
    }
}

fn unlit_rgb(lamp: Lamp) -> [f64; 3] {
    lamp_rgb(lamp).map(|c| 0.15 * c + 0.04)
}

/// Lens centre of lamp `i` (0 = top) in frame coordinates.
pub fn lens_center(tower: &TowerSpec, i: usize) -> (f64, f64) {
    let b = tower.position;
    let seg = b.h as f64 / tower.model.lamps().len() as f64;
    (b.x as f64 + b.w as f64 / 2.0, b.y as f64 + seg * (i as f64 + 0.5))
}

pub fn lens_radius(tower: &TowerSpec) -> f64 {
    let b = tower.position;
    let seg = b.h as f64 / tower.model.lamps().len() as f64;
    0.32 * (b.w as f64).min(seg)
}

fn fill_rect(img: &mut Image, b: &BoundingBox, color: [f64; 3]) {
    let (w, h) = (img.width(), img.height());
    let Some(b) = b.intersection(&BoundingBox::new(0, 0, w as u32, h as u32)) else {
        return;
    };
    let data = img.data_mut();
    for y in b.y as usize..b.bottom() as usize {
        for x in b.x as usize..b.right() as usize {
            let i = (y * w + x) * 3;
            data[i..i + 3].copy_from_slice(&color);
        }
    }
}

/// Anti-aliased disk, blended over whatever is underneath.
fn fill_disk(img: &mut Image, cx: f64, cy: f64, r: f64, color: [f64; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = libm::floor(cx - r - 1.0).max(0.0) as i64;
    let y0 = libm::floor(cy - r - 1.0).max(0.0) as i64;
    let x1 = (libm::ceil(cx + r + 1.0) as i64).min(w);
    let y1 = (libm::ceil(cy + r + 1.0) as i64).min(h);
    let data = img.data_mut();
    for y in y0..y1 {
        for x in x0..x1 {
            let d = libm::hypot(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let cov = clamp01(r + 0.5 - d);
            if cov > 0.0 {
                let i = (y * w + x) as usize * 3;
                for c in 0..3 {
                    data[i + c] = data[i + c] * (1.0 - cov) + color[c] * cov;
                }
            }
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

struct ValueNoise {
    cell: f64,
    nx: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: f64, rng: &mut impl Rng) -> Self {
        let nx = (width as f64 / cell) as usize + 2;
        let ny = (height as f64 / cell) as usize + 2;
        let lattice = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { cell, nx, lattice }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (gx as usize, gy as usize);
        let (fx, fy) = (smoothstep(gx - ix as f64), smoothstep(gy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.nx + i];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bot = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

pub(crate) fn render_background(width: usize, height: usize, spec: &BackgroundSpec) -> Image {
    let mut rng = seed::rng(spec.seed, stream::BACKGROUND, 0);
    let coarse = ValueNoise::new(width, height, 96.0, &mut rng);
    let fine = ValueNoise::new(width, height, 24.0, &mut rng);
    let tint: [f64; 3] = core::array::from_fn(|_| 1.0 + rng.random_range(-0.04..0.04));
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let grad = 0.05 * (y as f64 / height as f64 - 0.5);
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let level = spec.level + spec.texture * coarse.at(fx, fy) + spec.texture / 3.0 * fine.at(fx, fy) + grad;
            for t in tint {
                data.push(clamp01(level * t));
            }
        }
    }
    let mut img = Image::from_raw(width, height, ColorSpace::Rgb, data);
    for p in &spec.panels {
        fill_rect(&mut img, &p.bbox, p.color);
    }
    for d in &spec.distractors {
        fill_disk(&mut img, d.cx, d.cy, d.radius, d.color);
    }
    img
}

fn draw_tower(img: &mut Image, tower: &TowerSpec, intensities: &[f64]) {
    fill_rect(img, &tower.position, HOUSING);
    let r = lens_radius(tower);
    for (i, (&lamp, &k)) in tower.model.lamps().iter().zip(intensities).enumerate() {
        let (cx, cy) = lens_center(tower, i);
        let (lit, dark) = (lamp_rgb(lamp), unlit_rgb(lamp));
        let color = core::array::from_fn(|c| dark[c] + (lit[c] - dark[c]) * k);
        fill_disk(img, cx, cy, r, color);
    }
}

fn draw_occluder(img: &mut Image, b: &BoundingBox, color: [f64; 3]) {
    // upper body slightly lighter than lower body
    let split = b.h * 2 / 5;
    fill_rect(img, &BoundingBox::new(b.x, b.y, b.w, split), color.map(|c| clamp01(c * 1.05)));
    fill_rect(img, &BoundingBox::new(b.x, b.y + split, b.w, b.h - split), color.map(|c| c * 0.9));
}

/// Approximately Gaussian noise sample (sum of four 16-bit uniforms) of std
/// `sigma` for value index `i`, from a counter-based generator keyed by `key`.
fn noise_at(key: u64, i: usize, scale: f64) -> f64 {
    let r = seed::mix64(key ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let s = (r & 0xFFFF) + ((r >> 16) & 0xFFFF) + ((r >> 32) & 0xFFFF) + (r >> 48);
    (s as f64 - 131070.0) * scale
}

fn noise_scale(sigma: f64) -> f64 {
    sigma * libm::sqrt(3.0) / 65536.0
}

/// Renders frames of one scene, caching the static backdrop.
pub struct SceneRenderer<'a> {
    scene: &'a Scene,
    background: Image,
}

impl<'a> SceneRenderer<'a> {
    pub fn new(scene: &'a Scene) -> Result<Self> {
        scene.validate()?;
        let background = render_background(scene.width, scene.height, &scene.background);
        Ok(Self { scene, background })
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    pub fn background(&self) -> &Image {
        &self.background
    }

    /// Frame `frame` with per-pixel noise drawn from `noise_seed`; the
    /// annotation describes exactly what was drawn.
    pub fn render(&self, frame: usize, noise_seed: u64) -> Result<(Image, FrameAnnotation)> {
        let mut img = Image::from_raw(0, 0, ColorSpace::Rgb, Vec::new());
        let annotation = self.render_into(frame, noise_seed, &mut img)?;
        Ok((img, annotation))
    }

    /// Same as [`render`](Self::render) but reuses `out`'s buffer.
    pub fn render_into(&self, frame: usize, noise_seed: u64, out: &mut Image) -> Result<FrameAnnotation> {
        let annotation = self.scene.annotate(frame)?;
        let key = seed::derive(noise_seed, stream::NOISE, frame as u64);
        let scale = noise_scale(self.scene.noise_sigma);
        let bg = self.background.data();
        if out.width() != self.scene.width || out.height() != self.scene.height || out.colorspace() != ColorSpace::Rgb {
            *out = Image::from_raw(self.scene.width, self.scene.height, ColorSpace::Rgb, alloc::vec![0.0; bg.len()]);
        }
        // Noise is a pure function of the value index, so the static backdrop
        // is noised in one pass and only the drawn regions are redone.
        for (i, (o, &b)) in out.data_mut().iter_mut().zip(bg).enumerate() {
            *o = if scale > 0.0 { clamp01(b + noise_at(key, i, scale)) } else { b };
        }
        let occluders = self.scene.occluder_boxes(frame);
        let bounds = self.background.bounds();
        let dirty: Vec<BoundingBox> = self
            .scene
            .towers
            .iter()
            .map(|t| t.position)
            .chain(occluders.iter().map(|o| o.0))
            .filter_map(|b| b.intersection(&bounds))
            .collect();
        let w = self.scene.width;
        for b in &dirty {
            for y in b.y as usize..b.bottom() as usize {
                let row = (y * w + b.x as usize) * 3..(y * w + b.right() as usize) * 3;
                out.data_mut()[row.clone()].copy_from_slice(&bg[row]);
            }
        }
        for (t, tower) in self.scene.towers.iter().enumerate() {
            let state = self.scene.lamp_state(t, frame);
            draw_tower(out, tower, &state.intensities);
        }
        for (b, color) in &occluders {
            draw_occluder(out, b, *color);
        }
        if scale > 0.0 {
            let data = out.data_mut();
            for (k, b) in dirty.iter().enumerate() {
                for y in b.y as usize..b.bottom() as usize {
                    for x in b.x as usize..b.right() as usize {
                        let seen = dirty[..k].iter().any(|d| (d.x as usize..d.right() as usize).contains(&x) && (d.y as usize..d.bottom() as usize).contains(&y));
                        if seen {
                            continue;
                        }
                        for c in 0..3 {
                            let i = (y * w + x) * 3 + c;
                            data[i] = clamp01(data[i] + noise_at(key, i, scale));
                        }
                    }
                }
            }
        }
        Ok(annotation)
    }
}

/// One-shot rendering; prefer [`SceneRenderer`] for many frames of a scene.
pub fn render_frame(scene: &Scene, frame: usize, noise_seed: u64) -> Result<(Image, FrameAnnotation)> {
    SceneRenderer::new(scene)?.render(frame, noise_seed)
}
