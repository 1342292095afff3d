//! Tower detection: working-frame resize, 3×2 tiling, per-tile detector,
//! tile-to-frame mapping and non-maximal suppression.

mod components;
mod spotlight;

pub use spotlight::{spotlight_detect, SpotlightDetector, SpotlightParams};

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{iou, resize_bicubic, BoundingBox, ColorSpace, Image, Resampler};

/// Overlap above which the lower-scored of two detections is dropped.
pub const NMS_IOU: f64 = 0.5;

/// Fixed partition of the working frame into square tiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub cols: usize,
    pub rows: usize,
    pub tile: usize,
}

impl Default for TileGrid {
    fn default() -> Self {
        Self { cols: 3, rows: 2, tile: 416 }
    }
}

impl TileGrid {
    pub fn working_width(&self) -> usize {
        self.cols * self.tile
    }

    pub fn working_height(&self) -> usize {
        self.rows * self.tile
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tile `index` (row-major) as a box in working coordinates.
    pub fn tile_box(&self, index: usize) -> BoundingBox {
        let (r, c) = (index / self.cols, index % self.cols);
        let t = self.tile as u32;
        BoundingBox::new(c as u32 * t, r as u32 * t, t, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// A per-tile detector. Boxes come back in tile-local coordinates and the
/// output must depend only on the tile contents.
pub trait Detector {
    fn detect(&self, tile: &Image) -> Result<Vec<Detection>>;
}

/// Resizes `frame` to the working size and cuts it into row-major tiles.
pub fn preprocess(frame: &Image, grid: &TileGrid) -> Result<(Image, Vec<Image>)> {
    if frame.colorspace() != ColorSpace::Rgb {
        return Err(invalid!("detection input must be RGB"));
    }
    let working = resize_bicubic(frame, grid.working_width(), grid.working_height())?;
    let tiles = (0..grid.len()).map(|i| working.crop(grid.tile_box(i))).collect::<Result<Vec<_>>>()?;
    Ok((working, tiles))
}

/// Inverse of the tiling step.
pub fn stitch(tiles: &[Image], grid: &TileGrid) -> Result<Image> {
    if tiles.len() != grid.len() {
        return Err(invalid!("expected {} tiles, got {}", grid.len(), tiles.len()));
    }
    let cs = tiles.first().map_or(ColorSpace::Rgb, |t| t.colorspace());
    let mut out = Image::filled(grid.working_width(), grid.working_height(), cs, &alloc::vec![0.0; cs.channels()])?;
    for (i, t) in tiles.iter().enumerate() {
        if t.width() != grid.tile || t.height() != grid.tile || t.colorspace() != cs {
            return Err(invalid!("tile {i} has the wrong shape"));
        }
        let b = grid.tile_box(i);
        out.blit(t, b.x as usize, b.y as usize)?;
    }
    Ok(out)
}

/// Shifts per-tile detections (row-major tile order) into working-frame
/// coordinates.
pub fn to_frame_coords(per_tile: &[Vec<Detection>], grid: &TileGrid) -> Result<Vec<Detection>> {
    if per_tile.len() != grid.len() {
        return Err(invalid!("expected {} tile lists, got {}", grid.len(), per_tile.len()));
    }
    Ok(per_tile
        .iter()
        .enumerate()
        .flat_map(|(i, dets)| {
            let origin = grid.tile_box(i);
            dets.iter().map(move |d| Detection { bbox: d.bbox.translate(origin.x, origin.y), score: d.score })
        })
        .collect())
}

fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h).cmp(&(b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h)))
}

/// Greedy non-maximal suppression: by descending score (ties: smaller
/// `(x, y, w, h)` first), keep a box unless it overlaps a kept box with
/// IoU > 0.5.
pub fn nms(dets: &[Detection]) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(rank);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= NMS_IOU) {
            kept.push(d);
        }
    }
    kept
}

/// Full detection pass; boxes are in working-frame coordinates.
pub fn detect_frame(frame: &Image, detector: &dyn Detector) -> Result<Vec<Detection>> {
    FramePipeline::new(detector).detect(frame)
}

/// [`detect_frame`] for a stream of equally sized frames, reusing the
/// resampler and working-frame buffer.
pub struct FramePipeline<'a> {
    detector: &'a dyn Detector,
    grid: TileGrid,
    resampler: Option<(usize, usize, Resampler)>,
    working: Image,
}

impl<'a> FramePipeline<'a> {
    pub fn new(detector: &'a dyn Detector) -> Self {
        Self { detector, grid: TileGrid::default(), resampler: None, working: Image::from_raw(0, 0, ColorSpace::Rgb, Vec::new()) }
    }

    /// The working frame of the last call.
    pub fn working(&self) -> &Image {
        &self.working
    }

    pub fn detect(&mut self, frame: &Image) -> Result<Vec<Detection>> {
        if frame.colorspace() != ColorSpace::Rgb {
            return Err(invalid!("detection input must be RGB"));
        }
        let size = (frame.width(), frame.height());
        let grid = self.grid;
        let r = match &mut self.resampler {
            Some((w, h, r)) if (*w, *h) == size => r,
            slot => {
                let r = Resampler::new(size.0, size.1, grid.working_width(), grid.working_height())?;
                &mut slot.insert((size.0, size.1, r)).2
            }
        };
        r.resample_into(frame, &mut self.working)?;
        let per_tile = (0..grid.len())
            .map(|i| self.detector.detect(&self.working.crop(grid.tile_box(i))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(nms(&to_frame_coords(&per_tile, &grid)?))
    }
}

/// Maps a working-frame box back onto a `frame_w × frame_h` frame.
pub fn working_to_frame(b: &BoundingBox, frame_w: usize, frame_h: usize) -> BoundingBox {
    let grid = TileGrid::default();
    b.scaled(frame_w as f64 / grid.working_width() as f64, frame_h as f64 / grid.working_height() as f64)
}

/// Maps a frame box into working-frame coordinates.
pub fn frame_to_working(b: &BoundingBox, frame_w: usize, frame_h: usize) -> BoundingBox {
    let grid = TileGrid::default();
    b.scaled(grid.working_width() as f64 / frame_w as f64, grid.working_height() as f64 / frame_h as f64)
}
