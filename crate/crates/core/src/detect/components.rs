use alloc::vec;
use alloc::vec::Vec;

use crate::imaging::BoundingBox;

/// One 8-connected blob of a binary mask.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Component {
    pub bbox: BoundingBox,
    pub pixels: u64,
    pub cx: f64,
    pub cy: f64,
}

impl Component {
    pub fn fill(&self) -> f64 {
        self.pixels as f64 / self.bbox.area() as f64
    }
}

/// Labels the 8-connected components of `mask` (row-major, `width` wide),
/// ordered by first pixel in scan order.
pub(crate) fn label(mask: &[bool], width: usize) -> Vec<Component> {
    if width == 0 {
        return Vec::new();
    }
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut n, mut sx, mut sy) = (0u64, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            n += 1;
            sx += x as f64;
            sy += y as f64;
            for ny in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    let j = ny * width + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(Component {
            bbox: BoundingBox::from_corners(x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1),
            pixels: n,
            cx: sx / n as f64 + 0.5,
            cy: sy / n as f64 + 0.5,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_join() {
        let mask = [true, false, false, false, true, false, false, false, false];
        let c = label(&mask, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, BoundingBox::new(0, 0, 2, 2));
        assert_eq!(c[0].pixels, 2);
    }

    #[test]
    fn separate_blobs() {
        #[rustfmt::skip]
        let mask = [
            true, true, false, false,
            true, true, false, true,
            false, false, false, true,
        ];
        let c = label(&mask, 4);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].bbox, BoundingBox::new(0, 0, 2, 2));
        assert_eq!(c[0].fill(), 1.0);
        assert_eq!(c[1].bbox, BoundingBox::new(3, 1, 1, 2));
        assert_eq!((c[1].cx, c[1].cy), (3.5, 2.0));
    }

    #[test]
    fn empty_mask() {
        assert!(label(&[false; 12], 4).is_empty());
        assert!(label(&[], 0).is_empty());
    }
}
