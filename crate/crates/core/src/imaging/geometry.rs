use serde::{Deserialize, Serialize};

/// Axis-aligned integer box: left, top, width, height in pixels.
///
/// Serialises as the array `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl From<[u32; 4]> for BoundingBox {
    fn from(a: [u32; 4]) -> Self {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BoundingBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Box spanning `[x0, x1) × [y0, y1)`; empty spans give a zero-sized box.
    pub fn from_corners(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.right() as usize <= width && self.bottom() as usize <= height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BoundingBox::from_corners(x0, y0, x1, y1))
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        self.intersection(other).map_or(0, |b| b.area())
    }

    pub fn union_box(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }

    pub fn translate(&self, dx: u32, dy: u32) -> BoundingBox {
        BoundingBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Grows each side by the given amounts, clipped to `[0, width) × [0, height)`.
    pub fn expand_clipped(&self, left: u32, top: u32, right: u32, bottom: u32, width: usize, height: usize) -> BoundingBox {
        let x0 = self.x.saturating_sub(left);
        let y0 = self.y.saturating_sub(top);
        let x1 = (self.right() + right).min(width as u32);
        let y1 = (self.bottom() + bottom).min(height as u32);
        BoundingBox::from_corners(x0, y0, x1, y1)
    }

    /// Maps box edges through an axis scale, rounding each edge to the
    /// nearest pixel and keeping at least one pixel per axis.
    pub fn scaled(&self, sx: f64, sy: f64) -> BoundingBox {
        let x0 = libm::round(self.x as f64 * sx).max(0.0) as u32;
        let y0 = libm::round(self.y as f64 * sy).max(0.0) as u32;
        let x1 = (libm::round(self.right() as f64 * sx) as u32).max(x0 + 1);
        let y1 = (libm::round(self.bottom() as f64 * sy) as u32).max(y0 + 1);
        BoundingBox::from_corners(x0, y0, x1, y1)
    }
}

/// Intersection over union; 0 when either box is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0u32..50, 0u32..50, 1u32..30, 1u32..30).prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_properties(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
            prop_assert_eq!(ab == 0.0, a.intersection(&b).is_none());
        }
    }

    #[test]
    fn scaled_and_expanded() {
        let b = BoundingBox::new(10, 20, 30, 40);
        assert_eq!(b.scaled(0.5, 0.5), BoundingBox::new(5, 10, 15, 20));
        assert_eq!(b.expand_clipped(15, 5, 100, 0, 60, 70), BoundingBox::new(0, 15, 60, 45));
    }

    #[test]
    fn serializes_as_array() {
        let b = BoundingBox::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        let back: BoundingBox = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(back, b);
    }
}
