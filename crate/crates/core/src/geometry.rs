//! Axis-aligned boxes, IoU and coordinate rescaling between resolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frame size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn is_zero(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

impl From<[u32; 2]> for Resolution {
    fn from([width, height]: [u32; 2]) -> Self {
        Self { width, height }
    }
}

impl From<Resolution> for [u32; 2] {
    fn from(r: Resolution) -> Self {
        [r.width, r.height]
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Corner-format box `(x1, y1, x2, y2)` with `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<T> {
    x1: T,
    y1: T,
    x2: T,
    y2: T,
}

impl<T: Real> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBox([
                x1.to_f64_lossy(),
                y1.to_f64_lossy(),
                x2.to_f64_lossy(),
                y2.to_f64_lossy(),
            ]));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_array(c: [T; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// Builds a box from center, aspect ratio `w / h` and height.
    pub fn from_xyah(cx: T, cy: T, aspect: T, height: T) -> Result<Self> {
        let h = height.max(T::zero());
        let w = (aspect * h).max(T::zero());
        let two = T::lit(2.0);
        Self::new(cx - w / two, cy - h / two, cx + w / two, cy + h / two)
    }

    pub fn x1(&self) -> T {
        self.x1
    }
    pub fn y1(&self) -> T {
        self.y1
    }
    pub fn x2(&self) -> T {
        self.x2
    }
    pub fn y2(&self) -> T {
        self.y2
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        ((self.x1 + self.x2) / two, (self.y1 + self.y2) / two)
    }

    /// Center, aspect ratio and height. Aspect is 0 for a zero-height box.
    pub fn to_xyah(&self) -> [T; 4] {
        let (cx, cy) = self.center();
        let h = self.height();
        let a = if h > T::zero() { self.width() / h } else { T::zero() };
        [cx, cy, a, h]
    }

    pub fn cast<U: Real>(&self) -> BBox<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        BBox {
            x1: c(self.x1),
            y1: c(self.y1),
            x2: c(self.x2),
            y2: c(self.y2),
        }
    }
}

/// Intersection over union; 0 when the union has zero area.
pub fn iou<T: Real>(a: &BBox<T>, b: &BBox<T>) -> T {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(T::zero());
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(T::zero());
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one()).max(T::zero())
}

/// Maps a box between coordinate frames of two resolutions, scaling each axis
/// independently.
pub fn rescale_bbox<T: Real>(b: &BBox<T>, from: Resolution, to: Resolution) -> Result<BBox<T>> {
    if from.is_zero() {
        return Err(Error::ZeroResolution(from.width, from.height));
    }
    if to.is_zero() {
        return Err(Error::ZeroResolution(to.width, to.height));
    }
    if from == to {
        return Ok(*b);
    }
    let sx = T::lit(f64::from(to.width)) / T::lit(f64::from(from.width));
    let sy = T::lit(f64::from(to.height)) / T::lit(f64::from(from.height));
    BBox::new(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(c: [f64; 4]) -> BBox<f64> {
        BBox::from_array(c).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx([0.0, 0.0, 10.0, 10.0]);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx([20.0, 20.0, 30.0, 30.0])), 0.0);
        let got = iou(&a, &bx([5.0, 5.0, 15.0, 15.0]));
        assert!((got - 25.0 / 175.0).abs() < 1e-15);
        assert!((got - 0.142857).abs() < 1e-6);
    }

    #[test]
    fn iou_degenerate_is_zero() {
        let p = bx([3.0, 3.0, 3.0, 3.0]);
        assert_eq!(iou(&p, &p), 0.0);
        let line = bx([0.0, 0.0, 10.0, 0.0]);
        assert_eq!(iou(&line, &bx([0.0, 0.0, 10.0, 10.0])), 0.0);
    }

    #[test]
    fn rejects_inverted_and_nan() {
        assert!(BBox::new(5.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn rescale_examples() {
        let lo = Resolution::new(192, 192);
        let hi = Resolution::new(320, 320);
        let r = rescale_bbox(&bx([0.0, 0.0, 96.0, 96.0]), lo, hi).unwrap();
        assert_eq!(r.to_array(), [0.0, 0.0, 160.0, 160.0]);

        let b = bx([1.5, 2.5, 7.25, 9.0]);
        assert_eq!(rescale_bbox(&b, hi, hi).unwrap(), b);

        let r = rescale_bbox(&bx([19.2, 0.0, 96.0, 48.0]), lo, hi).unwrap();
        for (g, w) in r.to_array().iter().zip([32.0, 0.0, 160.0, 80.0]) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn rescale_zero_resolution_errors() {
        let b = bx([0.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            rescale_bbox(&b, Resolution::new(0, 10), Resolution::new(10, 10)),
            Err(Error::ZeroResolution(0, 10))
        );
    }

    #[test]
    fn xyah_conversion() {
        let b = bx([0.0, 0.0, 10.0, 20.0]);
        assert_eq!(b.to_xyah(), [5.0, 10.0, 0.5, 20.0]);
        let back = BBox::from_xyah(5.0, 10.0, 0.5, 20.0).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn works_in_single_precision() {
        let a = BBox::<f32>::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::<f32>::new(5.0, 5.0, 15.0, 15.0).unwrap();
        assert!((iou(&a, &b) - 0.142857).abs() < 1e-6);
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.0..300.0f64, 0.0..300.0f64)
            .prop_map(|(x, y, w, h)| bx([x, y, x + w, y + h]))
    }

    fn arb_res() -> impl Strategy<Value = Resolution> {
        (1u32..2000, 1u32..2000).prop_map(|(w, h)| Resolution::new(w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou_self_is_one(a in arb_box()) {
            prop_assume!(a.area() > 1e-6);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rescale_round_trip(b in arb_box(), r1 in arb_res(), r2 in arb_res()) {
            let there = rescale_bbox(&b, r1, r2).unwrap();
            let back = rescale_bbox(&there, r2, r1).unwrap();
            for (g, w) in back.to_array().iter().zip(b.to_array()) {
                prop_assert!((g - w).abs() < 1e-9);
            }
        }

        #[test]
        fn iou_invariant_under_uniform_scaling(a in arb_box(), b in arb_box(), n in 1u32..1000, m in 1u32..1000) {
            let from = Resolution::new(n, n);
            let to = Resolution::new(m, m);
            let sa = rescale_bbox(&a, from, to).unwrap();
            let sb = rescale_bbox(&b, from, to).unwrap();
            prop_assert!((iou(&a, &b) - iou(&sa, &sb)).abs() < 1e-9);
        }
    }
}
