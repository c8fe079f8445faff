//! Axis-aligned box arithmetic.
//!
//! Boxes use continuous pixel coordinates: `area = (x2 - x1) * (y2 - y1)`
//! with no `+1` correction. Regression deltas follow the usual R-CNN
//! parameterization (center shift over source size, log size ratio).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on `|tw|` / `|th|` accepted by [`decode_delta`]: ln(1000 / 16).
pub const DEFAULT_LOG_SCALE_LIMIT: f64 = 4.135_166_556_742_356;

/// Axis-aligned box `[x1, y1, x2, y2]` with `x2 >= x1` and `y2 >= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x2 < x1 || y2 < y1 {
            return Err(Error::InvalidBox(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of the given size centered on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            cx - 0.5 * width,
            cy - 0.5 * height,
            cx + 0.5 * width,
            cy + 0.5 * height,
        )
    }

    /// Builds a box from two arbitrary corners, reordering coordinates.
    pub fn from_corners(xa: f64, ya: f64, xb: f64, yb: f64) -> Result<Self> {
        Self::new(xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb))
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// True when both sides are strictly positive.
    pub fn has_positive_area(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Largest absolute coordinate difference to `other`.
    pub fn max_abs_diff(&self, other: &BoundingBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Parameterized regression offsets between two boxes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl BoxDelta {
    pub const ZERO: BoxDelta = BoxDelta {
        tx: 0.0,
        ty: 0.0,
        tw: 0.0,
        th: 0.0,
    };

    pub fn new(tx: f64, ty: f64, tw: f64, th: f64) -> Self {
        Self { tx, ty, tw, th }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.tx * k, self.ty * k, self.tw * k, self.th * k)
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn degenerate(b: &BoundingBox) -> Error {
    Error::DegenerateBox(b.x1, b.y1, b.x2, b.y2)
}

/// Offsets that move `source` onto `target`.
pub fn encode_delta(source: &BoundingBox, target: &BoundingBox) -> Result<BoxDelta> {
    if !source.has_positive_area() {
        return Err(degenerate(source));
    }
    if !target.has_positive_area() {
        return Err(degenerate(target));
    }
    let (sw, sh) = (source.width(), source.height());
    let (scx, scy) = source.center();
    let (tcx, tcy) = target.center();
    Ok(BoxDelta {
        tx: (tcx - scx) / sw,
        ty: (tcy - scy) / sh,
        tw: (target.width() / sw).ln(),
        th: (target.height() / sh).ln(),
    })
}

/// Inverse of [`encode_delta`] with the default log-scale limit.
pub fn decode_delta(source: &BoundingBox, d: &BoxDelta) -> Result<BoundingBox> {
    decode_delta_with_limit(source, d, DEFAULT_LOG_SCALE_LIMIT)
}

pub fn decode_delta_with_limit(
    source: &BoundingBox,
    d: &BoxDelta,
    log_scale_limit: f64,
) -> Result<BoundingBox> {
    if !source.has_positive_area() {
        return Err(degenerate(source));
    }
    for v in [d.tw, d.th] {
        if !v.is_finite() || v.abs() > log_scale_limit {
            return Err(Error::DeltaOverflow {
                value: v,
                limit: log_scale_limit,
            });
        }
    }
    let (sw, sh) = (source.width(), source.height());
    let (scx, scy) = source.center();
    BoundingBox::from_center(
        scx + d.tx * sw,
        scy + d.ty * sh,
        sw * d.tw.exp(),
        sh * d.th.exp(),
    )
}

/// Clamps the box to `[0, width] x [0, height]`.
pub fn clip(b: &BoundingBox, width: f64, height: f64) -> BoundingBox {
    let cx = |v: f64| v.clamp(0.0, width);
    let cy = |v: f64| v.clamp(0.0, height);
    BoundingBox {
        x1: cx(b.x1),
        y1: cy(b.y1),
        x2: cx(b.x2),
        y2: cy(b.y2),
    }
}

/// Orders indices by descending score, then ascending index.
pub(crate) fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| match scores[j].total_cmp(&scores[i]) {
        Ordering::Equal => i.cmp(&j),
        o => o,
    });
    order
}

/// Greedy non-maximum suppression.
///
/// Returns kept indices in visiting order (score descending, index
/// ascending on ties). A box is suppressed when its IoU with an already
/// kept box is strictly greater than `threshold`.
pub fn nms(dets: &[(BoundingBox, f64)], threshold: f64) -> Vec<usize> {
    nms_top_n(dets, threshold, usize::MAX)
}

/// [`nms`] that stops once `limit` boxes have been kept.
pub fn nms_top_n(dets: &[(BoundingBox, f64)], threshold: f64, limit: usize) -> Vec<usize> {
    let scores: Vec<f64> = dets.iter().map(|d| d.1).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(&scores) {
        if kept.len() >= limit {
            break;
        }
        let b = &dets[i].0;
        if kept.iter().all(|&k| iou(&dets[k].0, b) <= threshold) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rejects_inverted_and_nan_boxes() {
        assert!(BoundingBox::new(5.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_abs_diff_eq!(iou(&a, &bb(5.0, 0.0, 15.0, 10.0)), 50.0 / 150.0, epsilon = 1e-12);
        let z = bb(3.0, 3.0, 3.0, 3.0);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn encode_examples() {
        let s = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(encode_delta(&s, &s).unwrap(), BoxDelta::ZERO);
        let d = encode_delta(&s, &bb(5.0, 5.0, 15.0, 15.0)).unwrap();
        assert_abs_diff_eq!(d.tx, 0.5);
        assert_abs_diff_eq!(d.ty, 0.5);
        assert_abs_diff_eq!(d.tw, 0.0);
        assert_abs_diff_eq!(d.th, 0.0);
        assert!(matches!(
            encode_delta(&bb(0.0, 0.0, 0.0, 4.0), &s),
            Err(Error::DegenerateBox(..))
        ));
    }

    #[test]
    fn decode_examples() {
        let s = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(decode_delta(&s, &BoxDelta::ZERO).unwrap(), s);
        let shifted = decode_delta(&s, &BoxDelta::new(0.5, 0.5, 0.0, 0.0)).unwrap();
        assert!(shifted.max_abs_diff(&bb(5.0, 5.0, 15.0, 15.0)) < 1e-12);
        let ln2 = 2f64.ln();
        let doubled = decode_delta(&s, &BoxDelta::new(0.0, 0.0, ln2, ln2)).unwrap();
        assert!(doubled.max_abs_diff(&bb(-5.0, -5.0, 15.0, 15.0)) < 1e-12);
    }

    #[test]
    fn decode_rejects_overflow() {
        let s = bb(0.0, 0.0, 10.0, 10.0);
        let err = decode_delta(&s, &BoxDelta::new(0.0, 0.0, 50.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DeltaOverflow { .. }));
        assert!(decode_delta_with_limit(&s, &BoxDelta::new(0.0, 0.0, 5.0, 0.0), 6.0).is_ok());
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&bb(-5.0, -5.0, 15.0, 15.0), 10.0, 10.0), bb(0.0, 0.0, 10.0, 10.0));
        let inner = bb(2.0, 3.0, 4.0, 5.0);
        assert_eq!(clip(&inner, 10.0, 10.0), inner);
        let out = clip(&bb(20.0, 2.0, 30.0, 8.0), 10.0, 10.0);
        assert_eq!(out, bb(10.0, 2.0, 10.0, 8.0));
        assert_eq!(out.area(), 0.0);
    }

    #[test]
    fn nms_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[(a, 0.3)], 0.5), vec![0]);
        assert_eq!(nms(&[(a, 0.8), (a, 0.9)], 0.5), vec![1]);
        assert!(nms(&[], 0.5).is_empty());
    }

    #[test]
    fn nms_breaks_ties_by_index() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[(a, 0.5), (a, 0.5), (a, 0.5)], 0.5), vec![0]);
    }

    /// Independent reference: the greedy result is the unique subset `K` such
    /// that `i ∈ K` iff no higher-priority member of `K` overlaps `i` above the
    /// threshold. Enumerate every subset and look for it.
    fn nms_fixpoint_oracle(dets: &[(BoundingBox, f64)], thr: f64) -> Vec<usize> {
        let n = dets.len();
        let outranks = |j: usize, i: usize| {
            dets[j].1 > dets[i].1 || (dets[j].1 == dets[i].1 && j < i)
        };
        let mut found = Vec::new();
        for mask in 0u32..(1 << n) {
            let member = |i: usize| mask & (1 << i) != 0;
            let consistent = (0..n).all(|i| {
                let blocked =
                    (0..n).any(|j| j != i && member(j) && outranks(j, i) && iou(&dets[j].0, &dets[i].0) > thr);
                member(i) == !blocked
            });
            if consistent {
                found.push(mask);
            }
        }
        assert_eq!(found.len(), 1, "greedy fixpoint must be unique");
        let mut kept: Vec<usize> = (0..n).filter(|&i| found[0] & (1 << i) != 0).collect();
        kept.sort_by(|&i, &j| if outranks(i, j) { Ordering::Less } else { Ordering::Greater });
        kept
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    fn arb_dets() -> impl Strategy<Value = Vec<(BoundingBox, f64)>> {
        // Scores from a coarse grid so ties actually occur.
        prop::collection::vec((arb_box(), (0u8..5).prop_map(|s| s as f64 / 4.0)), 0..=8)
    }

    proptest! {
        #[test]
        fn nms_matches_exhaustive_oracle(dets in arb_dets(), thr in 0.0..1.0f64) {
            prop_assert_eq!(nms(&dets, thr), nms_fixpoint_oracle(&dets, thr));
        }

        #[test]
        fn nms_output_is_sorted_and_separated(dets in arb_dets(), thr in 0.0..1.0f64) {
            let kept = nms(&dets, thr);
            for w in kept.windows(2) {
                prop_assert!(dets[w[0]].1 >= dets[w[1]].1);
            }
            for (a, &i) in kept.iter().enumerate() {
                for &j in &kept[a + 1..] {
                    prop_assert!(iou(&dets[i].0, &dets[j].0) <= thr);
                }
            }
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn encode_decode_round_trip(s in arb_box(), g in arb_box()) {
            let d = encode_delta(&s, &g).unwrap();
            let back = decode_delta(&s, &d).unwrap();
            prop_assert!(back.max_abs_diff(&g) < 1e-9);
        }

        #[test]
        fn clip_stays_inside(b in arb_box(), w in 1.0..60.0f64, h in 1.0..60.0f64) {
            let c = clip(&b, w, h);
            prop_assert!(c.x1() >= 0.0 && c.x2() <= w && c.y1() >= 0.0 && c.y2() <= h);
            prop_assert!(c.width() >= 0.0 && c.height() >= 0.0);
        }
    }
}
