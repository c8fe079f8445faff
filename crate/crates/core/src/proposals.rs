//! Two-stage cascade proposal machinery.
//!
//! Anchors on a regular grid are scored and regressed by a first stage;
//! the surviving regressed boxes become the anchors of a second stage whose
//! scores and regressions are the final proposals. Stages are pluggable
//! (see [`ProposalStage`]) so scorers can be learned models or oracles.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    clip, decode_delta_with_limit, iou, nms_top_n, score_order, BoundingBox, BoxDelta,
    DEFAULT_LOG_SCALE_LIMIT,
};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Grid spacing in pixels.
    pub stride: f64,
    /// Anchor base sizes; an anchor of scale `s` has area `s * s`.
    pub scales: Vec<f64>,
    /// Height over width.
    pub aspect_ratios: Vec<f64>,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            stride: 16.0,
            scales: vec![128.0, 256.0, 512.0],
            aspect_ratios: vec![0.5, 1.0, 2.0],
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride.is_nan() || self.stride <= 0.0 {
            return Err(invalid("stride", "must be positive"));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(invalid("scales", "must be non-empty and positive"));
        }
        if self.aspect_ratios.is_empty() || self.aspect_ratios.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return Err(invalid("aspect_ratios", "must be non-empty and positive"));
        }
        Ok(())
    }
}

/// One anchor per (cell, scale, ratio), cells in row-major order.
///
/// Cell centers sit at `(i + 0.5) * stride` on a `ceil(W / stride) x
/// ceil(H / stride)` grid. Anchors are not clipped.
pub fn generate_anchors(cfg: &AnchorConfig, image_width: f64, image_height: f64) -> Result<Vec<BoundingBox>> {
    cfg.validate()?;
    if !(image_width > 0.0 && image_height > 0.0) {
        return Err(invalid("image size", "must be positive"));
    }
    let cols = (image_width / cfg.stride).ceil() as usize;
    let rows = (image_height / cfg.stride).ceil() as usize;
    let mut out = Vec::with_capacity(rows * cols * cfg.scales.len() * cfg.aspect_ratios.len());
    for r in 0..rows {
        let cy = (r as f64 + 0.5) * cfg.stride;
        for c in 0..cols {
            let cx = (c as f64 + 0.5) * cfg.stride;
            for &s in &cfg.scales {
                for &ratio in &cfg.aspect_ratios {
                    let w = s / ratio.sqrt();
                    let h = s * ratio.sqrt();
                    out.push(BoundingBox::from_center(cx, cy, w, h)?);
                }
            }
        }
    }
    Ok(out)
}

/// A proposal stage: objectness scorer plus box regressor.
pub trait ProposalStage {
    /// Objectness in `[0, 1]`.
    fn objectness(&self, anchor: &BoundingBox) -> f64;
    fn regress(&self, anchor: &BoundingBox) -> BoxDelta;
}

impl<T: ProposalStage + ?Sized> ProposalStage for &T {
    fn objectness(&self, anchor: &BoundingBox) -> f64 {
        (**self).objectness(anchor)
    }

    fn regress(&self, anchor: &BoundingBox) -> BoxDelta {
        (**self).regress(anchor)
    }
}

/// Stage built from a pair of closures.
pub struct FnStage<S, R> {
    scorer: S,
    regressor: R,
}

impl<S, R> FnStage<S, R>
where
    S: Fn(&BoundingBox) -> f64,
    R: Fn(&BoundingBox) -> BoxDelta,
{
    pub fn new(scorer: S, regressor: R) -> Self {
        Self { scorer, regressor }
    }
}

impl<S, R> ProposalStage for FnStage<S, R>
where
    S: Fn(&BoundingBox) -> f64,
    R: Fn(&BoundingBox) -> BoxDelta,
{
    fn objectness(&self, anchor: &BoundingBox) -> f64 {
        (self.scorer)(anchor)
    }

    fn regress(&self, anchor: &BoundingBox) -> BoxDelta {
        (self.regressor)(anchor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub top_n: usize,
    /// Suppression threshold applied between the stages; `None` disables it.
    pub nms_threshold: Option<f64>,
    pub image_width: f64,
    pub image_height: f64,
    pub log_scale_limit: f64,
}

impl CascadeConfig {
    pub fn new(image_width: f64, image_height: f64) -> Self {
        Self {
            top_n: 300,
            nms_threshold: Some(0.7),
            image_width,
            image_height,
            log_scale_limit: DEFAULT_LOG_SCALE_LIMIT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(invalid("top_n", "must be positive"));
        }
        if let Some(t) = self.nms_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("nms_threshold", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Scores and regresses every input box, dropping boxes that fail to decode
/// or end up with zero area after clipping.
fn apply_stage(
    inputs: &[BoundingBox],
    stage: &dyn ProposalStage,
    cfg: &CascadeConfig,
) -> Vec<(BoundingBox, f64)> {
    inputs
        .iter()
        .filter_map(|b| {
            let score = stage.objectness(b).clamp(0.0, 1.0);
            let moved = decode_delta_with_limit(b, &stage.regress(b), cfg.log_scale_limit).ok()?;
            let clipped = clip(&moved, cfg.image_width, cfg.image_height);
            clipped.has_positive_area().then_some((clipped, score))
        })
        .collect()
}

fn select_top(scored: &[(BoundingBox, f64)], cfg: &CascadeConfig) -> Vec<(BoundingBox, f64)> {
    let keep = match cfg.nms_threshold {
        Some(t) => nms_top_n(scored, t, cfg.top_n),
        None => {
            let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
            score_order(&scores).into_iter().take(cfg.top_n).collect()
        }
    };
    keep.into_iter().map(|i| scored[i]).collect()
}

/// Single-stage proposals: regress, score, suppress, keep `top_n`.
pub fn single_stage(
    anchors: &[BoundingBox],
    stage: &dyn ProposalStage,
    cfg: &CascadeConfig,
) -> Result<Vec<(BoundingBox, f64)>> {
    cfg.validate()?;
    Ok(select_top(&apply_stage(anchors, stage, cfg), cfg))
}

/// Two-stage cascade. Stage-a survivors are re-scored and re-regressed by
/// stage b; the result carries stage-b boxes and stage-b scores only,
/// sorted by descending score.
pub fn cascade_refine(
    anchors: &[BoundingBox],
    stage_a: &dyn ProposalStage,
    stage_b: &dyn ProposalStage,
    cfg: &CascadeConfig,
) -> Result<Vec<(BoundingBox, f64)>> {
    let first = single_stage(anchors, stage_a, cfg)?;
    let inputs: Vec<BoundingBox> = first.iter().map(|p| p.0).collect();
    let second = apply_stage(&inputs, stage_b, cfg);
    let scores: Vec<f64> = second.iter().map(|s| s.1).collect();
    Ok(score_order(&scores).into_iter().map(|i| second[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleLabel {
    Positive { gt: usize },
    Negative,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleAssignment {
    pub labels: Vec<SampleLabel>,
    /// Best IoU of each candidate against any ground truth.
    pub max_iou: Vec<f64>,
}

impl SampleAssignment {
    pub fn positives(&self) -> Vec<usize> {
        self.indices(|l| matches!(l, SampleLabel::Positive { .. }))
    }

    pub fn negatives(&self) -> Vec<usize> {
        self.indices(|l| *l == SampleLabel::Negative)
    }

    fn indices(&self, f: impl Fn(&SampleLabel) -> bool) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| f(l))
            .map(|(i, _)| i)
            .collect()
    }
}

/// IoU-threshold labeling with the best-candidate override.
///
/// A candidate is positive when its best IoU exceeds `pos_threshold`,
/// negative when it is below `neg_threshold`, ignored otherwise. Every
/// ground truth additionally forces its highest-IoU candidate (lowest index
/// on ties, IoU > 0) to be positive.
pub fn assign_samples(
    candidates: &[BoundingBox],
    ground_truths: &[BoundingBox],
    pos_threshold: f64,
    neg_threshold: f64,
) -> Result<SampleAssignment> {
    if !(0.0 <= neg_threshold && neg_threshold < pos_threshold && pos_threshold <= 1.0) {
        return Err(invalid("thresholds", "need 0 <= neg < pos <= 1"));
    }
    let mut labels = Vec::with_capacity(candidates.len());
    let mut max_iou = Vec::with_capacity(candidates.len());
    for c in candidates {
        let (best_gt, best) = ground_truths
            .iter()
            .enumerate()
            .map(|(j, g)| (j, iou(c, g)))
            .fold((None, 0.0), |acc, (j, v)| if acc.0.is_none() || v > acc.1 { (Some(j), v) } else { acc });
        max_iou.push(best);
        labels.push(match best_gt {
            Some(gt) if best > pos_threshold => SampleLabel::Positive { gt },
            _ if best < neg_threshold => SampleLabel::Negative,
            None => SampleLabel::Negative,
            _ => SampleLabel::Ignored,
        });
    }

    // Best-candidate override; a candidate claimed by several ground truths
    // keeps the one it overlaps most.
    let mut forced: Vec<Option<(usize, f64)>> = vec![None; candidates.len()];
    for (j, g) in ground_truths.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let v = iou(c, g);
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, v)) = best {
            if forced[i].is_none_or(|(_, prev)| v > prev) {
                forced[i] = Some((j, v));
            }
        }
    }
    for (i, f) in forced.into_iter().enumerate() {
        if let Some((gt, _)) = f {
            if !matches!(labels[i], SampleLabel::Positive { .. }) {
                labels[i] = SampleLabel::Positive { gt };
            }
        }
    }
    Ok(SampleAssignment { labels, max_iou })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinibatchConfig {
    pub max_size: usize,
    /// Inclusive bounds on positives / negatives.
    pub ratio_range: (f64, f64),
}

impl Default for MinibatchConfig {
    fn default() -> Self {
        Self {
            max_size: 128,
            ratio_range: (0.8, 1.2),
        }
    }
}

/// Chooses how many positives and negatives to draw.
///
/// Aims for the ratio closest to 1 inside `ratio_range` and takes the
/// largest batch that honours it. `None` when no batch satisfies the bounds.
pub fn minibatch_counts(positives: usize, negatives: usize, cfg: &MinibatchConfig) -> Option<(usize, usize)> {
    let (lo, hi) = cfg.ratio_range;
    let target = 1.0f64.clamp(lo, hi);
    let max_neg = negatives.min(cfg.max_size);
    (1..=max_neg).rev().find_map(|n_neg| {
        let n_pos = (target * n_neg as f64).round() as usize;
        let ratio = n_pos as f64 / n_neg as f64;
        let ok = n_pos >= 1
            && n_pos <= positives
            && n_pos + n_neg <= cfg.max_size
            && ratio >= lo
            && ratio <= hi;
        ok.then_some((n_pos, n_neg))
    })
}

/// Ratio-balanced mini-batch drawn uniformly without replacement.
///
/// Returns the selected candidate indices (positives first, each group in
/// ascending order). An empty selection means the frame is skipped: there
/// are no positives, no negatives, or the ratio bounds cannot be met.
pub fn sample_minibatch(assignment: &SampleAssignment, cfg: &MinibatchConfig, seed: u64) -> Result<Vec<usize>> {
    let (lo, hi) = cfg.ratio_range;
    if cfg.max_size == 0 {
        return Err(invalid("max_size", "must be positive"));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(invalid("ratio_range", "need 0 < lo <= hi"));
    }
    let pos = assignment.positives();
    let neg = assignment.negatives();
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::EmptyPool);
    }
    let Some((n_pos, n_neg)) = minibatch_counts(pos.len(), neg.len(), cfg) else {
        return Ok(Vec::new());
    };
    let mut rng = seeding::stream(seed, &[]);
    let mut draw = |pool: &[usize], n: usize| {
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k]).collect();
        picked.sort_unstable();
        picked
    };
    let mut out = draw(&pos, n_pos);
    out.extend(draw(&neg, n_neg));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub threshold: f64,
    pub recall: f64,
}

/// Fraction of ground-truth boxes covered by at least one proposal with
/// IoU >= threshold, for each threshold.
pub fn recall_at_iou(
    proposals: &[Vec<BoundingBox>],
    ground_truths: &[Vec<BoundingBox>],
    thresholds: &[f64],
) -> Result<Vec<RecallPoint>> {
    if proposals.len() != ground_truths.len() {
        return Err(Error::LengthMismatch(proposals.len(), ground_truths.len()));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("thresholds", "must be ascending within [0, 1]"));
    }
    // `None` when the image has no proposals at all.
    let best: Vec<Option<f64>> = proposals
        .iter()
        .zip(ground_truths)
        .flat_map(|(props, gts)| {
            gts.iter()
                .map(move |g| props.iter().map(|p| iou(p, g)).reduce(f64::max))
        })
        .collect();
    if best.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let total = best.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let covered = best.iter().filter(|b| b.is_some_and(|v| v >= t)).count();
            RecallPoint {
                threshold: t,
                recall: covered as f64 / total,
            }
        })
        .collect())
}

pub fn is_non_increasing(curve: &[RecallPoint]) -> bool {
    curve.windows(2).all(|w| w[1].recall <= w[0].recall)
}
