//! Tube-level evaluation: spatio-temporal IoU, per-class AP and mAP.

mod study;

pub use study::{detect_video, run_strategy_study, tubes_for_video, StudyConfig, StudyReport, StudyRow};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::iou;
use crate::linking::ActionTube;

/// Tubes of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTubes {
    pub video_id: String,
    pub tubes: Vec<ActionTube>,
}

/// Temporal IoU (in frames) times the mean spatial IoU over shared frames.
pub fn tube_iou(a: &ActionTube, b: &ActionTube) -> f64 {
    let first = a.start.max(b.start);
    let last = a.end.min(b.end);
    if first > last {
        return 0.0;
    }
    let shared = last - first + 1;
    let union = a.len() as u32 + b.len() as u32 - shared;
    let spatial: f64 = (first..=last)
        .map(|t| match (a.box_at(t), b.box_at(t)) {
            (Some(x), Some(y)) => iou(x, y),
            _ => 0.0,
        })
        .sum::<f64>()
        / f64::from(shared);
    f64::from(shared) / f64::from(union) * spatial
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    EveryPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Outcome of one ranked prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPrediction {
    /// Position of the video in the prediction list.
    pub video: usize,
    /// Index of the tube inside that video.
    pub tube: usize,
    pub score: f64,
    /// Matched ground truth as `(video_id index in the GT list, tube index)`.
    pub matched: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Predictions of the class in descending score order.
    pub ranked: Vec<RankedPrediction>,
    /// Matched flag per ground-truth tube of the class, per GT video.
    pub gt_matched: Vec<Vec<(usize, bool)>>,
    pub num_gt: usize,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("{delta} is outside (0, 1]")))
    }
}

/// Greedy matching in descending score order: each prediction takes the
/// unmatched same-class ground truth of its video with the highest tube IoU,
/// if that IoU reaches `delta`. Equal scores keep input order.
pub fn match_class(class_id: u32, preds: &[VideoTubes], gts: &[VideoTubes], delta: f64) -> Result<MatchResult> {
    check_delta(delta)?;
    let mut gt_index: HashMap<&str, usize> = HashMap::new();
    for (i, v) in gts.iter().enumerate() {
        gt_index.entry(v.video_id.as_str()).or_insert(i);
    }
    let mut gt_matched: Vec<Vec<(usize, bool)>> = gts
        .iter()
        .map(|v| {
            v.tubes
                .iter()
                .enumerate()
                .filter(|(_, t)| t.class_id == class_id)
                .map(|(i, _)| (i, false))
                .collect()
        })
        .collect();
    let num_gt = gt_matched.iter().map(Vec::len).sum();

    let mut ranked: Vec<RankedPrediction> = preds
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| {
            v.tubes.iter().enumerate().filter(|(_, t)| t.class_id == class_id).map(move |(ti, t)| RankedPrediction {
                video: vi,
                tube: ti,
                score: t.tube_score,
                matched: None,
            })
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));

    for r in &mut ranked {
        let pred = &preds[r.video].tubes[r.tube];
        let Some(&gv) = gt_index.get(preds[r.video].video_id.as_str()) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for (slot, &(gi, used)) in gt_matched[gv].iter().enumerate() {
            if used {
                continue;
            }
            let v = tube_iou(pred, &gts[gv].tubes[gi]);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((slot, v));
            }
        }
        if let Some((slot, v)) = best {
            if v >= delta {
                gt_matched[gv][slot].1 = true;
                r.matched = Some((gv, gt_matched[gv][slot].0));
            }
        }
    }
    Ok(MatchResult {
        ranked,
        gt_matched,
        num_gt,
    })
}

/// Area under the precision-recall curve of a ranked TP/FP sequence.
pub fn precision_recall_area(hits: &[bool], num_gt: usize, interp: Interpolation) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    for (i, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // Monotone envelope from the right.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    match interp {
        Interpolation::EveryPoint => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                area += (r - prev) * p;
                prev = *r;
            }
            area
        }
        Interpolation::ElevenPoint => {
            (0..=10)
                .map(|k| {
                    let level = f64::from(k) / 10.0;
                    recall
                        .iter()
                        .position(|&r| r >= level - 1e-12)
                        .map_or(0.0, |i| precision[i])
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// AP of one class; `None` when the class has no ground truth.
pub fn average_precision(
    class_id: u32,
    preds: &[VideoTubes],
    gts: &[VideoTubes],
    delta: f64,
    interp: Interpolation,
) -> Result<Option<f64>> {
    let m = match_class(class_id, preds, gts, delta)?;
    if m.num_gt == 0 {
        return Ok(None);
    }
    let hits: Vec<bool> = m.ranked.iter().map(|r| r.matched.is_some()).collect();
    Ok(Some(precision_recall_area(&hits, m.num_gt, interp)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub delta: f64,
    pub map: f64,
    pub per_class: BTreeMap<u32, f64>,
}

/// Unweighted mean of per-class AP over the classes that have ground truth,
/// one result per threshold.
pub fn mean_ap(preds: &[VideoTubes], gts: &[VideoTubes], deltas: &[f64], interp: Interpolation) -> Result<Vec<MapResult>> {
    let classes: BTreeSet<u32> = gts.iter().flat_map(|v| v.tubes.iter().map(|t| t.class_id)).collect();
    if classes.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    deltas
        .iter()
        .map(|&delta| {
            let mut per_class = BTreeMap::new();
            for &c in &classes {
                if let Some(ap) = average_precision(c, preds, gts, delta, interp)? {
                    per_class.insert(c, ap);
                }
            }
            let map = per_class.values().sum::<f64>() / per_class.len() as f64;
            Ok(MapResult { delta, map, per_class })
        })
        .collect()
}
