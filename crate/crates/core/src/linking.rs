//! Per-class detection linking.
//!
//! Consecutive detections of one class are linked with the score
//! `(1 - beta) * (s(a) + s(b)) + beta * IoU(a, b)` and the path maximizing
//! the summed link score over a run of frames is found by Viterbi dynamic
//! programming. Several tubes per class are extracted by repeatedly taking
//! the best path and removing its detections.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{iou, BoundingBox};

/// Improvements smaller than this are treated as ties.
pub(crate) const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_id: u32,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_id: u32, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid("score", format!("{score} is outside [0, 1]")));
        }
        Ok(Self { bbox, class_id, score })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: u32,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkingParams {
    /// Weight of the overlap term against the score term.
    pub beta: f64,
}

impl LinkingParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid("beta", format!("{beta} is outside [0, 1]")));
        }
        Ok(Self { beta })
    }
}

impl Default for LinkingParams {
    fn default() -> Self {
        Self { beta: 0.7 }
    }
}

/// A per-class box sequence over the contiguous frames `start..=end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTube {
    pub class_id: u32,
    pub start: u32,
    pub end: u32,
    pub boxes: Vec<BoundingBox>,
    /// Per-frame detection scores.
    pub scores: Vec<f64>,
    /// Mean of `scores`; used to rank tubes.
    pub tube_score: f64,
}

impl ActionTube {
    pub fn new(class_id: u32, start: u32, boxes: Vec<BoundingBox>, scores: Vec<f64>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::EmptyInput("tube boxes"));
        }
        if boxes.len() != scores.len() {
            return Err(Error::LengthMismatch(boxes.len(), scores.len()));
        }
        let tube_score = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok(Self {
            class_id,
            start,
            end: start + boxes.len() as u32 - 1,
            boxes,
            scores,
            tube_score,
        })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn box_at(&self, frame: u32) -> Option<&BoundingBox> {
        if frame < self.start || frame > self.end {
            return None;
        }
        self.boxes.get((frame - self.start) as usize)
    }

    /// Sub-tube over relative positions `first..=last`.
    pub fn slice(&self, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= self.len() {
            return Err(invalid("range", format!("{first}..={last} outside tube of {} frames", self.len())));
        }
        Self::new(
            self.class_id,
            self.start + first as u32,
            self.boxes[first..=last].to_vec(),
            self.scores[first..=last].to_vec(),
        )
    }
}

fn link(a: &Detection, b: &Detection, beta: f64) -> f64 {
    (1.0 - beta) * (a.score + b.score) + beta * iou(&a.bbox, &b.bbox)
}

/// Link score between detections of the same class in consecutive frames.
pub fn linking_score(d_t: &Detection, d_next: &Detection, params: &LinkingParams) -> Result<f64> {
    if d_t.class_id != d_next.class_id {
        return Err(Error::ClassMismatch(d_t.class_id, d_next.class_id));
    }
    Ok(link(d_t, d_next, params.beta))
}

/// Link scores between consecutive frames of a tube.
pub fn tube_link_scores(tube: &ActionTube, params: &LinkingParams) -> Vec<f64> {
    let dets: Vec<Detection> = tube
        .boxes
        .iter()
        .zip(&tube.scores)
        .map(|(b, s)| Detection {
            bbox: *b,
            class_id: tube.class_id,
            score: *s,
        })
        .collect();
    dets.windows(2).map(|w| link(&w[0], &w[1], params.beta)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedPath {
    /// Detection index chosen in each frame.
    pub indices: Vec<usize>,
    /// Sum of link scores; the detection score for a single frame.
    pub score: f64,
}

impl LinkedPath {
    /// Score per link, or the detection score of a single-frame path.
    pub fn mean_link_score(&self) -> f64 {
        if self.indices.len() > 1 {
            self.score / (self.indices.len() - 1) as f64
        } else {
            self.score
        }
    }
}

/// Best path through a run of frames, one detection per frame.
///
/// Ties go to the lower detection index.
pub fn viterbi_link(frames: &[Vec<Detection>], params: &LinkingParams) -> Result<LinkedPath> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("run of frames"));
    }
    if frames.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput("frame without detections"));
    }
    let class = frames[0][0].class_id;
    if let Some(d) = frames.iter().flatten().find(|d| d.class_id != class) {
        return Err(Error::ClassMismatch(class, d.class_id));
    }

    if frames.len() == 1 {
        let best = argmax(frames[0].iter().map(|d| d.score));
        return Ok(LinkedPath {
            indices: vec![best],
            score: frames[0][best].score,
        });
    }

    let mut acc = vec![0.0; frames[0].len()];
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames.len() - 1);
    for t in 1..frames.len() {
        let (prev, cur) = (&frames[t - 1], &frames[t]);
        let mut next = Vec::with_capacity(cur.len());
        let mut from = Vec::with_capacity(cur.len());
        for d in cur {
            let i = argmax(prev.iter().zip(&acc).map(|(p, a)| a + link(p, d, params.beta)));
            next.push(acc[i] + link(&prev[i], d, params.beta));
            from.push(i);
        }
        acc = next;
        back.push(from);
    }

    let mut j = argmax(acc.iter().copied());
    let score = acc[j];
    let mut indices = vec![j; frames.len()];
    for t in (1..frames.len()).rev() {
        j = back[t - 1][j];
        indices[t - 1] = j;
    }
    Ok(LinkedPath { indices, score })
}

/// First index of the maximum (within [`TIE_EPS`]).
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 + TIE_EPS {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Upper bound on tubes per class per video.
    pub max_tubes: usize,
    /// Paths whose mean link score falls below this are not extracted.
    pub min_mean_link_score: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            max_tubes: 10,
            min_mean_link_score: 0.1,
        }
    }
}

struct Candidate {
    start: usize,
    len: usize,
    path: LinkedPath,
}

/// Maximal sub-ranges of `lo..hi` whose frames are consecutive and non-empty.
fn runs(remaining: &[Vec<Detection>], frame_ids: &[u32], lo: usize, hi: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut p = lo;
    while p < hi {
        if remaining[p].is_empty() {
            p += 1;
            continue;
        }
        let start = p;
        p += 1;
        while p < hi && !remaining[p].is_empty() && frame_ids[p] == frame_ids[p - 1] + 1 {
            p += 1;
        }
        out.push((start, p - start));
    }
    out
}

/// Links every class of a video into tubes.
///
/// Frames where a class has no detection split that class into independent
/// runs. Among all runs, the best Viterbi path with the highest total score
/// is extracted first; its detections are removed and the affected run is
/// re-split. Extraction stops at `max_tubes` per class or when no path has
/// a mean link score of at least `min_mean_link_score`. Output is sorted by
/// class, then start frame.
pub fn extract_tubes(video: &[FrameDetections], params: &LinkingParams, cfg: &ExtractConfig) -> Result<Vec<ActionTube>> {
    if video.windows(2).any(|w| w[1].frame_index <= w[0].frame_index) {
        return Err(invalid("frames", "frame indices must be strictly increasing"));
    }
    let frame_ids: Vec<u32> = video.iter().map(|f| f.frame_index).collect();
    let classes: BTreeSet<u32> = video.iter().flat_map(|f| f.detections.iter().map(|d| d.class_id)).collect();

    let mut tubes = Vec::new();
    for class in classes {
        let mut remaining: Vec<Vec<Detection>> = video
            .iter()
            .map(|f| f.detections.iter().filter(|d| d.class_id == class).copied().collect())
            .collect();

        let solve = |remaining: &[Vec<Detection>], (start, len): (usize, usize)| -> Result<Candidate> {
            let path = viterbi_link(&remaining[start..start + len], params)?;
            Ok(Candidate { start, len, path })
        };
        let mut candidates = Vec::new();
        for r in runs(&remaining, &frame_ids, 0, video.len()) {
            candidates.push(solve(&remaining, r)?);
        }

        let mut class_tubes = Vec::new();
        while class_tubes.len() < cfg.max_tubes {
            candidates.retain(|c| c.path.mean_link_score() >= cfg.min_mean_link_score);
            let Some(pick) = (0..candidates.len()).reduce(|a, b| {
                let (ca, cb) = (&candidates[a], &candidates[b]);
                if cb.path.score > ca.path.score + TIE_EPS
                    || ((cb.path.score - ca.path.score).abs() <= TIE_EPS && cb.start < ca.start)
                {
                    b
                } else {
                    a
                }
            }) else {
                break;
            };
            let c = candidates.swap_remove(pick);
            let mut boxes = Vec::with_capacity(c.len);
            let mut scores = Vec::with_capacity(c.len);
            for (offset, &i) in c.path.indices.iter().enumerate() {
                let d = remaining[c.start + offset].remove(i);
                boxes.push(d.bbox);
                scores.push(d.score);
            }
            class_tubes.push(ActionTube::new(class, frame_ids[c.start], boxes, scores)?);
            for r in runs(&remaining, &frame_ids, c.start, c.start + c.len) {
                candidates.push(solve(&remaining, r)?);
            }
        }
        class_tubes.sort_by_key(|t| (t.start, t.end));
        tubes.extend(class_tubes);
    }
    Ok(tubes)
}
