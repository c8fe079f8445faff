//! Synthetic scenes and a detector stand-in.
//!
//! A [`SceneSpec`] describes actors moving with (optionally noisy) constant
//! velocity. [`generate_scene`] turns it into ground-truth tubes plus the
//! per-frame motion of every actor, which plays the role of optical flow.
//! [`render_detections`] is a plain noisy channel over the ground truth;
//! [`DetectionOracle`] additionally requires a well-aligned proposal before
//! it can fire, so proposal quality matters the way it does for a real
//! two-stage detector.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::anticipation::Motion;
use crate::error::{Error, Result};
use crate::geometry::{clip, encode_delta, iou, BoundingBox, BoxDelta};
use crate::linking::{ActionTube, Detection, FrameDetections};
use crate::proposals::{cascade_refine, CascadeConfig, ProposalStage};
use crate::seeding::{derive_seed, stream};

pub const SCENE_FORMAT_VERSION: u32 = 1;

// Stream tags keep independent draws apart.
const TAG_KINEMATICS: u64 = 1;
const TAG_TRUE_POSITIVE: u64 = 2;
const TAG_FALSE_POSITIVE: u64 = 3;
const TAG_PROPOSAL_FAILURE: u64 = 4;
const TAG_ORACLE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub class_id: u32,
    /// First and last frame (inclusive) the actor performs the action.
    pub enter: u32,
    pub exit: u32,
    /// Box at `enter`, before clipping.
    pub bbox: BoundingBox,
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Per-frame standard deviation of the velocity random walk.
    #[serde(default)]
    pub velocity_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorNoise {
    /// Std-dev of the Gaussian jitter on each corner coordinate (pixels).
    pub loc_sigma: f64,
    pub tp_score_mean: f64,
    pub tp_score_sigma: f64,
    pub fp_score_mean: f64,
    pub fp_score_sigma: f64,
    pub miss_rate: f64,
    /// Probability of one false positive per frame.
    pub fp_rate: f64,
    #[serde(default = "default_fp_min_size")]
    pub fp_min_size: f64,
    #[serde(default = "default_fp_max_size")]
    pub fp_max_size: f64,
}

fn default_fp_min_size() -> f64 {
    20.0
}

fn default_fp_max_size() -> f64 {
    120.0
}

impl DetectorNoise {
    pub fn noiseless() -> Self {
        Self {
            loc_sigma: 0.0,
            tp_score_mean: 1.0,
            tp_score_sigma: 0.0,
            fp_score_mean: 0.0,
            fp_score_sigma: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
            fp_min_size: default_fp_min_size(),
            fp_max_size: default_fp_max_size(),
        }
    }
}

/// Bursts in which the proposal cascade fails to localize an actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalNoise {
    /// Long-run fraction of frames in a failure burst.
    pub failure_rate: f64,
    /// Mean burst length in frames.
    pub mean_failure_len: f64,
}

impl Default for ProposalNoise {
    fn default() -> Self {
        Self {
            failure_rate: 0.0,
            mean_failure_len: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub format_version: u32,
    pub video_id: String,
    pub width: f64,
    pub height: f64,
    pub frames: u32,
    pub seed: u64,
    pub actors: Vec<ActorSpec>,
    pub detector: DetectorNoise,
    #[serde(default)]
    pub proposals: ProposalNoise,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidScene(msg()))
    }
}

fn is_rate(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn is_sigma(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        check(self.format_version == SCENE_FORMAT_VERSION, || {
            format!("unsupported format_version {}", self.format_version)
        })?;
        check(self.width > 0.0 && self.height > 0.0, || "width and height must be positive".into())?;
        check(self.frames > 0, || "frames must be positive".into())?;
        let d = &self.detector;
        check(is_rate(d.miss_rate) && is_rate(d.fp_rate), || "detector rates must lie in [0, 1]".into())?;
        check(
            [d.loc_sigma, d.tp_score_sigma, d.fp_score_sigma].into_iter().all(is_sigma),
            || "detector sigmas must be non-negative".into(),
        )?;
        check(d.fp_min_size > 0.0 && d.fp_min_size <= d.fp_max_size, || {
            "need 0 < fp_min_size <= fp_max_size".into()
        })?;
        let p = &self.proposals;
        check(is_rate(p.failure_rate) && p.failure_rate < 1.0, || "failure_rate must lie in [0, 1)".into())?;
        check(p.mean_failure_len >= 1.0, || "mean_failure_len must be at least 1".into())?;
        for (i, a) in self.actors.iter().enumerate() {
            check(a.enter <= a.exit && a.exit < self.frames, || {
                format!("actor {i}: need enter <= exit < frames")
            })?;
            check(is_sigma(a.velocity_noise), || format!("actor {i}: velocity_noise must be non-negative"))?;
            check(a.velocity.iter().all(|v| v.is_finite()), || format!("actor {i}: velocity must be finite"))?;
        }
        Ok(())
    }

    /// Copy with a seed derived from `self.seed` and `tags`.
    pub fn reseeded(&self, tags: &[u64]) -> SceneSpec {
        let mut s = self.clone();
        s.seed = derive_seed(self.seed, tags);
        s
    }
}

/// Ground truth of one actor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorTrack {
    pub actor: usize,
    pub tube: ActionTube,
    /// Displacement from each frame to the next, aligned with `tube.boxes`.
    pub motion: Vec<Motion>,
    /// Frames (aligned with `tube.boxes`) where the proposal cascade fails.
    pub proposal_failure: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub tracks: Vec<ActorTrack>,
}

/// A visible ground-truth box at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub track: usize,
    pub class_id: u32,
    pub bbox: BoundingBox,
    pub motion: Motion,
    pub proposal_failure: bool,
}

impl Scene {
    pub fn gt_tubes(&self) -> Vec<ActionTube> {
        self.tracks.iter().map(|t| t.tube.clone()).collect()
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.spec.actors.iter().map(|a| a.class_id).collect()
    }

    pub fn gt_at(&self, frame: u32) -> Vec<GtBox> {
        self.tracks
            .iter()
            .enumerate()
            .filter_map(|(k, t)| {
                let b = t.tube.box_at(frame)?;
                let i = (frame - t.tube.start) as usize;
                Some(GtBox {
                    track: k,
                    class_id: t.tube.class_id,
                    bbox: *b,
                    motion: t.motion[i],
                    proposal_failure: t.proposal_failure[i],
                })
            })
            .collect()
    }

    /// Mean motion over the pixels of `b` at `frame`; background is static.
    pub fn mean_flow(&self, frame: u32, b: &BoundingBox) -> Motion {
        let area = b.area();
        if area <= 0.0 {
            return Motion::default();
        }
        let mut weight = 0.0;
        let (mut dx, mut dy) = (0.0, 0.0);
        for g in self.gt_at(frame) {
            let w = g.bbox.intersection_area(b);
            weight += w;
            dx += w * g.motion.dx;
            dy += w * g.motion.dy;
        }
        // Overlapping actors must not count a pixel twice.
        let norm = area.max(weight);
        Motion::new(dx / norm, dy / norm)
    }
}

fn gauss(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sigma * z
}

/// Two-state burst process with the requested stationary failure rate.
fn failure_bursts(rng: &mut ChaCha8Rng, len: usize, noise: &ProposalNoise) -> Vec<bool> {
    let f = noise.failure_rate;
    if f <= 0.0 {
        return vec![false; len];
    }
    let leave = 1.0 / noise.mean_failure_len;
    let enter = (f * leave / (1.0 - f)).min(1.0);
    let mut state = rng.random_bool(f);
    (0..len)
        .map(|_| {
            let out = state;
            state = if state { !rng.random_bool(leave) } else { rng.random_bool(enter) };
            out
        })
        .collect()
}

/// Ground-truth tubes and motion for every actor.
///
/// Each actor moves as `p(t+1) = p(t) + v(t)` with `v` following a Gaussian
/// random walk. Its tube is the first contiguous stretch of frames in
/// `enter..=exit` where the clipped box has positive area; it leaves the
/// scene for good once it is out of view.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut tracks = Vec::new();
    for (k, a) in spec.actors.iter().enumerate() {
        let mut rng = stream(spec.seed, &[TAG_KINEMATICS, k as u64]);
        let mut pos = a.bbox;
        let mut v = a.velocity;
        let mut start = None;
        let mut boxes = Vec::new();
        let mut motion = Vec::new();
        for t in a.enter..=a.exit {
            let shown = clip(&pos, spec.width, spec.height);
            if shown.has_positive_area() {
                start.get_or_insert(t);
                boxes.push(shown);
                motion.push(Motion::new(v[0], v[1]));
            } else if start.is_some() {
                break;
            }
            pos = pos.translate(v[0], v[1])?;
            for c in &mut v {
                *c = gauss(&mut rng, *c, a.velocity_noise);
            }
        }
        let Some(start) = start else {
            return Err(Error::InvalidScene(format!("actor {k} is never inside the image")));
        };
        let n = boxes.len();
        let tube = ActionTube::new(a.class_id, start, boxes, vec![1.0; n])?;
        let mut burst_rng = stream(spec.seed, &[TAG_PROPOSAL_FAILURE, k as u64]);
        let proposal_failure = failure_bursts(&mut burst_rng, n, &spec.proposals);
        tracks.push(ActorTrack {
            actor: k,
            tube,
            motion,
            proposal_failure,
        });
    }
    Ok(Scene { spec: spec.clone(), tracks })
}

fn jittered(rng: &mut ChaCha8Rng, b: &BoundingBox, sigma: f64) -> [f64; 4] {
    let c = b.to_array();
    std::array::from_fn(|i| gauss(rng, c[i], sigma))
}

fn finish_box(c: [f64; 4], w: f64, h: f64) -> Option<BoundingBox> {
    let b = BoundingBox::from_corners(c[0], c[1], c[2], c[3]).ok()?;
    let b = clip(&b, w, h);
    b.has_positive_area().then_some(b)
}

fn false_positive(scene: &Scene, frame: u32, seed: u64, tag: u64) -> Option<Detection> {
    let spec = &scene.spec;
    let d = &spec.detector;
    let mut rng = stream(seed, &[tag, u64::from(frame)]);
    let classes: Vec<u32> = scene.classes().into_iter().collect();
    if classes.is_empty() || !rng.random_bool(d.fp_rate) {
        return None;
    }
    let class_id = classes[rng.random_range(0..classes.len())];
    let (lo, hi) = (d.fp_min_size.ln(), d.fp_max_size.ln());
    let mut size = || if hi > lo { rng.random_range(lo..hi).exp() } else { d.fp_min_size };
    let w = size().min(spec.width);
    let h = size().min(spec.height);
    let x = rng.random_range(0.0..=(spec.width - w));
    let y = rng.random_range(0.0..=(spec.height - h));
    let score = gauss(&mut rng, d.fp_score_mean, d.fp_score_sigma).clamp(0.0, 1.0);
    let bbox = finish_box([x, y, x + w, y + h], spec.width, spec.height)?;
    Some(Detection { bbox, class_id, score })
}

/// Noisy detections straight from the ground truth.
///
/// Every visible ground-truth box is dropped with the miss rate or
/// jittered and scored; each frame may add one false positive. All frames
/// are returned, including empty ones. Deterministic in the scene seed.
pub fn render_detections(scene: &Scene) -> Vec<FrameDetections> {
    let spec = &scene.spec;
    let d = &spec.detector;
    (0..spec.frames)
        .map(|t| {
            let mut detections = Vec::new();
            for g in scene.gt_at(t) {
                let mut rng = stream(spec.seed, &[TAG_TRUE_POSITIVE, u64::from(t), g.track as u64]);
                let missed = rng.random_bool(d.miss_rate);
                let corners = jittered(&mut rng, &g.bbox, d.loc_sigma);
                let score = gauss(&mut rng, d.tp_score_mean, d.tp_score_sigma).clamp(0.0, 1.0);
                if missed {
                    continue;
                }
                if let Some(bbox) = finish_box(corners, spec.width, spec.height) {
                    detections.push(Detection {
                        bbox,
                        class_id: g.class_id,
                        score,
                    });
                }
            }
            detections.extend(false_positive(scene, t, spec.seed, TAG_FALSE_POSITIVE));
            FrameDetections {
                frame_index: t,
                detections,
            }
        })
        .collect()
}

/// How the detector stand-in reacts to proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// A ground truth is detectable only through a proposal at least this close.
    pub min_proposal_iou: f64,
    /// Fraction of the proposal-to-truth offset the detector corrects.
    pub regression_gain: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            min_proposal_iou: 0.5,
            regression_gain: 0.5,
        }
    }
}

/// Proposal-driven detector stand-in.
///
/// For each visible ground truth the best-overlapping proposal is regressed
/// part of the way towards it, jittered, and scored by the detector noise
/// model scaled by the proposal IoU. Random draws are keyed by (frame,
/// actor) so two runs that differ only in their proposals share the same
/// noise.
pub struct DetectionOracle<'a> {
    scene: &'a Scene,
    config: OracleConfig,
}

impl<'a> DetectionOracle<'a> {
    pub fn new(scene: &'a Scene, config: OracleConfig) -> Self {
        Self { scene, config }
    }

    pub fn detect(&self, frame: u32, proposals: &[BoundingBox]) -> Vec<Detection> {
        let spec = &self.scene.spec;
        let d = &spec.detector;
        let mut out = Vec::new();
        for g in self.scene.gt_at(frame) {
            let mut rng = stream(spec.seed, &[TAG_ORACLE, u64::from(frame), g.track as u64]);
            let missed = rng.random_bool(d.miss_rate);
            let noise: [f64; 4] = std::array::from_fn(|_| gauss(&mut rng, 0.0, d.loc_sigma));
            let base_score = gauss(&mut rng, d.tp_score_mean, d.tp_score_sigma);

            let best = proposals
                .iter()
                .map(|p| (p, iou(p, &g.bbox)))
                .fold(None, |acc: Option<(&BoundingBox, f64)>, (p, v)| match acc {
                    Some((_, b)) if b >= v => acc,
                    _ => Some((p, v)),
                });
            let Some((prop, quality)) = best else { continue };
            if missed || quality < self.config.min_proposal_iou {
                continue;
            }
            let (p, t) = (prop.to_array(), g.bbox.to_array());
            let gain = self.config.regression_gain;
            let corners: [f64; 4] = std::array::from_fn(|i| p[i] + gain * (t[i] - p[i]) + noise[i]);
            if let Some(bbox) = finish_box(corners, spec.width, spec.height) {
                out.push(Detection {
                    bbox,
                    class_id: g.class_id,
                    score: (base_score * quality).clamp(0.0, 1.0),
                });
            }
        }
        out.extend(false_positive(self.scene, frame, spec.seed, TAG_FALSE_POSITIVE));
        out
    }
}

/// Stage that knows the targets: objectness is the best IoU and the
/// regression covers `step` of the offset to the best-overlapping target.
pub struct OracleStage {
    pub targets: Vec<BoundingBox>,
    pub step: f64,
}

impl OracleStage {
    fn best(&self, anchor: &BoundingBox) -> Option<(&BoundingBox, f64)> {
        self.targets
            .iter()
            .map(|t| (t, iou(anchor, t)))
            .filter(|(_, v)| *v > 0.0)
            .fold(None, |acc, (t, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((t, v)),
            })
    }
}

impl ProposalStage for OracleStage {
    fn objectness(&self, anchor: &BoundingBox) -> f64 {
        self.best(anchor).map_or(0.0, |(_, v)| v)
    }

    fn regress(&self, anchor: &BoundingBox) -> BoxDelta {
        self.best(anchor)
            .and_then(|(t, _)| encode_delta(anchor, t).ok())
            .map_or(BoxDelta::ZERO, |d| d.scale(self.step))
    }
}

/// Cascade proposals for one frame. Actors inside a failure burst are
/// invisible to both oracle stages, so nearby anchors are neither scored
/// up nor regressed.
pub fn cascade_proposals(scene: &Scene, frame: u32, anchors: &[BoundingBox], cfg: &CascadeConfig) -> Result<Vec<BoundingBox>> {
    let targets: Vec<BoundingBox> = scene
        .gt_at(frame)
        .into_iter()
        .filter(|g| !g.proposal_failure)
        .map(|g| g.bbox)
        .collect();
    let stage = OracleStage { targets, step: 0.5 };
    Ok(cascade_refine(anchors, &stage, &stage, cfg)?.into_iter().map(|p| p.0).collect())
}

/// Ground truth plus one- and two-stage oracle proposals per image.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrial {
    pub image_size: (f64, f64),
    pub ground_truth: Vec<Vec<BoundingBox>>,
    pub one_stage: Vec<Vec<BoundingBox>>,
    pub two_stage: Vec<Vec<BoundingBox>>,
}

/// Random boxes (sides 40 to 120 px) on 320x320 images, proposed from a
/// stride-16 anchor grid by error-halving oracle stages.
pub fn cascade_trial(images: usize, boxes_per_image: usize, seed: u64) -> Result<CascadeTrial> {
    const SIDE: f64 = 320.0;
    let anchors = crate::proposals::generate_anchors(
        &crate::proposals::AnchorConfig {
            stride: 16.0,
            scales: vec![32.0, 64.0, 128.0],
            aspect_ratios: vec![0.5, 1.0, 2.0],
        },
        SIDE,
        SIDE,
    )?;
    let cfg = CascadeConfig::new(SIDE, SIDE);
    let mut trial = CascadeTrial {
        image_size: (SIDE, SIDE),
        ground_truth: Vec::with_capacity(images),
        one_stage: Vec::with_capacity(images),
        two_stage: Vec::with_capacity(images),
    };
    for i in 0..images {
        let mut rng = stream(seed, &[i as u64]);
        let targets: Vec<BoundingBox> = (0..boxes_per_image)
            .map(|_| {
                let w = rng.random_range(40.0..120.0);
                let h = rng.random_range(40.0..120.0);
                let x = rng.random_range(0.0..SIDE - w);
                let y = rng.random_range(0.0..SIDE - h);
                BoundingBox::new(x, y, x + w, y + h)
            })
            .collect::<Result<_>>()?;
        let stage = OracleStage {
            targets: targets.clone(),
            step: 0.5,
        };
        let boxes = |v: Vec<(BoundingBox, f64)>| v.into_iter().map(|p| p.0).collect::<Vec<_>>();
        trial.one_stage.push(boxes(crate::proposals::single_stage(&anchors, &stage, &cfg)?));
        trial.two_stage.push(boxes(cascade_refine(&anchors, &stage, &stage, &cfg)?));
        trial.ground_truth.push(targets);
    }
    Ok(trial)
}

/// Options for [`drifting_fixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureOptions {
    pub scenes: usize,
    pub seed: u64,
    /// Speed range in pixels per frame; `(0, 0)` gives static actors.
    pub speed: (f64, f64),
    pub velocity_noise: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            scenes: 8,
            seed: 2017,
            speed: (1.5, 3.5),
            velocity_noise: 0.05,
        }
    }
}

/// Standard fixture of untrimmed scenes with moderately noisy detections:
/// 320x240, 72 frames, two or three actors drawn from three classes, each
/// acting for 30 to 60 frames while drifting mostly horizontally.
pub fn drifting_fixture(opts: &FixtureOptions) -> Vec<SceneSpec> {
    const W: f64 = 320.0;
    const H: f64 = 240.0;
    const FRAMES: u32 = 72;
    (0..opts.scenes)
        .map(|i| {
            let mut rng = stream(opts.seed, &[i as u64]);
            let n_actors = rng.random_range(2..=3);
            let actors = (0..n_actors)
                .map(|k| {
                    let dur = rng.random_range(30..=60u32);
                    let enter = rng.random_range(0..=FRAMES - dur);
                    let w = rng.random_range(40.0..65.0);
                    let h = rng.random_range(60.0..90.0);
                    let speed = if opts.speed.1 > opts.speed.0 {
                        rng.random_range(opts.speed.0..opts.speed.1)
                    } else {
                        opts.speed.0
                    };
                    let angle: f64 = rng.random_range(-0.5..0.5);
                    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let v = [dir * speed * angle.cos(), speed * angle.sin()];
                    let travel = [v[0] * f64::from(dur), v[1] * f64::from(dur)];
                    // Start where the whole path stays in view when possible.
                    let place = |rng: &mut ChaCha8Rng, extent: f64, size: f64, travel: f64| {
                        let lo = (-travel).max(0.0);
                        let hi = (extent - size - travel.max(0.0)).max(lo);
                        if hi > lo {
                            rng.random_range(lo..hi)
                        } else {
                            lo.min(extent - size)
                        }
                    };
                    let x = place(&mut rng, W, w, travel[0]);
                    let y = place(&mut rng, H, h, travel[1]);
                    ActorSpec {
                        class_id: (k as u32 + i as u32) % 3,
                        enter,
                        exit: enter + dur - 1,
                        bbox: BoundingBox::new(x, y, x + w, y + h).expect("fixture box"),
                        velocity: v,
                        velocity_noise: opts.velocity_noise,
                    }
                })
                .collect();
            SceneSpec {
                format_version: SCENE_FORMAT_VERSION,
                video_id: format!("drift-{i:02}"),
                width: W,
                height: H,
                frames: FRAMES,
                seed: derive_seed(opts.seed, &[i as u64, 99]),
                actors,
                detector: DetectorNoise {
                    loc_sigma: 2.0,
                    tp_score_mean: 0.8,
                    tp_score_sigma: 0.1,
                    fp_score_mean: 0.3,
                    fp_score_sigma: 0.15,
                    miss_rate: 0.03,
                    fp_rate: 0.3,
                    fp_min_size: 30.0,
                    fp_max_size: 100.0,
                },
                proposals: ProposalNoise {
                    failure_rate: 0.3,
                    mean_failure_len: 4.0,
                },
            }
        })
        .collect()
}

/// Disjoint `(train, test)` fixtures; the training set uses the next seed
/// and `train-` video ids.
pub fn fixture_pair(opts: &FixtureOptions) -> (Vec<SceneSpec>, Vec<SceneSpec>) {
    let test = drifting_fixture(opts);
    let mut train = drifting_fixture(&FixtureOptions {
        seed: opts.seed.wrapping_add(1),
        ..*opts
    });
    for s in &mut train {
        s.video_id = format!("train-{}", s.video_id);
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn one_actor(velocity: [f64; 2], noise: DetectorNoise) -> SceneSpec {
        SceneSpec {
            format_version: SCENE_FORMAT_VERSION,
            video_id: "t".into(),
            width: 200.0,
            height: 100.0,
            frames: 30,
            seed: 5,
            actors: vec![ActorSpec {
                class_id: 2,
                enter: 0,
                exit: 29,
                bbox: bb(10.0, 10.0, 50.0, 60.0),
                velocity,
                velocity_noise: 0.0,
            }],
            detector: noise,
            proposals: ProposalNoise::default(),
        }
    }

    #[test]
    fn constant_velocity_kinematics() {
        let scene = generate_scene(&one_actor([2.0, 0.0], DetectorNoise::noiseless())).unwrap();
        let t = &scene.tracks[0];
        assert_eq!((t.tube.start, t.tube.end), (0, 29));
        for (i, b) in t.tube.boxes.iter().enumerate() {
            assert_eq!(b.x1(), 10.0 + 2.0 * i as f64);
            assert_eq!(t.motion[i], Motion::new(2.0, 0.0));
        }
    }

    #[test]
    fn actor_leaving_the_image_ends_its_tube() {
        let mut spec = one_actor([10.0, 0.0], DetectorNoise::noiseless());
        spec.actors[0].bbox = bb(150.0, 10.0, 190.0, 60.0);
        let scene = generate_scene(&spec).unwrap();
        let t = &scene.tracks[0];
        // x1 reaches 200 at frame 5
        assert_eq!(t.tube.end, 4);
        assert_eq!(t.tube.boxes[4].x2(), 200.0);
    }

    #[test]
    fn invisible_actor_rejected() {
        let mut spec = one_actor([0.0, 0.0], DetectorNoise::noiseless());
        spec.actors[0].bbox = bb(500.0, 10.0, 540.0, 60.0);
        assert!(matches!(generate_scene(&spec), Err(Error::InvalidScene(_))));
        let mut bad = one_actor([0.0, 0.0], DetectorNoise::noiseless());
        bad.detector.miss_rate = 1.5;
        assert!(generate_scene(&bad).is_err());
    }

    #[test]
    fn determinism() {
        let specs = drifting_fixture(&FixtureOptions::default());
        for s in &specs {
            let a = generate_scene(s).unwrap();
            let b = generate_scene(s).unwrap();
            assert_eq!(a, b);
            assert_eq!(render_detections(&a), render_detections(&b));
            assert_eq!(a.tracks.len(), s.actors.len());
        }
    }

    #[test]
    fn noiseless_channel_reproduces_ground_truth() {
        let scene = generate_scene(&one_actor([1.0, 0.5], DetectorNoise::noiseless())).unwrap();
        let dets = render_detections(&scene);
        for (t, f) in dets.iter().enumerate() {
            assert_eq!(f.detections.len(), 1);
            let d = f.detections[0];
            assert_eq!(d.bbox, *scene.tracks[0].tube.box_at(t as u32).unwrap());
            assert_eq!((d.score, d.class_id), (1.0, 2));
        }
    }

    #[test]
    fn full_miss_rate_leaves_only_false_positives() {
        let mut noise = DetectorNoise::noiseless();
        noise.miss_rate = 1.0;
        noise.fp_rate = 0.5;
        noise.fp_score_mean = 0.3;
        let scene = generate_scene(&one_actor([1.0, 0.0], noise)).unwrap();
        let dets = render_detections(&scene);
        let total: usize = dets.iter().map(|f| f.detections.len()).sum();
        assert!(total > 0);
        for f in &dets {
            for d in &f.detections {
                assert!((d.score - 0.3).abs() < 1e-12);
                assert!(d.bbox.x2() <= 200.0 && d.bbox.y2() <= 100.0);
            }
        }
    }

    #[test]
    fn empirical_miss_rate() {
        let mut noise = DetectorNoise::noiseless();
        noise.miss_rate = 0.25;
        let mut spec = one_actor([0.0, 0.0], noise);
        spec.frames = 2000;
        spec.actors = (0..5)
            .map(|k| ActorSpec {
                class_id: 0,
                enter: 0,
                exit: 1999,
                bbox: bb(k as f64 * 35.0, 10.0, k as f64 * 35.0 + 30.0, 60.0),
                velocity: [0.0, 0.0],
                velocity_noise: 0.0,
            })
            .collect();
        let scene = generate_scene(&spec).unwrap();
        let found: usize = render_detections(&scene).iter().map(|f| f.detections.len()).sum();
        let miss = 1.0 - found as f64 / 10_000.0;
        assert!((miss - 0.25).abs() < 0.02, "{miss}");
    }

    #[test]
    fn mean_flow_matches_motion() {
        let mut spec = one_actor([3.0, -1.0], DetectorNoise::noiseless());
        spec.actors[0].velocity_noise = 0.0;
        let scene = generate_scene(&spec).unwrap();
        let b = *scene.tracks[0].tube.box_at(4).unwrap();
        assert_eq!(scene.mean_flow(4, &b), Motion::new(3.0, -1.0));
        // Half the box over static background halves the flow.
        let wide = bb(b.x1(), b.y1(), b.x2() + b.width(), b.y2());
        let m = scene.mean_flow(4, &wide);
        assert!((m.dx - 1.5).abs() < 1e-12 && (m.dy + 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_needs_an_aligned_proposal() {
        let scene = generate_scene(&one_actor([0.0, 0.0], DetectorNoise::noiseless())).unwrap();
        let oracle = DetectionOracle::new(&scene, OracleConfig::default());
        let gt = *scene.tracks[0].tube.box_at(3).unwrap();
        assert!(oracle.detect(3, &[]).is_empty());
        assert!(oracle.detect(3, &[gt.translate(30.0, 0.0).unwrap()]).is_empty());
        let dets = oracle.detect(3, &[gt]);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, gt);
        assert_eq!(dets[0].score, 1.0);
        let near = gt.translate(4.0, 0.0).unwrap();
        let d = oracle.detect(3, &[near])[0];
        assert!((d.bbox.x1() - (gt.x1() + 2.0)).abs() < 1e-9);
        assert!((d.score - iou(&near, &gt)).abs() < 1e-12);
    }

    #[test]
    fn cascade_trial_improves_tight_recall() {
        let t = cascade_trial(10, 10, 1).unwrap();
        let r1 = crate::proposals::recall_at_iou(&t.one_stage, &t.ground_truth, &[0.8]).unwrap();
        let r2 = crate::proposals::recall_at_iou(&t.two_stage, &t.ground_truth, &[0.8]).unwrap();
        assert!(r2[0].recall > r1[0].recall, "{r1:?} {r2:?}");
    }

    #[test]
    fn failure_bursts_hit_the_requested_rate() {
        let mut rng = stream(3, &[]);
        let noise = ProposalNoise {
            failure_rate: 0.3,
            mean_failure_len: 4.0,
        };
        let v = failure_bursts(&mut rng, 200_000, &noise);
        let rate = v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
        let bursts = v.windows(2).filter(|w| !w[0] && w[1]).count() as f64;
        let mean_len = v.iter().filter(|&&b| b).count() as f64 / bursts;
        assert!((mean_len - 4.0).abs() < 0.2, "{mean_len}");
    }

    #[test]
    fn scene_spec_json_requires_fields() {
        let spec = one_actor([1.0, 0.0], DetectorNoise::noiseless());
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&json).unwrap(), spec);
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v.as_object_mut().unwrap().remove("frames");
        let err = serde_json::from_value::<SceneSpec>(v).unwrap_err().to_string();
        assert!(err.contains("frames"), "{err}");
    }
}
