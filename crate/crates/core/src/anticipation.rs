//! Box-motion anticipation.
//!
//! A small affine regressor maps a detection at frame `t - K` (its box
//! geometry plus the mean motion inside it) to the box offsets expected at
//! frame `t`. The anticipated boxes are fed to the detector at frame `t` as
//! extra proposals.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{clip, decode_delta, encode_delta, BoundingBox, BoxDelta};
use crate::proposals::{assign_samples, SampleLabel};
use crate::seeding;

/// Number of regression inputs derived from a [`LanFeature`].
pub const INPUT_DIM: usize = 6;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Mean per-frame displacement (pixels / frame).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Motion {
    pub dx: f64,
    pub dy: f64,
}

impl Motion {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }
}

/// Box descriptor normalized by the image size, plus the motion inside the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanFeature {
    pub cx_norm: f64,
    pub cy_norm: f64,
    pub log_w: f64,
    pub log_h: f64,
    pub dx: f64,
    pub dy: f64,
}

impl LanFeature {
    pub fn new(bbox: &BoundingBox, motion: Motion, image_width: f64, image_height: f64) -> Result<Self> {
        if !bbox.has_positive_area() {
            return Err(Error::DegenerateBox(bbox.x1(), bbox.y1(), bbox.x2(), bbox.y2()));
        }
        let (cx, cy) = bbox.center();
        Ok(Self {
            cx_norm: cx / image_width,
            cy_norm: cy / image_height,
            log_w: bbox.width().ln(),
            log_h: bbox.height().ln(),
            dx: motion.dx,
            dy: motion.dy,
        })
    }

    /// Regression inputs. Motion enters relative to the box size so that the
    /// center offsets it implies are linear in the inputs.
    pub fn regression_inputs(&self) -> [f64; INPUT_DIM] {
        [
            self.cx_norm,
            self.cy_norm,
            self.log_w,
            self.log_h,
            self.dx / self.log_w.exp(),
            self.dy / self.log_h.exp(),
        ]
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

pub fn smooth_l1_derivative(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

fn delta_loss(pred: &BoxDelta, target: &BoxDelta) -> f64 {
    pred.to_array()
        .iter()
        .zip(target.to_array())
        .map(|(p, t)| smooth_l1(p - t))
        .sum()
}

/// Regression loss: smooth-L1 summed over the four offsets, counted for
/// positives only and normalized by the total number of boxes.
pub fn lan_loss(predicted: &[BoxDelta], target: &[BoxDelta], positive: &[bool]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch(predicted.len(), target.len()));
    }
    if predicted.len() != positive.len() {
        return Err(Error::LengthMismatch(predicted.len(), positive.len()));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("lan_loss"));
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|((p, t), _)| delta_loss(p, t))
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// One regression sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanSample {
    pub inputs: [f64; INPUT_DIM],
    pub target: BoxDelta,
    pub positive: bool,
}

/// Gradient of the loss with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LanGradient {
    pub weights: [[f64; INPUT_DIM]; 4],
    pub bias: [f64; 4],
}

/// Affine anticipation model for a fixed gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanModel {
    pub format_version: u32,
    pub gap: u32,
    /// Rows map standardized inputs to `tx, ty, tw, th`.
    pub weights: [[f64; INPUT_DIM]; 4],
    pub bias: [f64; 4],
    pub input_mean: [f64; INPUT_DIM],
    pub input_scale: [f64; INPUT_DIM],
}

impl LanModel {
    pub fn new(
        gap: u32,
        weights: [[f64; INPUT_DIM]; 4],
        bias: [f64; 4],
        input_mean: [f64; INPUT_DIM],
        input_scale: [f64; INPUT_DIM],
    ) -> Result<Self> {
        let m = Self {
            format_version: MODEL_FORMAT_VERSION,
            gap,
            weights,
            bias,
            input_mean,
            input_scale,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model that predicts no change.
    pub fn identity(gap: u32) -> Result<Self> {
        Self::new(gap, [[0.0; INPUT_DIM]; 4], [0.0; 4], [0.0; INPUT_DIM], [1.0; INPUT_DIM])
    }

    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 {
            return Err(invalid("gap", "must be at least 1"));
        }
        let finite = self.weights.iter().flatten().chain(&self.bias).chain(&self.input_mean).all(|v| v.is_finite());
        if !finite {
            return Err(invalid("weights", "must be finite"));
        }
        if self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("input_scale", "must be positive"));
        }
        Ok(())
    }

    fn standardize(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|k| (x[k] - self.input_mean[k]) / self.input_scale[k])
    }

    pub fn predict_inputs(&self, x: &[f64; INPUT_DIM]) -> BoxDelta {
        let z = self.standardize(x);
        let out: [f64; 4] = std::array::from_fn(|r| {
            self.bias[r] + self.weights[r].iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
        });
        BoxDelta::from_array(out)
    }

    pub fn predict(&self, feature: &LanFeature) -> BoxDelta {
        self.predict_inputs(&feature.regression_inputs())
    }

    /// Loss over `samples` and its analytic gradient.
    pub fn loss_and_gradient(&self, samples: &[LanSample]) -> Result<(f64, LanGradient)> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("lan samples"));
        }
        let n = samples.len() as f64;
        let mut loss = 0.0;
        let mut g = LanGradient {
            weights: [[0.0; INPUT_DIM]; 4],
            bias: [0.0; 4],
        };
        for s in samples.iter().filter(|s| s.positive) {
            let z = self.standardize(&s.inputs);
            let pred = self.predict_inputs(&s.inputs).to_array();
            let target = s.target.to_array();
            for r in 0..4 {
                let resid = pred[r] - target[r];
                loss += smooth_l1(resid);
                let d = smooth_l1_derivative(resid) / n;
                g.bias[r] += d;
                for (w, zk) in g.weights[r].iter_mut().zip(&z) {
                    *w += d * zk;
                }
            }
        }
        Ok((loss / n, g))
    }

    pub fn loss(&self, samples: &[LanSample]) -> Result<f64> {
        let preds: Vec<BoxDelta> = samples.iter().map(|s| self.predict_inputs(&s.inputs)).collect();
        let targets: Vec<BoxDelta> = samples.iter().map(|s| s.target).collect();
        let labels: Vec<bool> = samples.iter().map(|s| s.positive).collect();
        lan_loss(&preds, &targets, &labels)
    }

    /// Weights row-major followed by the bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(&self.bias).copied().collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != 4 * INPUT_DIM + 4 {
            return Err(Error::LengthMismatch(p.len(), 4 * INPUT_DIM + 4));
        }
        for r in 0..4 {
            self.weights[r].copy_from_slice(&p[r * INPUT_DIM..(r + 1) * INPUT_DIM]);
        }
        self.bias.copy_from_slice(&p[4 * INPUT_DIM..]);
        Ok(())
    }

    fn step(&mut self, g: &LanGradient, lr: f64) {
        for r in 0..4 {
            self.bias[r] -= lr * g.bias[r];
            for k in 0..INPUT_DIM {
                self.weights[r][k] -= lr * g.weights[r][k];
            }
        }
    }
}

impl LanGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(&self.bias).copied().collect()
    }
}

/// Detections at `t - K` paired with the ground truth at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LanTrainingPair {
    pub source: Vec<(BoundingBox, Motion)>,
    pub targets: Vec<BoundingBox>,
    pub image_width: f64,
    pub image_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub pos_threshold: f64,
    pub neg_threshold: f64,
}

impl Default for LanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            learning_rate: 0.5,
            seed: 0,
            pos_threshold: 0.7,
            neg_threshold: 0.3,
        }
    }
}

/// Labels each source detection against the frame-`t` ground truth and
/// builds regression samples; ignored detections are dropped.
pub fn build_samples(pairs: &[LanTrainingPair], pos_threshold: f64, neg_threshold: f64) -> Result<Vec<LanSample>> {
    let mut samples = Vec::new();
    for pair in pairs {
        let usable: Vec<&(BoundingBox, Motion)> = pair.source.iter().filter(|(b, _)| b.has_positive_area()).collect();
        let boxes: Vec<BoundingBox> = usable.iter().map(|(b, _)| *b).collect();
        let assignment = assign_samples(&boxes, &pair.targets, pos_threshold, neg_threshold)?;
        for ((bbox, motion), label) in usable.iter().zip(&assignment.labels) {
            let inputs = LanFeature::new(bbox, *motion, pair.image_width, pair.image_height)?.regression_inputs();
            let (target, positive) = match label {
                SampleLabel::Positive { gt } => match encode_delta(bbox, &pair.targets[*gt]) {
                    Ok(d) => (d, true),
                    Err(_) => continue,
                },
                SampleLabel::Negative => (BoxDelta::ZERO, false),
                SampleLabel::Ignored => continue,
            };
            samples.push(LanSample { inputs, target, positive });
        }
    }
    Ok(samples)
}

fn input_statistics(samples: &[LanSample]) -> ([f64; INPUT_DIM], [f64; INPUT_DIM]) {
    let n = samples.len() as f64;
    let mean: [f64; INPUT_DIM] = std::array::from_fn(|k| samples.iter().map(|s| s.inputs[k]).sum::<f64>() / n);
    let scale: [f64; INPUT_DIM] = std::array::from_fn(|k| {
        let var = samples.iter().map(|s| (s.inputs[k] - mean[k]).powi(2)).sum::<f64>() / n;
        if var > 1e-12 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, scale)
}

/// Full-batch gradient descent on the regression loss.
pub fn train_lan(pairs: &[LanTrainingPair], gap: u32, cfg: &LanTrainConfig) -> Result<LanModel> {
    train_lan_with_history(pairs, gap, cfg).map(|(m, _)| m)
}

/// [`train_lan`] that also returns the loss before each update and after
/// the last one (`epochs + 1` values). The returned model is the iterate
/// with the lowest loss, so its loss never exceeds the initial one.
pub fn train_lan_with_history(pairs: &[LanTrainingPair], gap: u32, cfg: &LanTrainConfig) -> Result<(LanModel, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(invalid("learning_rate", "must be positive"));
    }
    let samples = build_samples(pairs, cfg.pos_threshold, cfg.neg_threshold)?;
    if !samples.iter().any(|s| s.positive) {
        return Err(Error::NoPositives);
    }
    let (mean, scale) = input_statistics(&samples);
    let mut model = LanModel::new(gap, [[0.0; INPUT_DIM]; 4], [0.0; 4], mean, scale)?;
    let init = Normal::new(0.0, 1e-3).expect("valid normal");
    let mut rng = seeding::stream(cfg.seed, &[u64::from(gap)]);
    for w in model.weights.iter_mut().flatten() {
        *w = init.sample(&mut rng);
    }

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    for _ in 0..cfg.epochs {
        let (loss, grad) = model.loss_and_gradient(&samples)?;
        history.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = model.clone();
        }
        model.step(&grad, cfg.learning_rate);
    }
    let final_loss = model.loss_and_gradient(&samples)?.0;
    history.push(final_loss);
    if final_loss < best_loss {
        best = model;
    }
    Ok((best, history))
}

/// Which boxes are forwarded from frame `t - K` to frame `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnticipationStrategy {
    /// Frame-independent detection; proposals come from the cascade only.
    NonAnticipation,
    /// Earlier detections forwarded unchanged (zero motion).
    NonMotion,
    /// Earlier detections moved by a trained anticipation model.
    TrainedLan,
}

impl AnticipationStrategy {
    pub const ALL: [AnticipationStrategy; 3] = [Self::NonAnticipation, Self::NonMotion, Self::TrainedLan];

    pub fn label(&self) -> &'static str {
        match self {
            Self::NonAnticipation => "none",
            Self::NonMotion => "non-motion",
            Self::TrainedLan => "lan",
        }
    }

    pub fn uses_gap(&self) -> bool {
        !matches!(self, Self::NonAnticipation)
    }
}

impl std::str::FromStr for AnticipationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "non-anticipation" => Ok(Self::NonAnticipation),
            "non-motion" => Ok(Self::NonMotion),
            "lan" | "trained-lan" => Ok(Self::TrainedLan),
            other => Err(invalid("strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for AnticipationStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A strategy ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Anticipator {
    None,
    NonMotion,
    Lan(Box<LanModel>),
}

impl Anticipator {
    /// Boxes expected at frame `t` from detections (and their motion) at
    /// `t - K`, clipped to the image. Boxes that collapse to zero area are
    /// dropped.
    pub fn anticipate(&self, detections: &[(BoundingBox, Motion)], image_width: f64, image_height: f64) -> Vec<BoundingBox> {
        let moved = detections.iter().filter_map(|(b, m)| match self {
            Anticipator::None => None,
            Anticipator::NonMotion => Some(*b),
            Anticipator::Lan(model) => {
                let feature = LanFeature::new(b, *m, image_width, image_height).ok()?;
                decode_delta(b, &model.predict(&feature)).ok()
            }
        });
        moved
            .map(|b| clip(&b, image_width, image_height))
            .filter(BoundingBox::has_positive_area)
            .collect()
    }
}

/// Appends anticipated boxes not already present (exact equality).
pub fn augment_proposals(proposals: &[BoundingBox], anticipated: &[BoundingBox]) -> Vec<BoundingBox> {
    let mut out = proposals.to_vec();
    for a in anticipated {
        if !out.contains(a) {
            out.push(*a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
    }

    #[test]
    fn smooth_l1_is_c1_at_one() {
        let h = 1e-7;
        for x in [1.0f64, -1.0] {
            let left = (smooth_l1(x) - smooth_l1(x - h)) / h;
            let right = (smooth_l1(x + h) - smooth_l1(x)) / h;
            assert_abs_diff_eq!(left, x.signum(), epsilon = 1e-6);
            assert_abs_diff_eq!(right, x.signum(), epsilon = 1e-6);
            assert_abs_diff_eq!(smooth_l1(x - h), smooth_l1(x + h), epsilon = 1e-6);
        }
    }

    #[test]
    fn lan_loss_examples() {
        let z = BoxDelta::ZERO;
        let d = BoxDelta::new(0.5, 0.0, 0.0, 0.0);
        assert_eq!(lan_loss(&[d, d], &[z, z], &[false, false]).unwrap(), 0.0);
        assert_eq!(lan_loss(&[d], &[d], &[true]).unwrap(), 0.0);
        assert_eq!(lan_loss(&[d, z], &[z, z], &[true, false]).unwrap(), 0.0625);
        assert_eq!(lan_loss(&[], &[], &[]), Err(Error::EmptyInput("lan_loss")));
        assert!(lan_loss(&[d], &[d, d], &[true]).is_err());
    }

    fn random_samples(seed: u64, n: usize) -> Vec<LanSample> {
        let mut rng = seeding::stream(seed, &[]);
        (0..n)
            .map(|_| LanSample {
                inputs: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
                target: BoxDelta::from_array(std::array::from_fn(|_| rng.random_range(-1.5..1.5))),
                positive: rng.random_bool(0.6),
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let samples = random_samples(seed, 12);
            let mut model = LanModel::identity(4).unwrap();
            let mut rng = seeding::stream(seed, &[7]);
            let p: Vec<f64> = (0..28).map(|_| rng.random_range(-0.5..0.5)).collect();
            model.set_parameters(&p).unwrap();
            let (_, g) = model.loss_and_gradient(&samples).unwrap();
            let analytic = g.flatten();
            let h = 1e-6;
            let numeric: Vec<f64> = (0..p.len())
                .map(|i| {
                    let mut m = model.clone();
                    let mut q = p.clone();
                    q[i] += h;
                    m.set_parameters(&q).unwrap();
                    let up = m.loss(&samples).unwrap();
                    q[i] -= 2.0 * h;
                    m.set_parameters(&q).unwrap();
                    let down = m.loss(&samples).unwrap();
                    (up - down) / (2.0 * h)
                })
                .collect();
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-5, "seed {seed}: {}", diff / norm);
        }
    }

    #[test]
    fn loss_and_gradient_agree_with_lan_loss() {
        let samples = random_samples(3, 20);
        let model = LanModel::identity(2).unwrap();
        let (a, _) = model.loss_and_gradient(&samples).unwrap();
        assert_abs_diff_eq!(a, model.loss(&samples).unwrap(), epsilon = 1e-12);
    }

    fn velocity_oracle(gap: u32) -> LanModel {
        let mut w = [[0.0; INPUT_DIM]; 4];
        w[0][4] = gap as f64;
        w[1][5] = gap as f64;
        LanModel::new(gap, w, [0.0; 4], [0.0; INPUT_DIM], [1.0; INPUT_DIM]).unwrap()
    }

    #[test]
    fn oracle_model_shifts_by_velocity_times_gap() {
        let b = bb(100.0, 100.0, 140.0, 160.0);
        let out = Anticipator::Lan(Box::new(velocity_oracle(8))).anticipate(&[(b, Motion::new(2.0, 0.0))], 400.0, 400.0);
        assert!(out[0].max_abs_diff(&bb(116.0, 100.0, 156.0, 160.0)) < 1e-9);
    }

    #[test]
    fn non_motion_is_identity_and_outputs_are_clipped() {
        let b = bb(10.0, 10.0, 50.0, 50.0);
        let m = Motion::new(5.0, 5.0);
        assert_eq!(Anticipator::NonMotion.anticipate(&[(b, m)], 100.0, 100.0), vec![b]);
        assert!(Anticipator::None.anticipate(&[(b, m)], 100.0, 100.0).is_empty());
        let edge = bb(80.0, 10.0, 98.0, 30.0);
        let out = Anticipator::Lan(Box::new(velocity_oracle(4))).anticipate(&[(edge, Motion::new(3.0, 0.0))], 100.0, 100.0);
        assert_eq!(out[0].x2(), 100.0);
        assert!((out[0].x1() - 92.0).abs() < 1e-9);
    }

    #[test]
    fn augment_examples() {
        let props: Vec<BoundingBox> = (0..300).map(|i| bb(i as f64, 0.0, i as f64 + 5.0, 5.0)).collect();
        assert_eq!(augment_proposals(&props, &[]), props);
        let extra: Vec<BoundingBox> = (0..5).map(|i| bb(i as f64, 50.0, i as f64 + 5.0, 55.0)).collect();
        assert_eq!(augment_proposals(&props, &extra).len(), 305);
        assert_eq!(augment_proposals(&props, &[props[3], props[3]]).len(), 300);
    }

    fn moving_pairs(velocity: (f64, f64), gap: u32, frames: usize) -> Vec<LanTrainingPair> {
        let mut rng = seeding::stream(11, &[]);
        (0..frames)
            .map(|_| {
                let x = rng.random_range(20.0..200.0);
                let y = rng.random_range(20.0..150.0);
                let w = rng.random_range(30.0..60.0);
                let h = rng.random_range(40.0..70.0);
                let vx = velocity.0 * rng.random_range(0.5..1.5);
                let vy = velocity.1 * rng.random_range(0.5..1.5);
                let src = bb(x, y, x + w, y + h);
                let k = gap as f64;
                let dst = bb(x + vx * k, y + vy * k, x + w + vx * k, y + h + vy * k);
                LanTrainingPair {
                    source: vec![(src, Motion::new(vx, vy))],
                    targets: vec![dst],
                    image_width: 320.0,
                    image_height: 240.0,
                }
            })
            .collect()
    }

    #[test]
    fn zero_motion_training_learns_identity() {
        let pairs = moving_pairs((0.0, 0.0), 8, 40);
        let model = train_lan(&pairs, 8, &LanTrainConfig::default()).unwrap();
        for p in &pairs {
            let (b, m) = p.source[0];
            let d = model.predict(&LanFeature::new(&b, m, 320.0, 240.0).unwrap());
            assert!(d.to_array().iter().all(|v| v.abs() < 1e-2), "{d:?}");
        }
    }

    #[test]
    fn training_learns_constant_velocity() {
        let pairs = moving_pairs((2.0, 1.0), 8, 60);
        let cfg = LanTrainConfig { epochs: 1500, ..Default::default() };
        let (model, hist) = train_lan_with_history(&pairs, 8, &cfg).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
        let lan = Anticipator::Lan(Box::new(model));
        let (mut lan_iou, mut still_iou) = (0.0, 0.0);
        for p in &pairs {
            let a = lan.anticipate(&p.source, 320.0, 240.0);
            lan_iou += crate::geometry::iou(&a[0], &p.targets[0]);
            still_iou += crate::geometry::iou(&p.source[0].0, &p.targets[0]);
        }
        assert!(lan_iou > still_iou, "{lan_iou} vs {still_iou}");
        assert!(lan_iou / pairs.len() as f64 > 0.9);
    }

    #[test]
    fn small_step_training_is_monotone() {
        let pairs = moving_pairs((2.0, -1.0), 8, 30);
        let cfg = LanTrainConfig { epochs: 200, learning_rate: 1e-3, ..Default::default() };
        let (_, hist) = train_lan_with_history(&pairs, 8, &cfg).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn training_without_positives_is_rejected() {
        let pair = LanTrainingPair {
            source: vec![(bb(0.0, 0.0, 10.0, 10.0), Motion::default())],
            targets: vec![bb(100.0, 100.0, 110.0, 110.0)],
            image_width: 200.0,
            image_height: 200.0,
        };
        assert_eq!(train_lan(&[pair], 2, &LanTrainConfig::default()), Err(Error::NoPositives));
        assert_eq!(train_lan(&[], 2, &LanTrainConfig::default()), Err(Error::EmptyInput("training pairs")));
    }

    #[test]
    fn model_json_round_trip() {
        let m = velocity_oracle(8);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<LanModel>(&s).unwrap(), m);
    }

    #[test]
    fn strategy_labels_parse() {
        for s in AnticipationStrategy::ALL {
            assert_eq!(s.label().parse::<AnticipationStrategy>().unwrap(), s);
        }
        assert!("bogus".parse::<AnticipationStrategy>().is_err());
    }
}
