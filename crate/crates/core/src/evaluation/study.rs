use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::{mean_ap, Interpolation, VideoTubes};
use crate::anticipation::{augment_proposals, train_lan, AnticipationStrategy, Anticipator, LanTrainConfig, LanTrainingPair};
use crate::error::{invalid, Error, Result};
use crate::geometry::BoundingBox;
use crate::linking::{extract_tubes, ActionTube, Detection, ExtractConfig, FrameDetections, LinkingParams};
use crate::proposals::{generate_anchors, AnchorConfig, CascadeConfig};
use crate::seeding::derive_seed;
use crate::synthdata::{
    cascade_proposals, fixture_pair, generate_scene, render_detections, DetectionOracle, FixtureOptions, OracleConfig,
    Scene, SceneSpec,
};
use crate::trimming::{avg_class_length, trim_action_tube, PenaltyMode, TrimmingParams};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Scenes used for the length table and for training the model.
    pub train_scenes: Vec<SceneSpec>,
    pub test_scenes: Vec<SceneSpec>,
    pub strategies: Vec<AnticipationStrategy>,
    pub gaps: Vec<u32>,
    pub deltas: Vec<f64>,
    /// Every scene is regenerated per seed.
    pub seeds: Vec<u64>,
    pub linking: LinkingParams,
    pub extract: ExtractConfig,
    pub penalty: PenaltyMode,
    pub interpolation: Interpolation,
    pub oracle: OracleConfig,
    pub anchors: AnchorConfig,
    pub top_n: usize,
    pub lan: LanTrainConfig,
}

impl StudyConfig {
    /// Study over the given scenes with default settings; training scenes
    /// are reseeded copies of the test scenes.
    pub fn new(test_scenes: Vec<SceneSpec>) -> Self {
        let train_scenes = test_scenes.iter().map(|s| s.reseeded(&[0x7a11])).collect();
        Self {
            train_scenes,
            test_scenes,
            strategies: AnticipationStrategy::ALL.to_vec(),
            gaps: vec![2, 8, 16],
            deltas: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            seeds: vec![1, 2, 3],
            linking: LinkingParams::default(),
            extract: ExtractConfig::default(),
            penalty: PenaltyMode::Absolute,
            interpolation: Interpolation::EveryPoint,
            oracle: OracleConfig::default(),
            anchors: AnchorConfig {
                stride: 32.0,
                scales: vec![48.0, 96.0],
                aspect_ratios: vec![1.0, 2.0],
            },
            top_n: 300,
            lan: LanTrainConfig {
                epochs: 1500,
                ..LanTrainConfig::default()
            },
        }
    }

    /// Drifting-scene fixture with disjoint training and test scenes.
    pub fn standard() -> Self {
        Self::from_fixture(&FixtureOptions::default())
    }

    pub fn from_fixture(opts: &FixtureOptions) -> Self {
        let (train, test) = fixture_pair(opts);
        Self {
            train_scenes: train,
            ..Self::new(test)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.test_scenes.is_empty() {
            return Err(Error::EmptyInput("test scenes"));
        }
        if self.train_scenes.is_empty() {
            return Err(Error::EmptyInput("training scenes"));
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptyInput("seeds"));
        }
        if self.strategies.is_empty() {
            return Err(Error::EmptyInput("strategies"));
        }
        if self.deltas.is_empty() {
            return Err(Error::EmptyInput("deltas"));
        }
        if self.strategies.iter().any(|s| s.uses_gap()) && self.gaps.is_empty() {
            return Err(Error::EmptyInput("gaps"));
        }
        if self.gaps.contains(&0) {
            return Err(invalid("gaps", "K must be at least 1"));
        }
        self.anchors.validate()
    }

    /// (strategy, K) cells in report order.
    pub fn cells(&self) -> Vec<(AnticipationStrategy, Option<u32>)> {
        let mut strategies = self.strategies.clone();
        strategies.sort();
        strategies.dedup();
        let mut out = Vec::new();
        for s in strategies {
            if s.uses_gap() {
                out.extend(self.gaps.iter().map(|&k| (s, Some(k))));
            } else {
                out.push((s, None));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub strategy: AnticipationStrategy,
    pub gap: Option<u32>,
    pub delta: f64,
    /// Mean over seeds.
    pub map: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn map_at(&self, strategy: AnticipationStrategy, gap: Option<u32>, delta: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.gap == gap && (r.delta - delta).abs() < 1e-12)
            .map(|r| r.map)
    }

    /// Long-format CSV with header `strategy,K,delta,mAP`; K is empty for
    /// strategies without a gap.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,K,delta,mAP\n");
        for r in &self.rows {
            let k = r.gap.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{:.6}", r.strategy, k, r.delta, r.map);
        }
        out
    }
}

/// Runs the detector frame by frame. From frame `gap` on, detections made
/// `gap` frames earlier are forwarded by the anticipator and appended to
/// that frame's proposals.
pub fn detect_video(
    scene: &Scene,
    proposals: &[Vec<BoundingBox>],
    anticipator: &Anticipator,
    gap: u32,
    oracle: &OracleConfig,
) -> Vec<FrameDetections> {
    let spec = &scene.spec;
    let detector = DetectionOracle::new(scene, *oracle);
    let mut frames: Vec<Vec<Detection>> = Vec::with_capacity(proposals.len());
    for (t, props) in proposals.iter().enumerate() {
        let t32 = t as u32;
        let dets = if gap > 0 && t32 >= gap && !matches!(anticipator, Anticipator::None) {
            let src = (t32 - gap) as usize;
            let moved: Vec<_> = frames[src]
                .iter()
                .map(|d| (d.bbox, scene.mean_flow(src as u32, &d.bbox)))
                .collect();
            let extra = anticipator.anticipate(&moved, spec.width, spec.height);
            detector.detect(t32, &augment_proposals(props, &extra))
        } else {
            detector.detect(t32, props)
        };
        frames.push(dets);
    }
    frames
        .into_iter()
        .enumerate()
        .map(|(t, detections)| FrameDetections {
            frame_index: t as u32,
            detections,
        })
        .collect()
}

/// Links and trims one video. Single-frame tubes and classes without an
/// average length are passed through untrimmed.
pub fn tubes_for_video(
    frames: &[FrameDetections],
    linking: &LinkingParams,
    extract: &ExtractConfig,
    trimming: &TrimmingParams,
) -> Result<Vec<ActionTube>> {
    let mut out = Vec::new();
    for tube in extract_tubes(frames, linking, extract)? {
        match trim_action_tube(&tube, trimming, linking) {
            Ok((trimmed, _)) => out.push(trimmed),
            Err(Error::TubeTooShort(_)) => out.push(tube),
            Err(Error::MissingClassLength(c)) => {
                warn!("no average length for class {c}; tube kept untrimmed");
                out.push(tube);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Training pairs: noisy detections at `t - gap` against the ground truth at `t`.
fn training_pairs(scenes: &[Scene], gap: u32) -> Vec<LanTrainingPair> {
    let mut pairs = Vec::new();
    for scene in scenes {
        let dets = render_detections(scene);
        for t in gap..scene.spec.frames {
            let src = t - gap;
            let source: Vec<_> = dets[src as usize]
                .detections
                .iter()
                .map(|d| (d.bbox, scene.mean_flow(src, &d.bbox)))
                .collect();
            let targets: Vec<BoundingBox> = scene.gt_at(t).into_iter().map(|g| g.bbox).collect();
            if source.is_empty() || targets.is_empty() {
                continue;
            }
            pairs.push(LanTrainingPair {
                source,
                targets,
                image_width: scene.spec.width,
                image_height: scene.spec.height,
            });
        }
    }
    pairs
}

struct SeedContext {
    test: Vec<Scene>,
    proposals: Vec<Vec<Vec<BoundingBox>>>,
    trimming: TrimmingParams,
    models: BTreeMap<u32, Anticipator>,
}

fn prepare_seed(cfg: &StudyConfig, seed: u64) -> Result<SeedContext> {
    let train: Vec<Scene> = cfg
        .train_scenes
        .iter()
        .map(|s| generate_scene(&s.reseeded(&[seed, 1])))
        .collect::<Result<_>>()?;
    let test: Vec<Scene> = cfg
        .test_scenes
        .iter()
        .map(|s| generate_scene(&s.reseeded(&[seed, 2])))
        .collect::<Result<_>>()?;
    let gt: Vec<ActionTube> = train.iter().flat_map(Scene::gt_tubes).collect();
    let trimming = TrimmingParams {
        avg_length: avg_class_length(&gt),
        mode: cfg.penalty,
    };

    let proposals = test
        .par_iter()
        .map(|scene| {
            let (w, h) = (scene.spec.width, scene.spec.height);
            let anchors = generate_anchors(&cfg.anchors, w, h)?;
            let cascade = CascadeConfig {
                top_n: cfg.top_n,
                ..CascadeConfig::new(w, h)
            };
            (0..scene.spec.frames)
                .map(|t| cascade_proposals(scene, t, &anchors, &cascade))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models = BTreeMap::new();
    if cfg.strategies.contains(&AnticipationStrategy::TrainedLan) {
        let trained = cfg
            .gaps
            .par_iter()
            .map(|&k| {
                let lan = LanTrainConfig {
                    seed: derive_seed(seed, &[u64::from(k)]),
                    ..cfg.lan
                };
                train_lan(&training_pairs(&train, k), k, &lan).map(|m| (k, Anticipator::Lan(Box::new(m))))
            })
            .collect::<Result<Vec<_>>>()?;
        models.extend(trained);
    }
    Ok(SeedContext {
        test,
        proposals,
        trimming,
        models,
    })
}

fn run_cell(cfg: &StudyConfig, ctx: &SeedContext, strategy: AnticipationStrategy, gap: Option<u32>) -> Result<Vec<f64>> {
    let k = gap.unwrap_or(0);
    let anticipator = match strategy {
        AnticipationStrategy::NonAnticipation => Anticipator::None,
        AnticipationStrategy::NonMotion => Anticipator::NonMotion,
        AnticipationStrategy::TrainedLan => ctx.models[&k].clone(),
    };
    let mut preds = Vec::with_capacity(ctx.test.len());
    let mut gts = Vec::with_capacity(ctx.test.len());
    for (scene, props) in ctx.test.iter().zip(&ctx.proposals) {
        let frames = detect_video(scene, props, &anticipator, k, &cfg.oracle);
        preds.push(VideoTubes {
            video_id: scene.spec.video_id.clone(),
            tubes: tubes_for_video(&frames, &cfg.linking, &cfg.extract, &ctx.trimming)?,
        });
        gts.push(VideoTubes {
            video_id: scene.spec.video_id.clone(),
            tubes: scene.gt_tubes(),
        });
    }
    Ok(mean_ap(&preds, &gts, &cfg.deltas, cfg.interpolation)?.into_iter().map(|r| r.map).collect())
}

/// Every (strategy, K) cell on every seed, with common random numbers
/// across strategies; rows hold the per-cell mean over seeds.
pub fn run_strategy_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let cells = cfg.cells();
    let per_seed: Vec<Vec<Vec<f64>>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let ctx = prepare_seed(cfg, seed)?;
            debug!("seed {seed}: scenes and models ready");
            cells.par_iter().map(|&(s, k)| run_cell(cfg, &ctx, s, k)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cells.len() * cfg.deltas.len());
    for (c, &(strategy, gap)) in cells.iter().enumerate() {
        for (d, &delta) in cfg.deltas.iter().enumerate() {
            let values: Vec<f64> = per_seed.iter().map(|s| s[c][d]).collect();
            rows.push(StudyRow {
                strategy,
                gap,
                delta,
                map: values.iter().sum::<f64>() / values.len() as f64,
                per_seed: values,
            });
        }
    }
    Ok(StudyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{ActorSpec, DetectorNoise, ProposalNoise, SCENE_FORMAT_VERSION};

    #[test]
    fn row_count_follows_cells() {
        let mut cfg = StudyConfig::standard();
        assert_eq!(cfg.cells().len(), 2 * 3 + 1);
        cfg.strategies = vec![AnticipationStrategy::NonAnticipation];
        assert_eq!(cfg.cells(), vec![(AnticipationStrategy::NonAnticipation, None)]);
    }

    fn small_spec() -> SceneSpec {
        SceneSpec {
            format_version: SCENE_FORMAT_VERSION,
            video_id: "s".into(),
            width: 160.0,
            height: 120.0,
            frames: 20,
            seed: 4,
            actors: vec![ActorSpec {
                class_id: 0,
                enter: 2,
                exit: 17,
                bbox: BoundingBox::new(10.0, 20.0, 50.0, 80.0).unwrap(),
                velocity: [2.0, 0.0],
                velocity_noise: 0.0,
            }],
            detector: DetectorNoise::noiseless(),
            proposals: ProposalNoise::default(),
        }
    }

    #[test]
    fn tiny_study_is_deterministic_and_well_formed() {
        let mut cfg = StudyConfig::new(vec![small_spec()]);
        cfg.gaps = vec![2];
        cfg.seeds = vec![1, 2];
        cfg.lan.epochs = 50;
        let a = run_strategy_study(&cfg).unwrap();
        let b = run_strategy_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3 * cfg.deltas.len());
        let csv = a.to_csv();
        assert!(csv.starts_with("strategy,K,delta,mAP\nnone,,0.05,"));
        assert_eq!(csv.lines().count(), 1 + a.rows.len());
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.map));
        }
    }

    #[test]
    fn without_motion_the_model_matches_forwarding() {
        let opts = FixtureOptions {
            scenes: 4,
            speed: (0.0, 0.0),
            velocity_noise: 0.0,
            ..FixtureOptions::default()
        };
        let mut cfg = StudyConfig::from_fixture(&opts);
        cfg.strategies = vec![AnticipationStrategy::NonMotion, AnticipationStrategy::TrainedLan];
        cfg.gaps = vec![8];
        cfg.seeds = vec![1];
        cfg.deltas = vec![0.2];
        let r = run_strategy_study(&cfg).unwrap();
        let nm = r.map_at(AnticipationStrategy::NonMotion, Some(8), 0.2).unwrap();
        let lan = r.map_at(AnticipationStrategy::TrainedLan, Some(8), 0.2).unwrap();
        assert!((nm - lan).abs() < 0.05, "non-motion {nm}, lan {lan}");
    }

    #[test]
    fn rejects_empty_inputs() {
        let mut cfg = StudyConfig::new(vec![small_spec()]);
        cfg.seeds.clear();
        assert_eq!(run_strategy_study(&cfg), Err(Error::EmptyInput("seeds")));
        let cfg = StudyConfig::new(vec![]);
        assert!(run_strategy_study(&cfg).is_err());
    }
}
