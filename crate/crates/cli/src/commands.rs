use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use cpla_core::anticipation::AnticipationStrategy;
use cpla_core::evaluation::{mean_ap, run_strategy_study, Interpolation, StudyConfig, StudyReport};
use cpla_core::formats::{
    at, read_json, write_json, DetectionFile, ImageBoxes, LengthTable, ProposalFile, TubeFile, FORMAT_VERSION,
};
use cpla_core::linking::{extract_tubes, ExtractConfig};
use cpla_core::proposals::{is_non_increasing, recall_at_iou};
use cpla_core::synthdata::{cascade_trial, fixture_pair, generate_scene, render_detections, FixtureOptions};
use cpla_core::trimming::{avg_class_length, trim_action_tube};
use cpla_core::{BoundingBox, LinkingParams, PenaltyMode, SceneSpec, TrimmingParams, VideoTubes};

use crate::error::CliError;
use crate::{CascadeSimArgs, EvalArgs, FixtureArgs, LinkArgs, RecallArgs, StudyArgs, TrimArgs};

type CmdResult = Result<(), CliError>;

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn simulate(spec_path: &Path, out: &Path) -> CmdResult {
    let spec: SceneSpec = read_json(spec_path)?;
    let scene = generate_scene(&spec).map_err(at(spec_path))?;
    create_dir(out)?;
    let gt = TubeFile::from_videos(&[VideoTubes {
        video_id: spec.video_id.clone(),
        tubes: scene.gt_tubes(),
    }]);
    write_json(&out.join("gt.json"), &gt)?;

    let mut dets = DetectionFile::from_frames(&spec.video_id, &render_detections(&scene));
    for f in &mut dets.frames {
        for d in &mut f.detections {
            d.motion = Some(scene.mean_flow(f.frame_index, &d.bbox));
        }
    }
    write_json(&out.join("dets.json"), &dets)?;
    info!("{}: {} tubes, {} frames", spec.video_id, gt.tubes.len(), dets.frames.len());
    Ok(())
}

pub fn link(a: &LinkArgs) -> CmdResult {
    let params = LinkingParams::new(a.beta)?;
    let file: DetectionFile = read_json(&a.detections)?;
    let frames = file.to_frames().map_err(at(&a.detections))?;
    let cfg = ExtractConfig {
        max_tubes: a.max_tubes,
        min_mean_link_score: a.min_score,
    };
    let tubes = extract_tubes(&frames, &params, &cfg)?;
    info!("{}: linked {} tubes", file.video_id, tubes.len());
    let out = TubeFile::from_videos(&[VideoTubes {
        video_id: file.video_id,
        tubes,
    }]);
    Ok(write_json(&a.out, &out)?)
}

fn read_tubes(path: &Path) -> Result<Vec<VideoTubes>, CliError> {
    let file: TubeFile = read_json(path)?;
    Ok(file.to_videos().map_err(at(path))?)
}

pub fn trim(a: &TrimArgs) -> CmdResult {
    let mode: PenaltyMode = a.mode.parse()?;
    let linking = LinkingParams::new(a.beta)?;
    let avg_length = match (&a.avg_len, &a.training_tubes) {
        (Some(table), _) => read_json::<LengthTable>(table)?.avg_length,
        (None, Some(training)) => {
            let tubes: Vec<_> = read_tubes(training)?.into_iter().flat_map(|v| v.tubes).collect();
            avg_class_length(&tubes)
        }
        (None, None) => return Err(CliError::Usage("one of --avg-len or --training-tubes is required".into())),
    };
    let params = TrimmingParams { avg_length, mode };
    let mut videos = read_tubes(&a.tubes)?;
    for v in &mut videos {
        for tube in &mut v.tubes {
            if tube.len() < 2 {
                warn!("{}: single-frame tube of class {} at frame {} kept as is", v.video_id, tube.class_id, tube.start);
                continue;
            }
            *tube = trim_action_tube(tube, &params, &linking)?.0;
        }
    }
    Ok(write_json(&a.out, &TubeFile::from_videos(&videos))?)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let interp = match a.interpolation.as_str() {
        "every-point" => Interpolation::EveryPoint,
        "eleven-point" => Interpolation::ElevenPoint,
        other => return Err(CliError::Usage(format!("unknown interpolation `{other}`"))),
    };
    let gts = read_tubes(&a.ground_truth)?;
    let preds = read_tubes(&a.tubes)?;
    let results = mean_ap(&preds, &gts, &a.deltas, interp)?;
    let classes: BTreeSet<u32> = results.iter().flat_map(|r| r.per_class.keys().copied()).collect();

    let mut out = String::from("delta,mAP");
    if a.per_class {
        for c in &classes {
            let _ = write!(out, ",class_{c}");
        }
    }
    out.push('\n');
    for r in &results {
        let _ = write!(out, "{},{:.6}", r.delta, r.map);
        if a.per_class {
            for c in &classes {
                let _ = write!(out, ",{:.6}", r.per_class[c]);
            }
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

fn read_spec_dir(dir: &Path) -> Result<Vec<SceneSpec>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("{}: no scene specs (*.json)", dir.display())));
    }
    paths.iter().map(|p| Ok(read_json::<SceneSpec>(p)?)).collect()
}

fn summary(report: &StudyReport, gaps: &[u32]) -> Vec<String> {
    let delta = 0.2;
    let mut lines = Vec::new();
    let none = report.map_at(AnticipationStrategy::NonAnticipation, None, delta);
    for &k in gaps {
        let nm = report.map_at(AnticipationStrategy::NonMotion, Some(k), delta);
        let lan = report.map_at(AnticipationStrategy::TrainedLan, Some(k), delta);
        let (Some(lan), Some(nm), Some(none)) = (lan, nm, none) else {
            continue;
        };
        let verdict = if lan > nm && nm > none { "holds" } else { "violated" };
        lines.push(format!(
            "delta={delta} K={k}: lan {lan:.4}, non-motion {nm:.4}, none {none:.4}; ordering lan > non-motion > none {verdict}"
        ));
    }
    lines
}

pub fn study(a: &StudyArgs) -> CmdResult {
    let strategies = a
        .strategies
        .iter()
        .map(|s| s.parse::<AnticipationStrategy>())
        .collect::<Result<Vec<_>, _>>()?;
    let test = read_spec_dir(&a.spec_dir)?;
    let mut cfg = StudyConfig::new(test);
    if let Some(dir) = &a.train_dir {
        cfg.train_scenes = read_spec_dir(dir)?;
    }
    cfg.strategies = strategies;
    cfg.gaps = a.gaps.clone();
    cfg.seeds = a.seeds.clone();
    cfg.deltas = a.deltas.clone();
    if let Some(e) = a.epochs {
        cfg.lan.epochs = e;
    }
    let report = run_strategy_study(&cfg)?;
    let csv = report.to_csv();
    match &a.out {
        Some(path) => fs::write(path, csv).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    for line in summary(&report, &cfg.gaps) {
        eprintln!("{line}");
    }
    Ok(())
}

pub fn proposal_recall(a: &RecallArgs) -> CmdResult {
    let gt: ProposalFile = read_json(&a.gt)?;
    let gt_boxes: Vec<Vec<BoundingBox>> = gt.images.iter().map(|i| i.boxes.clone()).collect();
    let labelled = a.proposals.len() > 1;
    let mut out = String::from(if labelled { "label,delta,recall\n" } else { "delta,recall\n" });
    for path in &a.proposals {
        let file: ProposalFile = read_json(path)?;
        let curve = recall_at_iou(&gt.aligned_with(&file), &gt_boxes, &a.thresholds).map_err(at(path))?;
        let mut sorted = a.thresholds.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted == a.thresholds && !is_non_increasing(&curve) {
            return Err(CliError::Runtime(format!("{}: recall curve increases with the threshold", path.display())));
        }
        let label = file
            .label
            .clone()
            .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        for p in &curve {
            if labelled {
                let _ = write!(out, "{label},");
            }
            let _ = writeln!(out, "{},{:.6}", p.threshold, p.recall);
        }
    }
    print!("{out}");
    Ok(())
}

pub fn cascade_sim(a: &CascadeSimArgs) -> CmdResult {
    let trial = cascade_trial(a.images, a.boxes_per_image, a.seed)?;
    create_dir(&a.out)?;
    let file = |label: &str, boxes: &[Vec<BoundingBox>]| ProposalFile {
        format_version: FORMAT_VERSION,
        label: Some(label.into()),
        images: boxes
            .iter()
            .enumerate()
            .map(|(i, b)| ImageBoxes {
                image_id: format!("img-{i:04}"),
                boxes: b.clone(),
            })
            .collect(),
    };
    write_json(&a.out.join("gt_boxes.json"), &file("ground-truth", &trial.ground_truth))?;
    write_json(&a.out.join("one_stage.json"), &file("one-stage", &trial.one_stage))?;
    write_json(&a.out.join("two_stage.json"), &file("two-stage", &trial.two_stage))?;
    Ok(())
}

pub fn fixture(a: &FixtureArgs) -> CmdResult {
    let mut opts = FixtureOptions {
        scenes: a.scenes,
        seed: a.seed,
        ..FixtureOptions::default()
    };
    if a.still {
        opts.speed = (0.0, 0.0);
        opts.velocity_noise = 0.0;
    }
    let (train, test) = fixture_pair(&opts);
    for (sub, specs) in [("train", train), ("test", test)] {
        let dir = a.out.join(sub);
        create_dir(&dir)?;
        for s in &specs {
            write_json(&dir.join(format!("{}.json", s.video_id)), s)?;
        }
    }
    Ok(())
}
