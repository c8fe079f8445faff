//! JSON file formats shared by the command-line tools.
//!
//! Every file carries a `format_version`. Tube files are written in a
//! canonical order (video, class, start, end) so that identical inputs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anticipation::Motion;
use crate::error::{Error, Result};
use crate::evaluation::VideoTubes;
use crate::geometry::BoundingBox;
use crate::linking::{ActionTube, Detection, FrameDetections};
use crate::synthdata::SceneSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: Error },
}

impl FormatError {
    /// Problems with the file contents, as opposed to I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, FormatError::Io { .. })
    }
}

pub trait Versioned {
    fn format_version(&self) -> u32;
}

/// Reads and version-checks a JSON file.
pub fn read_json<T: DeserializeOwned + Versioned>(path: &Path) -> std::result::Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })?;
    let value: T = serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.into(),
        source,
    })?;
    if value.format_version() != FORMAT_VERSION {
        return Err(FormatError::Version {
            path: path.into(),
            found: value.format_version(),
        });
    }
    Ok(value)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), FormatError> {
    fs::write(path, to_json(value)).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })
}

/// Attaches a path to a validation error.
pub fn at(path: &Path) -> impl FnOnce(Error) -> FormatError + '_ {
    move |source| FormatError::Invalid {
        path: path.into(),
        source,
    }
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn format_version(&self) -> u32 {
                self.format_version
            }
        })*
    };
}

versioned!(DetectionFile, TubeFile, LengthTable, ProposalFile, SceneSpec);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub bbox: BoundingBox,
    pub class_id: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<Motion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_index: u32,
    pub detections: Vec<DetectionRecord>,
}

/// Detections of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub format_version: u32,
    pub video_id: String,
    pub frames: Vec<FrameRecord>,
}

impl DetectionFile {
    pub fn from_frames(video_id: &str, frames: &[FrameDetections]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            video_id: video_id.into(),
            frames: frames
                .iter()
                .map(|f| FrameRecord {
                    frame_index: f.frame_index,
                    detections: f
                        .detections
                        .iter()
                        .map(|d| DetectionRecord {
                            bbox: d.bbox,
                            class_id: d.class_id,
                            score: d.score,
                            motion: None,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Validated frames: scores in [0, 1], frame indices strictly increasing.
    pub fn to_frames(&self) -> Result<Vec<FrameDetections>> {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let detections = f
                    .detections
                    .iter()
                    .map(|d| Detection::new(d.bbox, d.class_id, d.score))
                    .collect::<Result<_>>()?;
                Ok(FrameDetections {
                    frame_index: f.frame_index,
                    detections,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(w) = frames.windows(2).find(|w| w[1].frame_index <= w[0].frame_index) {
            return Err(crate::error::invalid(
                "frame_index",
                format!("video {}: frame {} follows frame {}", self.video_id, w[1].frame_index, w[0].frame_index),
            ));
        }
        Ok(frames)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeRecord {
    pub video_id: String,
    pub class_id: u32,
    pub start: u32,
    pub end: u32,
    pub tube_score: f64,
    pub boxes: Vec<BoundingBox>,
    /// Per-frame scores; when absent every frame gets `tube_score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeFile {
    pub format_version: u32,
    pub tubes: Vec<TubeRecord>,
}

impl TubeFile {
    /// Canonically ordered records for the given videos.
    pub fn from_videos(videos: &[VideoTubes]) -> Self {
        let mut tubes: Vec<TubeRecord> = videos
            .iter()
            .flat_map(|v| {
                v.tubes.iter().map(|t| TubeRecord {
                    video_id: v.video_id.clone(),
                    class_id: t.class_id,
                    start: t.start,
                    end: t.end,
                    tube_score: t.tube_score,
                    boxes: t.boxes.clone(),
                    scores: Some(t.scores.clone()),
                })
            })
            .collect();
        tubes.sort_by(|a, b| {
            (&a.video_id, a.class_id, a.start, a.end)
                .cmp(&(&b.video_id, b.class_id, b.start, b.end))
                .then(b.tube_score.total_cmp(&a.tube_score))
        });
        Self {
            format_version: FORMAT_VERSION,
            tubes,
        }
    }

    /// Groups records by video in ascending `video_id` order, preserving
    /// record order within a video. The recorded `tube_score` is kept.
    pub fn to_videos(&self) -> Result<Vec<VideoTubes>> {
        let mut grouped: BTreeMap<&str, Vec<ActionTube>> = BTreeMap::new();
        for r in &self.tubes {
            let n = r.boxes.len();
            if n == 0 || r.end != r.start + n as u32 - 1 {
                return Err(crate::error::invalid(
                    "tubes",
                    format!("tube {}..={} of video {} has {n} boxes", r.start, r.end, r.video_id),
                ));
            }
            let scores = r.scores.clone().unwrap_or_else(|| vec![r.tube_score; n]);
            let mut tube = ActionTube::new(r.class_id, r.start, r.boxes.clone(), scores)?;
            tube.tube_score = r.tube_score;
            grouped.entry(&r.video_id).or_default().push(tube);
        }
        Ok(grouped
            .into_iter()
            .map(|(id, tubes)| VideoTubes {
                video_id: id.into(),
                tubes,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthTable {
    pub format_version: u32,
    pub avg_length: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageBoxes {
    pub image_id: String,
    pub boxes: Vec<BoundingBox>,
}

/// Per-image boxes; used for proposals and for ground-truth boxes alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalFile {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub images: Vec<ImageBoxes>,
}

impl ProposalFile {
    /// Boxes of `other` aligned with the images of `self`; images missing
    /// from `other` get no boxes.
    pub fn aligned_with(&self, other: &ProposalFile) -> Vec<Vec<BoundingBox>> {
        let by_id: BTreeMap<&str, &Vec<BoundingBox>> =
            other.images.iter().map(|i| (i.image_id.as_str(), &i.boxes)).collect();
        self.images
            .iter()
            .map(|i| by_id.get(i.image_id.as_str()).map(|b| b.to_vec()).unwrap_or_default())
            .collect()
    }
}
