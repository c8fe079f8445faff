//! Spatio-temporal action detection building blocks.
//!
//! The pipeline runs per frame: cascade proposals ([`proposals`]) are
//! augmented with boxes anticipated from detections `K` frames earlier
//! ([`anticipation`]), detections are linked into per-class paths with
//! Viterbi ([`linking`]), the paths are cut to their best temporal extent
//! ([`trimming`]) and scored with spatio-temporal mAP ([`evaluation`]).
//! [`synthdata`] provides synthetic scenes and a detector stand-in so the
//! whole chain can be exercised without a trained network.

pub mod anticipation;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod linking;
pub mod proposals;
pub mod synthdata;
pub mod trimming;

mod seeding;

pub use anticipation::{AnticipationStrategy, Anticipator, LanFeature, LanModel, Motion};
pub use error::{Error, Result};
pub use evaluation::{StudyConfig, StudyReport, VideoTubes};
pub use geometry::{BoundingBox, BoxDelta};
pub use linking::{ActionTube, Detection, FrameDetections, LinkingParams};
pub use proposals::{AnchorConfig, ProposalStage};
pub use synthdata::{Scene, SceneSpec};
pub use trimming::{PenaltyMode, TrimmingParams};
