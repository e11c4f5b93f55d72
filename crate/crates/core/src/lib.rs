//! Temporal propagation of a chrome-ball light probe through a video.
//!
//! A reference ball image extracted from the first frame is carried to every
//! later frame by tracking sparse corners, lifting them to 3D with per-frame
//! depth maps, fitting a rigid camera motion, smoothing it, and re-warping the
//! ball under that motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`imaging`]: image containers, gradients, pyramids, sampling and file I/O.
//! * [`features`]: corner detection, pyramidal Lucas-Kanade and track bookkeeping.
//! * [`motion`]: lifting, Kabsch / RANSAC rigid fitting, damping and clamping.
//! * [`warp`]: mapping the reference ball through the estimated motion.
//! * [`synth`]: analytic scene renderer used as ground truth.
//! * [`pipeline`]: the per-sequence orchestration and run report.

pub mod error;
pub mod features;
pub mod imaging;
pub mod motion;
pub mod pipeline;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use features::{
    advance_tracks, detect_corners, lk_track, Corner, CornerParams, LkParams, TrackSet, TrackStatus,
};
pub use imaging::{DepthMap, FrameImage, GrayImage, ImagePyramid};
pub use motion::{Affine3x4, Intrinsics, Point3, RigidTransform};
pub use pipeline::{
    fit_pair, propagate, propagate_frames, DampAnchor, PipelineConfig, RunReport, Settings,
    TransformLog,
};
pub use synth::{render_sequence, score_estimate, MotionScript, SceneSpec};
pub use warp::{mean_depth, warp_ball, WarpConfig, Warped};
