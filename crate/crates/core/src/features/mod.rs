//! Corner detection and sparse feature tracking.

mod corners;
mod flow;
mod tracks;

pub use corners::{detect_corners, min_eigen_response, Corner, CornerParams};
pub use flow::{lk_track, FlowResult, LkParams, LK_PYRAMID_LEVELS};
pub use tracks::{advance_tracks, Track, TrackSet, TrackStatus};
