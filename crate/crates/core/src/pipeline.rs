//! Sequence-level propagation: track, fit, smooth, warp, log.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    advance_tracks, detect_corners, CornerParams, LkParams, TrackSet, LK_PYRAMID_LEVELS,
};
use crate::imaging::{
    build_pyramid, depth_dims, frame_dims, read_depth, read_frame, to_grayscale, write_frame,
    DepthMap, FrameImage, ImagePyramid,
};
use crate::motion::{
    clamp_motion, damp, lift, median_depth_threshold, ransac_rigid, reorthogonalize, Affine3x4,
    Intrinsics, Point3, RansacParams, RigidTransform,
};
use crate::warp::{mean_depth, warp_ball, WarpConfig, Warped};

/// What raw estimates are damped toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampAnchor {
    /// The 3×4 identity: each base-to-current estimate is shrunk toward no motion.
    #[default]
    Identity,
    /// The previous frame's final transform: exponential smoothing over time.
    Previous,
}

impl std::str::FromStr for DampAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(DampAnchor::Identity),
            "previous" => Ok(DampAnchor::Previous),
            other => Err(Error::Config(format!("unknown damping anchor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacSettings {
    /// Inlier threshold as a fraction of the median correspondence depth.
    pub threshold_scale: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for RansacSettings {
    fn default() -> Self {
        Self {
            threshold_scale: 0.02,
            iters: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampSettings {
    /// Radians.
    pub max_angle: f64,
    /// Translation cap as a fraction of the frame's mean depth.
    pub trans_scale: f64,
}

impl Default for ClampSettings {
    fn default() -> Self {
        Self {
            max_angle: 0.1,
            trans_scale: 0.1,
        }
    }
}

impl ClampSettings {
    /// No effective bound on either quantity.
    pub fn disabled() -> Self {
        Self {
            max_angle: f64::INFINITY,
            trans_scale: f64::INFINITY,
        }
    }
}

/// Estimation and warping knobs, independent of where frames come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub alpha: f64,
    pub damp_anchor: DampAnchor,
    pub max_corners: usize,
    pub ransac: RansacSettings,
    pub clamp: ClampSettings,
    pub invert_motion: bool,
    pub lk: LkParams,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            damp_anchor: DampAnchor::Identity,
            max_corners: 200,
            ransac: RansacSettings::default(),
            clamp: ClampSettings::default(),
            invert_motion: false,
            lk: LkParams::default(),
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("RANSAC threshold scale", self.ransac.threshold_scale)?;
        positive("max angle", self.clamp.max_angle)?;
        positive("translation clamp scale", self.clamp.trans_scale)?;
        if self.ransac.iters == 0 {
            return Err(Error::Config("RANSAC needs at least one iteration".into()));
        }
        Ok(())
    }

    fn corner_params(&self) -> CornerParams {
        CornerParams {
            max_corners: self.max_corners,
            ..CornerParams::default()
        }
    }
}

/// Inputs and outputs of a file-based run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub frames_dir: PathBuf,
    pub depth_dir: PathBuf,
    pub ball_path: PathBuf,
    pub intrinsics_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub settings: Settings,
}

/// Per-frame record of the estimated motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub frame_index: usize,
    #[serde(rename = "R_raw")]
    pub rotation_raw: [f64; 9],
    pub t_raw: [f64; 3],
    #[serde(rename = "R_final")]
    pub rotation_final: [f64; 9],
    pub t_final: [f64; 3],
    pub inlier_count: usize,
    pub alive_count: usize,
    pub fallback_used: bool,
    pub clamped_fraction: f64,
    pub mean_depth: f64,
    pub behind_camera: usize,
}

impl TransformLog {
    pub fn raw(&self) -> Result<RigidTransform> {
        RigidTransform::from_arrays(self.rotation_raw, self.t_raw)
    }

    pub fn final_transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_arrays(self.rotation_final, self.t_final)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub frames_processed: usize,
    pub fallbacks_used: usize,
    pub mean_inliers: f64,
    pub clamped_fraction: f64,
}

/// Everything needed to audit a run or replay its warps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frame_dims: [usize; 2],
    pub ball_dims: [usize; 2],
    pub intrinsics: Intrinsics,
    pub invert_motion: bool,
    pub frames: Vec<TransformLog>,
    pub totals: Totals,
}

impl RunReport {
    fn new(
        frame_dims: (usize, usize),
        ball_dims: (usize, usize),
        k: Intrinsics,
        invert_motion: bool,
    ) -> Self {
        Self {
            frame_dims: [frame_dims.0, frame_dims.1],
            ball_dims: [ball_dims.0, ball_dims.1],
            intrinsics: k,
            invert_motion,
            frames: Vec::new(),
            totals: Totals::default(),
        }
    }

    fn finish(&mut self) {
        let n = self.frames.len();
        self.totals = Totals {
            frames_processed: n,
            fallbacks_used: self.frames.iter().filter(|f| f.fallback_used).count(),
            mean_inliers: if n == 0 {
                0.0
            } else {
                self.frames
                    .iter()
                    .map(|f| f.inlier_count as f64)
                    .sum::<f64>()
                    / n as f64
            },
            clamped_fraction: if n == 0 {
                0.0
            } else {
                self.frames.iter().map(|f| f.clamped_fraction).sum::<f64>() / n as f64
            },
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad transforms log: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn warp_config(&self) -> Result<WarpConfig> {
        WarpConfig::new(
            (self.frame_dims[0], self.frame_dims[1]),
            (self.ball_dims[0], self.ball_dims[1]),
            self.invert_motion,
        )
    }

    /// Re-applies a logged transform to the reference ball.
    pub fn replay(&self, ball: &FrameImage, entry: &TransformLog) -> Result<Warped> {
        warp_ball(
            ball,
            &entry.final_transform()?,
            &self.intrinsics,
            entry.mean_depth,
            &self.warp_config()?,
        )
    }
}

/// Result of fitting one base-to-current step.
struct Estimate {
    raw: RigidTransform,
    final_motion: RigidTransform,
    inliers: usize,
}

fn correspondences(tracks: &TrackSet, depth: &DepthMap, k: &Intrinsics) -> Vec<(Point3, Point3)> {
    tracks
        .alive()
        .filter_map(|t| {
            let zt = depth.sample(t.cur_pos.0, t.cur_pos.1)?;
            let (bu, bv) = t.base_pos();
            let p0 = lift(bu, bv, t.base_depth, k).ok()?;
            let pt = lift(t.cur_pos.0, t.cur_pos.1, zt, k).ok()?;
            Some((p0, pt))
        })
        .collect()
}

fn estimate(
    pairs: &[(Point3, Point3)],
    settings: &Settings,
    anchor: &Affine3x4,
    d_avg: f64,
) -> Result<Estimate> {
    if pairs.len() < 3 {
        return Err(Error::NoConsensus(format!(
            "only {} usable correspondences",
            pairs.len()
        )));
    }
    let threshold = median_depth_threshold(pairs, settings.ransac.threshold_scale)
        .ok_or_else(|| Error::NoConsensus("no finite correspondence depth".into()))?;
    let fit = ransac_rigid(
        pairs,
        &RansacParams {
            threshold,
            iters: settings.ransac.iters,
            seed: settings.ransac.seed,
        },
    )?;
    let damped = damp(&fit.transform.to_affine(), settings.alpha, anchor);
    let smoothed = reorthogonalize(&damped)?;
    let final_motion = clamp_motion(
        &smoothed,
        settings.clamp.max_angle,
        settings.clamp.trans_scale * d_avg,
    );
    Ok(Estimate {
        raw: fit.transform,
        inliers: fit.inlier_count(),
        final_motion,
    })
}

fn log_entry(frame_index: usize, raw: &RigidTransform, fin: &RigidTransform) -> TransformLog {
    TransformLog {
        frame_index,
        rotation_raw: raw.rotation_row_major(),
        t_raw: raw.translation_array(),
        rotation_final: fin.rotation_row_major(),
        t_final: fin.translation_array(),
        inlier_count: 0,
        alive_count: 0,
        fallback_used: false,
        clamped_fraction: 0.0,
        mean_depth: f64::NAN,
        behind_camera: 0,
    }
}

fn pyramid(frame: &FrameImage) -> ImagePyramid {
    build_pyramid(&to_grayscale(frame), LK_PYRAMID_LEVELS)
}

/// Frame-by-frame motion estimator holding track and smoothing state.
pub struct Propagator {
    settings: Settings,
    k: Intrinsics,
    dims: (usize, usize),
    tracks: TrackSet,
    prev_pyramid: ImagePyramid,
    prev_raw: RigidTransform,
    prev_final: RigidTransform,
    prev_mean_depth: f64,
    next_index: usize,
}

impl Propagator {
    /// Detects corners in the base frame and caches their depths.
    pub fn new(
        frame0: &FrameImage,
        depth0: &DepthMap,
        k: Intrinsics,
        settings: Settings,
    ) -> Result<Self> {
        settings.validate()?;
        if frame0.dims() != depth0.dims() {
            return Err(Error::Config(format!(
                "frame is {:?} but depth map is {:?}",
                frame0.dims(),
                depth0.dims()
            )));
        }
        let prev_pyramid = pyramid(frame0);
        let corners = detect_corners(prev_pyramid.base(), &settings.corner_params())?;
        Ok(Self {
            settings,
            k,
            dims: frame0.dims(),
            tracks: TrackSet::from_corners(&corners, depth0),
            prev_pyramid,
            prev_raw: RigidTransform::identity(),
            prev_final: RigidTransform::identity(),
            prev_mean_depth: mean_depth(depth0)?,
            next_index: 1,
        })
    }

    pub fn tracks(&self) -> &TrackSet {
        &self.tracks
    }

    /// Processes the next frame. Estimation failures fall back to the previous
    /// final transform and are flagged in the returned log.
    pub fn step(&mut self, frame: &FrameImage, depth: &DepthMap) -> Result<TransformLog> {
        match self.try_step(frame, depth)? {
            Ok(entry) => Ok(entry),
            Err(_) => {
                let mut entry = log_entry(self.next_index - 1, &self.prev_raw, &self.prev_final);
                entry.alive_count = self.tracks.alive_count();
                entry.fallback_used = true;
                entry.mean_depth = self.prev_mean_depth;
                Ok(entry)
            }
        }
    }

    /// Like [`Propagator::step`] but surfaces estimation failures. The outer
    /// result carries input/tracking errors, the inner one fitting errors.
    fn try_step(&mut self, frame: &FrameImage, depth: &DepthMap) -> Result<Result<TransformLog>> {
        if frame.dims() != self.dims || depth.dims() != self.dims {
            return Err(Error::Config(format!(
                "frame {} is {:?} / depth {:?}, expected {:?}",
                self.next_index,
                frame.dims(),
                depth.dims(),
                self.dims
            )));
        }
        let index = self.next_index;
        self.next_index += 1;
        let next_pyramid = pyramid(frame);
        let tracks = std::mem::take(&mut self.tracks);
        self.tracks = advance_tracks(
            tracks,
            &self.prev_pyramid,
            &next_pyramid,
            depth,
            &self.settings.lk,
        )?;
        self.prev_pyramid = next_pyramid;

        let d_avg = match mean_depth(depth) {
            Ok(d) => d,
            Err(e) => return Ok(Err(e)),
        };
        self.prev_mean_depth = d_avg;
        let anchor = match self.settings.damp_anchor {
            DampAnchor::Identity => Affine3x4::identity(),
            DampAnchor::Previous => self.prev_final.to_affine(),
        };
        let pairs = correspondences(&self.tracks, depth, &self.k);
        let est = match estimate(&pairs, &self.settings, &anchor, d_avg) {
            Ok(est) => est,
            Err(e) => return Ok(Err(e)),
        };
        self.prev_raw = est.raw;
        self.prev_final = est.final_motion;
        let mut entry = log_entry(index, &est.raw, &est.final_motion);
        entry.inlier_count = est.inliers;
        entry.alive_count = self.tracks.alive_count();
        entry.mean_depth = d_avg;
        Ok(Ok(entry))
    }
}

/// Fits the motion between two frames, without warping. Estimation failures
/// are returned as errors rather than falling back.
pub fn fit_pair(
    frame0: &FrameImage,
    depth0: &DepthMap,
    frame1: &FrameImage,
    depth1: &DepthMap,
    k: &Intrinsics,
    settings: &Settings,
) -> Result<TransformLog> {
    let mut prop = Propagator::new(frame0, depth0, *k, *settings)?;
    prop.try_step(frame1, depth1)?
}

/// In-memory propagation over a whole sequence.
///
/// Returns one warped ball per frame (the first is `ball` itself) and the run report.
pub fn propagate_frames(
    frames: &[FrameImage],
    depths: &[DepthMap],
    ball: &FrameImage,
    k: &Intrinsics,
    settings: &Settings,
) -> Result<(Vec<FrameImage>, RunReport)> {
    let mut balls = Vec::with_capacity(frames.len());
    let report = run(
        frames.len(),
        depths.len(),
        ball,
        k,
        settings,
        |i| Ok((frames[i].clone(), depths[i].clone())),
        |_, img| {
            balls.push(img.clone());
            Ok(())
        },
    )?;
    Ok((balls, report))
}

fn run(
    n_frames: usize,
    n_depths: usize,
    ball: &FrameImage,
    k: &Intrinsics,
    settings: &Settings,
    mut load: impl FnMut(usize) -> Result<(FrameImage, DepthMap)>,
    mut emit: impl FnMut(usize, &FrameImage) -> Result<()>,
) -> Result<RunReport> {
    settings.validate()?;
    if n_frames == 0 {
        return Err(Error::Config("no frames to process".into()));
    }
    if n_frames != n_depths {
        return Err(Error::Config(format!(
            "{n_frames} frames but {n_depths} depth maps"
        )));
    }
    let (frame0, depth0) = load(0)?;
    k.validate_for(frame0.width(), frame0.height())?;
    let cfg = WarpConfig::new(frame0.dims(), ball.dims(), settings.invert_motion)?;
    let mut report = RunReport::new(frame0.dims(), ball.dims(), *k, settings.invert_motion);
    let mut prop = Propagator::new(&frame0, &depth0, *k, *settings)?;
    emit(0, ball)?;
    for t in 1..n_frames {
        let (frame, depth) = load(t)?;
        let mut entry = prop.step(&frame, &depth)?;
        let warped = warp_ball(ball, &entry.final_transform()?, k, entry.mean_depth, &cfg)?;
        entry.clamped_fraction = warped.clamped_fraction();
        entry.behind_camera = warped.behind_camera;
        emit(t, &warped.image)?;
        report.frames.push(entry);
    }
    report.finish();
    Ok(report)
}

/// Indexed files `{prefix}{index:05}.{ext}` in `dir`, which must run 0..n without gaps.
pub fn sequence_files(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indexed = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name
            .strip_prefix(prefix)
            .and_then(|s| s.strip_suffix(ext))
            .and_then(|s| s.strip_suffix('.'))
        else {
            continue;
        };
        if stem.len() == 5 && stem.bytes().all(|b| b.is_ascii_digit()) {
            indexed.push((stem.parse::<usize>().expect("digits"), entry.path()));
        }
    }
    indexed.sort();
    for (expected, (index, path)) in indexed.iter().enumerate() {
        if *index != expected {
            return Err(Error::Config(format!(
                "sequence in {} has a gap: expected index {expected}, found {}",
                dir.display(),
                path.display()
            )));
        }
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

pub fn frame_file_name(prefix: &str, index: usize, ext: &str) -> String {
    format!("{prefix}{index:05}.{ext}")
}

/// File-based run: reads `frame_*.png` and `depth_*.pfm`, writes `ball_*.png`
/// and `transforms.json` into the output directory.
///
/// Counts, dimensions and intrinsics are checked before anything is written.
pub fn propagate(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.settings.validate()?;
    let frame_paths = sequence_files(&cfg.frames_dir, "frame_", "png")?;
    let depth_paths = sequence_files(&cfg.depth_dir, "depth_", "pfm")?;
    if frame_paths.is_empty() {
        return Err(Error::Config(format!(
            "no frame_NNNNN.png files in {}",
            cfg.frames_dir.display()
        )));
    }
    if frame_paths.len() != depth_paths.len() {
        return Err(Error::Config(format!(
            "{} frames but {} depth maps",
            frame_paths.len(),
            depth_paths.len()
        )));
    }
    let dims = frame_dims(&frame_paths[0])?;
    for (f, d) in frame_paths.iter().zip(&depth_paths) {
        let (fd, dd) = (frame_dims(f)?, depth_dims(d)?);
        if fd != dims || dd != dims {
            return Err(Error::Config(format!(
                "{} is {fd:?} and {} is {dd:?}, expected {dims:?}",
                f.display(),
                d.display()
            )));
        }
    }
    let k = match &cfg.intrinsics_path {
        Some(p) => Intrinsics::read(p)?,
        None => Intrinsics::default_for(dims.0, dims.1),
    };
    k.validate_for(dims.0, dims.1)?;
    let ball = read_frame(&cfg.ball_path)?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let report = run(
        frame_paths.len(),
        depth_paths.len(),
        &ball,
        &k,
        &cfg.settings,
        |i| Ok((read_frame(&frame_paths[i])?, read_depth(&depth_paths[i])?)),
        |i, img| write_frame(cfg.out_dir.join(frame_file_name("ball_", i, "png")), img),
    )?;
    let report_path = cfg.out_dir.join("transforms.json");
    fs::write(&report_path, report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}
