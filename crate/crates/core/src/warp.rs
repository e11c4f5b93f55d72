//! Re-rendering the reference ball under an estimated camera motion.
//!
//! Every ball pixel is placed in the video frame, lifted onto a fronto-parallel
//! plane at the frame's mean depth, moved by the motion, projected back, and
//! the reference ball is sampled at the resulting position.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, FrameImage, Sample};
use crate::motion::{Intrinsics, Point3, RigidTransform};

/// Sample coordinates this close to an integer are snapped onto it, so that
/// an identity motion reproduces the reference ball exactly.
const GRID_SNAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpConfig {
    pub frame_dims: (usize, usize),
    pub ball_dims: (usize, usize),
    /// Apply the inverse of the estimated motion instead of the motion itself.
    pub invert_motion: bool,
}

impl WarpConfig {
    pub fn new(
        frame_dims: (usize, usize),
        ball_dims: (usize, usize),
        invert_motion: bool,
    ) -> Result<Self> {
        if frame_dims.0 == 0 || frame_dims.1 == 0 || ball_dims.0 == 0 || ball_dims.1 == 0 {
            return Err(Error::Dimension(format!(
                "warp dimensions must be positive: frame {frame_dims:?}, ball {ball_dims:?}"
            )));
        }
        Ok(Self {
            frame_dims,
            ball_dims,
            invert_motion,
        })
    }

    fn scale(&self) -> (f64, f64) {
        (
            self.frame_dims.0 as f64 / self.ball_dims.0 as f64,
            self.frame_dims.1 as f64 / self.ball_dims.1 as f64,
        )
    }
}

/// Warped ball plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: FrameImage,
    /// Output pixels whose sample position fell outside the reference ball.
    pub clamped: usize,
    /// Output pixels whose moved 3D point ended up at or behind the camera.
    pub behind_camera: usize,
}

impl Warped {
    pub fn clamped_fraction(&self) -> f64 {
        self.clamped as f64 / (self.image.width() * self.image.height()) as f64
    }
}

/// Average of the finite entries of a depth map.
pub fn mean_depth(depth: &DepthMap) -> Result<f64> {
    // Neumaier-compensated sum; full-frame maps hold hundreds of thousands of values
    let (mut sum, mut carry, mut count) = (0.0f64, 0.0f64, 0usize);
    for d in depth.data().iter().filter(|d| d.is_finite()) {
        let d = f64::from(*d);
        let t = sum + d;
        carry += if sum.abs() >= d.abs() {
            (sum - t) + d
        } else {
            (d - t) + sum
        };
        sum = t;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDepth);
    }
    Ok((sum + carry) / count as f64)
}

pub fn ball_to_frame(x: f64, y: f64, cfg: &WarpConfig) -> (f64, f64) {
    let (sx, sy) = cfg.scale();
    (sx * x, sy * y)
}

pub fn frame_to_ball(x: f64, y: f64, cfg: &WarpConfig) -> (f64, f64) {
    let (sx, sy) = cfg.scale();
    (x / sx, y / sy)
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

/// Where output pixel `(x, y)` samples the reference ball. The flag reports
/// whether the moved point was at or behind the camera; such points are
/// pushed to just in front of it, which lands their sample far outside the
/// ball so edge clamping picks the border along that direction.
pub fn warp_coordinate(
    x: f64,
    y: f64,
    motion: &RigidTransform,
    k: &Intrinsics,
    d_avg: f64,
    cfg: &WarpConfig,
) -> ((f64, f64), bool) {
    let (xv, yv) = ball_to_frame(x, y, cfg);
    let lifted = Point3::new(
        d_avg * (xv - k.cx) / k.fx,
        d_avg * (yv - k.cy) / k.fy,
        d_avg,
    );
    let moved = if cfg.invert_motion {
        Point3::from(motion.rotation().transpose() * (lifted.coords - motion.translation()))
    } else {
        motion.apply(&lifted)
    };
    let behind = moved.z.is_nan() || moved.z <= 0.0;
    let z = if behind { d_avg * 1e-6 } else { moved.z };
    let u = k.fx * moved.x / z + k.cx;
    let v = k.fy * moved.y / z + k.cy;
    let (bx, by) = frame_to_ball(u, v, cfg);
    ((snap(bx), snap(by)), behind)
}

/// Warps `ball` by `motion` using a constant scene depth `d_avg`.
pub fn warp_ball(
    ball: &FrameImage,
    motion: &RigidTransform,
    k: &Intrinsics,
    d_avg: f64,
    cfg: &WarpConfig,
) -> Result<Warped> {
    if !(d_avg > 0.0 && d_avg.is_finite()) {
        return Err(Error::Argument(format!(
            "mean depth must be positive, got {d_avg}"
        )));
    }
    if ball.dims() != cfg.ball_dims {
        return Err(Error::Dimension(format!(
            "ball is {:?} but warp expects {:?}",
            ball.dims(),
            cfg.ball_dims
        )));
    }
    let (w, h) = cfg.ball_dims;
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let rows: Vec<(Vec<f64>, usize, usize)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w * 3);
            let (mut clamped, mut behind) = (0, 0);
            for x in 0..w {
                let ((sx, sy), is_behind) =
                    warp_coordinate(x as f64, y as f64, motion, k, d_avg, cfg);
                behind += usize::from(is_behind);
                let (sx, sy) = if sx.is_finite() && sy.is_finite() {
                    (sx, sy)
                } else {
                    (x as f64, y as f64)
                };
                if !(0.0..=max_x).contains(&sx) || !(0.0..=max_y).contains(&sy) {
                    clamped += 1;
                }
                row.extend(ball.sample_clamped(sx, sy));
            }
            (row, clamped, behind)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h * 3);
    let (mut clamped, mut behind_camera) = (0, 0);
    for (row, c, b) in rows {
        data.extend(row);
        clamped += c;
        behind_camera += b;
    }
    Ok(Warped {
        image: FrameImage::new(w, h, data)?,
        clamped,
        behind_camera,
    })
}
