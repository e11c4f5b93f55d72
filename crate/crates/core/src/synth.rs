//! Analytic scene renderer with exact depth and known camera motion.
//!
//! Motions are stored in the same convention the estimator produces: entry
//! `t` maps a point from frame-0 camera coordinates into frame-`t` camera
//! coordinates, `X_t = R·X_0 + t`.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, FrameImage};
use crate::motion::{Intrinsics, Point3, RigidTransform};

/// Frame count used for sequences unless told otherwise.
pub const DEFAULT_SEQUENCE_LEN: usize = 49;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Plane `z = depth` in frame-0 camera coordinates.
    Plane {
        depth: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
}

/// Solid procedural texture: octave value noise plus an optional 3D checker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    /// Checker cell size in scene units; `0` disables the checker.
    pub checker_cell: f64,
    /// Lattice spacing of the coarsest noise octave, in scene units.
    pub noise_cell: f64,
    pub noise_seed: u64,
    pub octaves: u32,
    /// Amplitude of the pattern around mid-gray; `0` gives a featureless surface.
    pub contrast: f64,
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            checker_cell: 0.0,
            noise_cell: 0.06,
            noise_seed: 0,
            octaves: 3,
            contrast: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub geometry: Geometry,
    pub texture: Texture,
    pub background: [f64; 3],
}

impl SceneSpec {
    pub fn plane(depth: f64) -> Self {
        Self {
            geometry: Geometry::Plane { depth },
            texture: Texture::default(),
            background: [0.0; 3],
        }
    }

    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Self {
            geometry: Geometry::Sphere { center, radius },
            texture: Texture::default(),
            background: [0.0; 3],
        }
    }

    fn validate(&self) -> Result<()> {
        match self.geometry {
            Geometry::Plane { depth } if !(depth > 0.0 && depth.is_finite()) => {
                return Err(Error::Argument(format!(
                    "plane depth must be positive, got {depth}"
                )))
            }
            Geometry::Sphere { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                return Err(Error::Argument(format!(
                    "sphere radius must be positive, got {radius}"
                )))
            }
            _ => {}
        }
        let t = &self.texture;
        if !(t.noise_cell > 0.0 && t.checker_cell >= 0.0 && t.octaves >= 1) {
            return Err(Error::Argument(
                "texture needs noise_cell > 0, checker_cell >= 0, octaves >= 1".into(),
            ));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Argument("background must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Color of the surface at a frame-0 point.
    pub fn texture_at(&self, p: &Point3) -> [f64; 3] {
        let t = &self.texture;
        let checker = if t.checker_cell > 0.0 {
            let parity = (p.x / t.checker_cell).floor()
                + (p.y / t.checker_cell).floor()
                + (p.z / t.checker_cell).floor();
            if parity.rem_euclid(2.0) < 1.0 {
                0.15
            } else {
                -0.15
            }
        } else {
            0.0
        };
        std::array::from_fn(|ch| {
            let seed = t.noise_seed.wrapping_mul(3).wrapping_add(ch as u64);
            let n = fractal_noise(p.coords / t.noise_cell, seed, t.octaves);
            (0.5 + t.contrast * (n - 0.5 + checker)).clamp(0.0, 1.0)
        })
    }

    /// Smallest positive ray parameter where `origin + s·dir` hits the surface.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self.geometry {
            Geometry::Plane { depth } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let s = (depth - origin.z) / dir.z;
                (s > 0.0).then_some(s)
            }
            Geometry::Sphere { center, radius } => {
                let oc = origin - Vector3::from(center);
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                [(-b - root) / a, (-b + root) / a]
                    .into_iter()
                    .find(|&s| s > 0.0)
            }
        }
    }
}

/// Per-frame camera motion relative to frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    poses: Vec<RigidTransform>,
}

impl MotionScript {
    pub fn new(poses: Vec<RigidTransform>) -> Result<Self> {
        let first = poses
            .first()
            .ok_or_else(|| Error::Argument("motion script is empty".into()))?;
        if *first != RigidTransform::identity() {
            return Err(Error::Argument(
                "motion script must start at the identity".into(),
            ));
        }
        for p in &poses {
            RigidTransform::new(*p.rotation(), *p.translation())?;
        }
        Ok(Self { poses })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            poses: vec![RigidTransform::identity(); len.max(1)],
        }
    }

    /// Scene points move by `step` per frame in camera coordinates.
    pub fn linear_translation(len: usize, step: Vector3<f64>) -> Self {
        Self {
            poses: (0..len.max(1))
                .map(|i| RigidTransform::translation_only(step * i as f64))
                .collect(),
        }
    }

    /// Constant angular rate about `axis` plus a constant translation step.
    pub fn screw(len: usize, axis: Vector3<f64>, step_angle: f64, step: Vector3<f64>) -> Self {
        Self {
            poses: (0..len.max(1))
                .map(|i| {
                    if i == 0 {
                        RigidTransform::identity()
                    } else {
                        RigidTransform::from_axis_angle(
                            axis,
                            step_angle * i as f64,
                            step * i as f64,
                        )
                    }
                })
                .collect(),
        }
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<FrameImage>,
    pub depths: Vec<DepthMap>,
    pub ground_truth: Vec<RigidTransform>,
}

/// Ray-casts every frame of `motion` against `scene`.
///
/// Pixels whose ray misses the geometry get the background color and a NaN depth.
pub fn render_sequence(
    scene: &SceneSpec,
    motion: &MotionScript,
    k: &Intrinsics,
    dims: (usize, usize),
) -> Result<Sequence> {
    scene.validate()?;
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(Error::Dimension(format!(
            "render size must be positive, got {w}x{h}"
        )));
    }
    let mut frames = Vec::with_capacity(motion.len());
    let mut depths = Vec::with_capacity(motion.len());
    for pose in motion.poses() {
        let (frame, depth) = render_frame(scene, pose, k, dims)?;
        frames.push(frame);
        depths.push(depth);
    }
    Ok(Sequence {
        frames,
        depths,
        ground_truth: motion.poses().to_vec(),
    })
}

fn render_frame(
    scene: &SceneSpec,
    pose: &RigidTransform,
    k: &Intrinsics,
    (w, h): (usize, usize),
) -> Result<(FrameImage, DepthMap)> {
    let rt = pose.rotation().transpose();
    let origin = -(rt * pose.translation());
    let rows: Vec<(Vec<f64>, Vec<f32>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut colors = Vec::with_capacity(w * 3);
            let mut depth = Vec::with_capacity(w);
            for x in 0..w {
                let ray = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let dir = rt * ray;
                match scene.intersect(&origin, &dir) {
                    Some(s) => {
                        colors.extend(scene.texture_at(&Point3::from(origin + dir * s)));
                        // the ray's z component is 1, so the parameter is the camera-frame depth
                        depth.push(s as f32);
                    }
                    None => {
                        colors.extend(scene.background);
                        depth.push(f32::NAN);
                    }
                }
            }
            (colors, depth)
        })
        .collect();
    let (colors, depth): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let frame = FrameImage::new(w, h, colors.concat())?;
    let depth = DepthMap::new(w, h, depth.concat())?;
    Ok((frame, depth))
}

/// Rotation error in degrees and translation error in scene units.
pub fn score_estimate(gt: &RigidTransform, est: &RigidTransform) -> (f64, f64) {
    let relative = gt.rotation() * est.rotation().transpose();
    let rot_err = crate::motion::rotation_angle(&relative).to_degrees();
    let trans_err = (gt.translation() - est.translation()).norm();
    (rot_err, trans_err)
}

/// A smooth, shaded-sphere-like test ball in `[0, 1]`.
pub fn synthetic_ball(width: usize, height: usize) -> Result<FrameImage> {
    FrameImage::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / width as f64 * 2.0 - 1.0;
        let v = (y as f64 + 0.5) / height as f64 * 2.0 - 1.0;
        let r2 = (u * u + v * v).min(1.0);
        let n = (1.0 - r2).sqrt();
        let light = (0.3 * u - 0.5 * v + 0.8 * n).max(0.0);
        [
            0.15 + 0.75 * light,
            0.2 + 0.6 * light * (1.0 - 0.3 * u),
            0.3 + 0.5 * n,
        ]
    })
}

fn hash(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [ix, iy, iz] {
        h = (h ^ v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Trilinearly blended lattice noise with quintic fade, in `[0, 1]`.
fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let (fx, fy, fz) = (fade(f.x), fade(f.y), fade(f.z));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let corner = |dx, dy, dz| hash(ix + dx, iy + dy, iz + dz, seed);
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), fx);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), fx);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), fx);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), fx);
    lerp(lerp(x00, x10, fy), lerp(x01, x11, fy), fz)
}

fn fractal_noise(p: Vector3<f64>, seed: u64, octaves: u32) -> f64 {
    let (mut sum, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, 1.0);
    for o in 0..octaves {
        sum += amp * value_noise(p * freq, seed.wrapping_add(u64::from(o) * 7919));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}
