//! Camera geometry and rigid motion estimation.

mod kabsch;
mod ransac;
mod smoothing;

use std::path::Path;

use nalgebra::{Matrix3x4, Rotation3, UnitQuaternion};

pub use nalgebra::{Matrix3, Vector3};

pub use kabsch::kabsch;
pub use ransac::{median_depth_threshold, ransac_rigid, RansacFit, RansacParams};
pub use smoothing::{clamp_motion, damp, reorthogonalize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance on `‖RᵀR − I‖_F` for a matrix to count as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::Argument(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::Argument("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Fallback when no calibration is available: `fx = fy = 0.9·max(W, H)`,
    /// principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = 0.9 * width.max(height) as f64;
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Checks the principal point lies strictly inside a `width × height` image.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        if self.cx > 0.0 && self.cx < width as f64 && self.cy > 0.0 && self.cy < height as f64 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )))
        }
    }

    /// Parses `key = value` lines (also `key: value` or `key value`) holding
    /// `fx`, `fy`, `cx` and `cy`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = [None; 4];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(['=', ':'])
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "intrinsics line {}: expected key = value",
                        lineno + 1
                    ))
                })?;
            let slot = match key.trim() {
                "fx" => 0,
                "fy" => 1,
                "cx" => 2,
                "cy" => 3,
                other => {
                    return Err(Error::Config(format!(
                        "intrinsics line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            };
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "intrinsics line {}: bad number {:?}",
                    lineno + 1,
                    value.trim()
                ))
            })?;
            fields[slot] = Some(value);
        }
        match fields {
            [Some(fx), Some(fy), Some(cx), Some(cy)] => {
                Self::new(fx, fy, cx, cy).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(Error::Config(
                "intrinsics must define fx, fy, cx and cy".into(),
            )),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\n",
            self.fx, self.fy, self.cx, self.cy
        )
    }
}

/// Back-projects pixel `(u, v)` at depth `z` into the camera frame.
pub fn lift(u: f64, v: f64, z: f64, k: &Intrinsics) -> Result<Point3> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Argument(format!(
            "lift needs a positive finite depth, got {z}"
        )));
    }
    Ok(Point3::new(z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z))
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(p: &Point3, k: &Intrinsics) -> Result<(f64, f64)> {
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// A proper rigid motion `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with positive determinant.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation) {
            return Err(Error::Argument("matrix is not a proper rotation".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(axis) => Rotation3::from_axis_angle(&axis, angle).into_inner(),
            None => Matrix3::identity(),
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn translation_only(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    pub fn to_affine(&self) -> Affine3x4 {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.set_column(3, &self.translation);
        Affine3x4(m)
    }

    /// Rotation entries in row-major order.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        std::array::from_fn(|i| self.rotation[(i / 3, i % 3)])
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// Builds a transform from a row-major rotation and a translation, validating both.
    pub fn from_arrays(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(&rotation),
            Vector3::from(translation),
        )
    }
}

/// Unconstrained 3×4 motion `[A | t]`, the space damping operates in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine3x4(pub Matrix3x4<f64>);

impl Affine3x4 {
    pub fn identity() -> Self {
        Affine3x4(Matrix3x4::identity())
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.column(3).into_owned()
    }

    pub fn frobenius_distance(&self, other: &Affine3x4) -> f64 {
        (self.0 - other.0).norm()
    }
}

pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    r.iter().all(|v| v.is_finite())
        && (r.transpose() * r - Matrix3::identity()).norm() < ROTATION_TOLERANCE
        && r.determinant() > 0.0
}

/// Angle of a rotation matrix, computed from its quaternion for accuracy at
/// small angles.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    2.0 * q.imag().norm().atan2(q.w.abs())
}
