//! Temporal damping of raw motion estimates and projection back onto rigid motions.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{Affine3x4, RigidTransform};
use crate::error::{Error, Result};

/// Relative slack before a bound counts as exceeded, so clamping is idempotent
/// despite round-off in the angle recovered from a clamped rotation.
const BOUND_SLACK: f64 = 1e-12;

/// Blends `raw` toward `anchor`: `anchor + alpha·(raw − anchor)`, entrywise.
///
/// `alpha` is expected in `[0, 1]`.
pub fn damp(raw: &Affine3x4, alpha: f64, anchor: &Affine3x4) -> Affine3x4 {
    Affine3x4(anchor.0 + (raw.0 - anchor.0) * alpha)
}

/// Nearest proper rotation (Frobenius) to the linear block; translation unchanged.
pub fn reorthogonalize(m: &Affine3x4) -> Result<RigidTransform> {
    let a = m.linear();
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("non-finite linear block".into()));
    }
    let svd = a.svd(true, true);
    let sv = svd.singular_values;
    if sv[0] <= 0.0 || sv[2] <= 1e-12 * sv[0] {
        return Err(Error::Degenerate("linear block is singular".into()));
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Ok(RigidTransform::from_parts(rotation, m.translation()))
}

/// Caps the rotation angle at `max_angle` (same axis) and the translation
/// norm at `max_trans`. Motions within both bounds come back unchanged.
pub fn clamp_motion(t: &RigidTransform, max_angle: f64, max_trans: f64) -> RigidTransform {
    let mut rotation = *t.rotation();
    let mut translation = *t.translation();

    let rot = Rotation3::from_matrix_unchecked(rotation);
    if let Some((axis, angle)) = rot.axis_angle() {
        if angle > max_angle * (1.0 + BOUND_SLACK) {
            rotation = Rotation3::from_axis_angle(&axis, max_angle).into_inner();
        }
    }
    let norm = translation.norm();
    if norm > max_trans * (1.0 + BOUND_SLACK) {
        translation *= max_trans / norm;
    }
    RigidTransform::from_parts(rotation, translation)
}
