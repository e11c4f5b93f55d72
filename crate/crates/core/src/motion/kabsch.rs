use nalgebra::{Matrix3, Vector3};

use super::{Point3, RigidTransform};
use crate::error::{Error, Result};

/// Relative singular-value floor below which the cross-covariance is treated
/// as rank-deficient.
const RANK_TOLERANCE: f64 = 1e-12;

fn centroid(points: &[Point3]) -> Vector3<f64> {
    points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64
}

/// Least-squares proper rotation and translation mapping `source` onto `target`.
///
/// Minimizes `Σ ‖R·sᵢ + t − tᵢ‖²` with `det R = +1`. Needs at least three
/// pairs spanning more than a line.
pub fn kabsch(source: &[Point3], target: &[Point3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::Argument(format!(
            "point sets differ in size: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: source.len(),
        });
    }
    let c_src = centroid(source);
    let c_dst = centroid(target);
    let mut cov = Matrix3::zeros();
    for (s, d) in source.iter().zip(target) {
        cov += (s.coords - c_src) * (d.coords - c_dst).transpose();
    }
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Argument("non-finite points".into()));
    }

    let svd = cov.svd(true, true);
    let sv = svd.singular_values;
    if sv[0] <= 0.0 || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::Degenerate(
            "points are collinear or coincident".into(),
        ));
    }
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = c_dst - rotation * c_src;
    Ok(RigidTransform::from_parts(rotation, translation))
}
