use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{kabsch, Point3, RigidTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier distance in scene units.
    pub threshold: f64,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub transform: RigidTransform,
    pub inliers: Vec<bool>,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Draw attempts per iteration before giving up on finding a non-collinear triple.
const SAMPLE_ATTEMPTS: usize = 16;

/// `scale ×` the median target depth, the default inlier threshold.
pub fn median_depth_threshold(pairs: &[(Point3, Point3)], scale: f64) -> Option<f64> {
    let mut z: Vec<f64> = pairs
        .iter()
        .map(|(_, t)| t.z)
        .filter(|z| z.is_finite())
        .collect();
    if z.is_empty() {
        return None;
    }
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let median = if n % 2 == 1 {
        z[n / 2]
    } else {
        0.5 * (z[n / 2 - 1] + z[n / 2])
    };
    Some(scale * median)
}

fn non_collinear(a: &Point3, b: &Point3, c: &Point3) -> bool {
    let (ab, ac) = (b - a, c - a);
    let scale = ab.norm() * ac.norm();
    scale > 0.0 && ab.cross(&ac).norm() > 1e-9 * scale
}

fn draw_triple(rng: &mut ChaCha8Rng, pairs: &[(Point3, Point3)]) -> Option<[usize; 3]> {
    let n = pairs.len();
    for _ in 0..SAMPLE_ATTEMPTS {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let ok = non_collinear(&pairs[i].0, &pairs[j].0, &pairs[k].0)
            && non_collinear(&pairs[i].1, &pairs[j].1, &pairs[k].1);
        if ok {
            return Some([i, j, k]);
        }
    }
    None
}

fn consensus(model: &RigidTransform, pairs: &[(Point3, Point3)], threshold: f64) -> Vec<bool> {
    pairs
        .iter()
        .map(|(s, d)| (model.apply(s) - d).norm() <= threshold)
        .collect()
}

/// Robust rigid fit by random sample consensus over minimal triples.
///
/// Iteration `i` draws from a ChaCha stream selected by `i`, so the result is
/// identical for a given seed no matter how iterations are scheduled. The
/// winning consensus set is refit with [`kabsch`].
pub fn ransac_rigid(pairs: &[(Point3, Point3)], params: &RansacParams) -> Result<RansacFit> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pairs.len(),
        });
    }
    if params.threshold.is_nan() || params.threshold <= 0.0 {
        return Err(Error::Argument(format!(
            "RANSAC threshold must be positive, got {}",
            params.threshold
        )));
    }

    let best = (0..params.iters)
        .into_par_iter()
        .filter_map(|iter| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(iter as u64);
            let [i, j, k] = draw_triple(&mut rng, pairs)?;
            let model = kabsch(
                &[pairs[i].0, pairs[j].0, pairs[k].0],
                &[pairs[i].1, pairs[j].1, pairs[k].1],
            )
            .ok()?;
            let mask = consensus(&model, pairs, params.threshold);
            let count = mask.iter().filter(|&&b| b).count();
            Some((count, iter, mask))
        })
        // most inliers wins; ties go to the earliest iteration
        .reduce_with(|a, b| {
            if (b.0, std::cmp::Reverse(b.1)) > (a.0, std::cmp::Reverse(a.1)) {
                b
            } else {
                a
            }
        });

    let Some((count, _, inliers)) = best else {
        return Err(Error::NoConsensus(
            "no non-degenerate minimal sample found".into(),
        ));
    };
    if count < 3 {
        return Err(Error::NoConsensus(format!(
            "best model has only {count} inliers"
        )));
    }
    let (src, dst): (Vec<Point3>, Vec<Point3>) = pairs
        .iter()
        .zip(&inliers)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| *p)
        .unzip();
    let transform =
        kabsch(&src, &dst).map_err(|e| Error::NoConsensus(format!("inlier refit failed: {e}")))?;
    Ok(RansacFit { transform, inliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn pairs_under(t: &RigidTransform, n: usize, seed: u64) -> Vec<(Point3, Point3)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p = Point3::new(rng.random(), rng.random(), rng.random::<f64>() + 1.0);
                (p, t.apply(&p))
            })
            .collect()
    }

    fn truth() -> RigidTransform {
        RigidTransform::from_axis_angle(
            Vector3::new(0.1, 1.0, 0.3),
            0.4,
            Vector3::new(0.2, -0.1, 0.05),
        )
    }

    #[test]
    fn outlier_free_fit() {
        let pairs = pairs_under(&truth(), 40, 1);
        let fit = ransac_rigid(
            &pairs,
            &RansacParams {
                threshold: 0.01,
                iters: 50,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(fit.inlier_count(), 40);
        assert!((fit.transform.rotation() - truth().rotation()).norm() < 1e-9);
        assert!((fit.transform.translation() - truth().translation()).norm() < 1e-9);
    }

    #[test]
    fn contaminated_fit() {
        let mut failures = 0;
        for trial in 0..100u64 {
            let mut pairs = pairs_under(&truth(), 50, 1000 + trial);
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            for p in pairs.iter_mut().take(15) {
                p.1 = Point3::new(rng.random(), rng.random(), rng.random::<f64>() + 1.0);
            }
            let fit = ransac_rigid(
                &pairs,
                &RansacParams {
                    threshold: 0.01,
                    iters: 200,
                    seed: trial,
                },
            )
            .unwrap();
            let err = fit
                .transform
                .compose(&truth().inverse())
                .angle()
                .to_degrees();
            let recovered = fit.inliers[15..].iter().filter(|&&b| b).count();
            if err >= 0.1 || recovered * 100 < 35 * 95 {
                failures += 1;
            }
        }
        assert!(failures <= 5, "{failures} failures");
    }

    #[test]
    fn deterministic_for_seed() {
        let mut pairs = pairs_under(&truth(), 30, 7);
        pairs[3].1 = Point3::new(9.0, 9.0, 9.0);
        let params = RansacParams {
            threshold: 0.01,
            iters: 100,
            seed: 42,
        };
        let a = ransac_rigid(&pairs, &params).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| ransac_rigid(&pairs, &params).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn contract_errors() {
        let pairs = pairs_under(&truth(), 2, 1);
        let params = RansacParams {
            threshold: 0.01,
            iters: 10,
            seed: 0,
        };
        assert!(matches!(
            ransac_rigid(&pairs, &params),
            Err(Error::InsufficientData { .. })
        ));
        let line: Vec<_> = (0..10)
            .map(|i| {
                (
                    Point3::new(i as f64, 0.0, 1.0),
                    Point3::new(i as f64, 0.0, 1.0),
                )
            })
            .collect();
        assert!(matches!(
            ransac_rigid(&line, &params),
            Err(Error::NoConsensus(_))
        ));
    }

    #[test]
    fn median_threshold() {
        let pairs: Vec<_> = [1.0, 5.0, 3.0, 4.0]
            .iter()
            .map(|&z| (Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, z)))
            .collect();
        assert_eq!(median_depth_threshold(&pairs, 0.02), Some(0.07));
    }
}
