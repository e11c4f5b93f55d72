use crate::error::{Error, Result};
use crate::imaging::{sobel_gradients, GrayImage};

/// A detected corner with subpixel position and min-eigenvalue score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerParams {
    pub max_corners: usize,
    /// Fraction of the strongest response a pixel must reach to be a candidate.
    pub quality_level: f64,
    pub min_distance: f64,
    /// Half-size of the structure-tensor box; the box is `2 * window + 1` wide.
    pub window: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            max_corners: 200,
            quality_level: 0.01,
            min_distance: 10.0,
            window: 3,
        }
    }
}

struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += value(y * width + x);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
            + self.sums[y0 * s + x0]
    }
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
#[inline]
pub(crate) fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_trace = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    half_trace - (half_diff * half_diff + b * b).sqrt()
}

/// Shi-Tomasi response map: the minimum eigenvalue of the structure tensor
/// summed over a `(2 * window + 1)²` box, truncated at the image border.
pub fn min_eigen_response(gray: &GrayImage, window: usize) -> Result<GrayImage> {
    let (w, h) = gray.dims();
    let (ix, iy) = sobel_gradients(gray)?;
    let (gx, gy) = (ix.data(), iy.data());
    let sxx = Integral::new(w, h, |i| gx[i] * gx[i]);
    let sxy = Integral::new(w, h, |i| gx[i] * gy[i]);
    let syy = Integral::new(w, h, |i| gy[i] * gy[i]);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(window), (y + window + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(window), (x + window + 1).min(w));
            let a = sxx.rect(x0, y0, x1, y1);
            let b = sxy.rect(x0, y0, x1, y1);
            let c = syy.rect(x0, y0, x1, y1);
            out.push(min_eigenvalue(a, b, c).max(0.0));
        }
    }
    Ok(GrayImage::from_raw(w, h, out))
}

/// Offset of a parabola's vertex through three equally spaced samples.
fn parabola_peak(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Detects up to `params.max_corners` Shi-Tomasi corners, strongest first.
///
/// Pixels closer than `window + 1` to the border are not considered. A
/// featureless image yields an empty list.
pub fn detect_corners(gray: &GrayImage, params: &CornerParams) -> Result<Vec<Corner>> {
    let (w, h) = gray.dims();
    let side = 2 * params.window + 1;
    if w < side.max(3) || h < side.max(3) {
        return Err(Error::Dimension(format!(
            "corner detection with window {} needs at least {side}x{side}, got {w}x{h}",
            params.window
        )));
    }
    if !(params.quality_level >= 0.0 && params.min_distance >= 0.0) {
        return Err(Error::Argument(
            "quality level and min distance must be non-negative".into(),
        ));
    }
    let response = min_eigen_response(gray, params.window)?;
    let max_response = response.data().iter().copied().fold(0.0, f64::max);
    if max_response <= 0.0 || params.max_corners == 0 {
        return Ok(Vec::new());
    }
    let threshold = params.quality_level * max_response;
    let margin = params.window + 1;

    let mut candidates = Vec::new();
    for y in margin..h.saturating_sub(margin) {
        for x in margin..w.saturating_sub(margin) {
            let r = response.get(x, y);
            if r > 0.0 && r >= threshold {
                candidates.push((x, y, r));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));

    let min_dist2 = params.min_distance * params.min_distance;
    let mut selected: Vec<Corner> = Vec::with_capacity(params.max_corners);
    for (x, y, score) in candidates {
        let du = parabola_peak(response.get(x - 1, y), score, response.get(x + 1, y));
        let dv = parabola_peak(response.get(x, y - 1), score, response.get(x, y + 1));
        let corner = Corner {
            u: x as f64 + du,
            v: y as f64 + dv,
            score,
        };
        let spaced = selected.iter().all(|c| {
            let (eu, ev) = (c.u - corner.u, c.v - corner.v);
            eu * eu + ev * ev >= min_dist2
        });
        if spaced {
            selected.push(corner);
            if selected.len() == params.max_corners {
                break;
            }
        }
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_no_corners() {
        let img = GrayImage::from_raw(32, 32, vec![0.4; 1024]);
        assert!(detect_corners(&img, &CornerParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn white_square_has_four_corners() {
        let img = GrayImage::from_fn(80, 80, |x, y| {
            if (20..60).contains(&x) && (20..60).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let corners = detect_corners(&img, &CornerParams::default()).unwrap();
        assert_eq!(corners.len(), 4, "{corners:?}");
        // the square's geometric corners lie on pixel boundaries; the box-summed
        // response peaks up to one box half-width inside the square
        let tol = (2.0f64 * 4.0 * 4.0).sqrt();
        let truth = [(19.5, 19.5), (59.5, 19.5), (19.5, 59.5), (59.5, 59.5)];
        for (tu, tv) in truth {
            let best = corners
                .iter()
                .map(|c| ((c.u - tu).powi(2) + (c.v - tv).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= tol, "corner ({tu},{tv}) missed by {best}");
        }
        // brute-force scan: the global response maximum sits near a square corner
        let resp = min_eigen_response(&img, 3).unwrap();
        let (mut bx, mut by, mut bv) = (0, 0, f64::MIN);
        for y in 0..80 {
            for x in 0..80 {
                if resp.get(x, y) > bv {
                    (bx, by, bv) = (x, y, resp.get(x, y));
                }
            }
        }
        assert!(truth
            .iter()
            .any(|(tu, tv)| ((bx as f64 - tu).abs() <= 4.0) && ((by as f64 - tv).abs() <= 4.0)));
    }

    #[test]
    fn response_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (40, 30);
        let img = GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap();
        let window = 3;
        let resp = min_eigen_response(&img, window).unwrap();
        let (ix, iy) = sobel_gradients(&img).unwrap();
        for _ in 0..20 {
            let x = rng.random_range(0..w);
            let y = rng.random_range(0..h);
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for yy in y.saturating_sub(window)..(y + window + 1).min(h) {
                for xx in x.saturating_sub(window)..(x + window + 1).min(w) {
                    let (gx, gy) = (ix.get(xx, yy), iy.get(xx, yy));
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            }
            // closed-form eigenvalues via the characteristic polynomial
            let tr = a + c;
            let det = a * c - b * b;
            let expected = (tr - (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0;
            assert!((resp.get(x, y) - expected.max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn caps_and_spacing_on_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(320, 240, |_, _| rng.random()).unwrap();
        let params = CornerParams::default();
        let corners = detect_corners(&img, &params).unwrap();
        assert_eq!(corners.len(), 200);
        for (i, a) in corners.iter().enumerate() {
            assert!(a.score > 0.0);
            assert!(a.u >= 0.0 && a.u < 320.0 && a.v >= 0.0 && a.v < 240.0);
            for b in &corners[i + 1..] {
                assert!(a.score >= b.score);
                assert!(((a.u - b.u).powi(2) + (a.v - b.v).powi(2)).sqrt() >= params.min_distance);
            }
        }
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = GrayImage::from_raw(5, 5, vec![0.0; 25]);
        assert!(matches!(
            detect_corners(&img, &CornerParams::default()),
            Err(Error::Dimension(_))
        ));
    }
}
