//! Sparse pyramidal Lucas-Kanade tracking.

use rayon::prelude::*;

use super::corners::min_eigenvalue;
use crate::error::{Error, Result};
use crate::imaging::{sobel_gradients, GrayImage, ImagePyramid, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Full side length of the square integration window (odd).
    pub window: usize,
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub eps: f64,
    /// Minimum eigenvalue of the window-area-normalized gradient matrix.
    pub min_eig: f64,
    /// Maximum forward-backward round-trip error, in pixels.
    pub fb_threshold: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window: 21,
            max_iters: 30,
            eps: 0.01,
            min_eig: 1e-4,
            fb_threshold: 1.0,
        }
    }
}

/// Number of pyramid levels the tracker is built for.
pub const LK_PYRAMID_LEVELS: usize = 3;

/// Outcome of tracking one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub u: f64,
    pub v: f64,
    pub alive: bool,
}

struct Level<'a> {
    img: &'a GrayImage,
    ix: GrayImage,
    iy: GrayImage,
}

fn prepare(pyr: &ImagePyramid) -> Result<Vec<Level<'_>>> {
    pyr.levels()
        .iter()
        .map(|img| {
            let (ix, iy) = sobel_gradients(img)?;
            Ok(Level { img, ix, iy })
        })
        .collect()
}

fn inside(img: &GrayImage, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (img.width() - 1) as f64 && y <= (img.height() - 1) as f64
}

/// Tracks one point from `from` into `to`; `None` when tracking fails.
fn track_point(
    from: &[Level],
    to: &[Level],
    u: f64,
    v: f64,
    params: &LkParams,
) -> Option<(f64, f64)> {
    let half = (params.window / 2) as isize;
    let area = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mut guess = (0.0, 0.0);

    let mut template = Vec::with_capacity((2 * half + 1).pow(2) as usize);
    for level in (0..from.len()).rev() {
        let src = &from[level];
        let dst = to[level].img;
        let scale = 0.5f64.powi(level as i32);
        let (px, py) = (u * scale, v * scale);

        template.clear();
        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (px + dx as f64, py + dy as f64);
                let gx = src.ix.sample_clamped(x, y);
                let gy = src.iy.sample_clamped(x, y);
                gxx += gx * gx;
                gxy += gx * gy;
                gyy += gy * gy;
                template.push((dx as f64, dy as f64, src.img.sample_clamped(x, y), gx, gy));
            }
        }
        if min_eigenvalue(gxx, gxy, gyy) / area < params.min_eig {
            return None;
        }
        let det = gxx * gyy - gxy * gxy;

        let (mut nx, mut ny) = (0.0, 0.0);
        let mut converged = false;
        for _ in 0..params.max_iters {
            let (cx, cy) = (px + guess.0 + nx, py + guess.1 + ny);
            if !inside(dst, cx, cy) {
                return None;
            }
            let (mut bx, mut by) = (0.0, 0.0);
            for &(dx, dy, value, gx, gy) in &template {
                let diff = value - dst.sample_clamped(cx + dx, cy + dy);
                bx += diff * gx;
                by += diff * gy;
            }
            let ex = (gyy * bx - gxy * by) / det;
            let ey = (gxx * by - gxy * bx) / det;
            nx += ex;
            ny += ey;
            if ex * ex + ey * ey < params.eps * params.eps {
                converged = true;
                break;
            }
        }
        if !inside(dst, px + guess.0 + nx, py + guess.1 + ny) {
            return None;
        }
        if level == 0 {
            if !converged {
                return None;
            }
            guess = (guess.0 + nx, guess.1 + ny);
        } else {
            guess = (2.0 * (guess.0 + nx), 2.0 * (guess.1 + ny));
        }
    }
    Some((u + guess.0, v + guess.1))
}

fn check_geometry(prev: &ImagePyramid, next: &ImagePyramid) -> Result<()> {
    let same = prev.len() == next.len()
        && prev
            .levels()
            .iter()
            .zip(next.levels())
            .all(|(a, b)| a.dims() == b.dims());
    if same {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "pyramid geometries differ: {:?} vs {:?}",
            prev.levels()
                .iter()
                .map(GrayImage::dims)
                .collect::<Vec<_>>(),
            next.levels()
                .iter()
                .map(GrayImage::dims)
                .collect::<Vec<_>>()
        )))
    }
}

/// Tracks `points` from `prev` into `next`, coarse to fine.
///
/// A point is lost when its gradient matrix is ill-conditioned, when it leaves
/// the image, when the finest level does not converge, or when re-tracking the
/// result back into `prev` misses the start by more than `fb_threshold`.
/// Lost points keep their input position.
pub fn lk_track(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[(f64, f64)],
    params: &LkParams,
) -> Result<Vec<FlowResult>> {
    check_geometry(prev, next)?;
    if params.window < 3 || params.window.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "LK window must be odd and >= 3, got {}",
            params.window
        )));
    }
    let prev_levels = prepare(prev)?;
    let next_levels = prepare(next)?;
    let results = points
        .par_iter()
        .map(|&(u, v)| {
            let lost = FlowResult { u, v, alive: false };
            if !(u.is_finite() && v.is_finite()) || !inside(prev.base(), u, v) {
                return lost;
            }
            let Some((nu, nv)) = track_point(&prev_levels, &next_levels, u, v, params) else {
                return lost;
            };
            match track_point(&next_levels, &prev_levels, nu, nv, params) {
                Some((bu, bv)) if (bu - u).hypot(bv - v) <= params.fb_threshold => FlowResult {
                    u: nu,
                    v: nv,
                    alive: true,
                },
                _ => lost,
            }
        })
        .collect();
    Ok(results)
}
