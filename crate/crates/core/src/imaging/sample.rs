use super::{FrameImage, GrayImage};
use crate::error::{Error, Result};

/// Bilinear lookup with edge clamping.
pub trait Sample {
    type Output;

    /// Samples at `(x, y)`, clamping to `[0, W-1] × [0, H-1]`.
    ///
    /// Coordinates must be finite; use [`sample_bilinear`] for checked access.
    fn sample_clamped(&self, x: f64, y: f64) -> Self::Output;
}

#[inline]
fn corners(width: usize, height: usize, x: f64, y: f64) -> (usize, usize, usize, usize, f64, f64) {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    (x0, y0, x1, y1, xc - x0 as f64, yc - y0 as f64)
}

#[inline]
fn blend(a: f64, b: f64, c: f64, d: f64, fx: f64, fy: f64) -> f64 {
    (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
}

impl Sample for GrayImage {
    type Output = f64;

    #[inline]
    fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let (x0, y0, x1, y1, fx, fy) = corners(self.width, self.height, x, y);
        blend(
            self.get(x0, y0),
            self.get(x1, y0),
            self.get(x0, y1),
            self.get(x1, y1),
            fx,
            fy,
        )
    }
}

impl Sample for FrameImage {
    type Output = [f64; 3];

    fn sample_clamped(&self, x: f64, y: f64) -> [f64; 3] {
        let (x0, y0, x1, y1, fx, fy) = corners(self.width, self.height, x, y);
        let (a, b, c, d) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        std::array::from_fn(|k| blend(a[k], b[k], c[k], d[k], fx, fy))
    }
}

/// Checked bilinear sample; non-finite coordinates are rejected.
pub fn sample_bilinear<I: Sample>(img: &I, x: f64, y: f64) -> Result<I::Output> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::Argument(format!(
            "non-finite sample coordinate ({x}, {y})"
        )));
    }
    Ok(img.sample_clamped(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn integer_coordinates_are_exact() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 7 + y * 3) as f64 / 40.0).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(
                    sample_bilinear(&img, x as f64, y as f64).unwrap(),
                    img.get(x, y)
                );
            }
        }
    }

    #[test]
    fn midpoint_and_clamp() {
        let img = GrayImage::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(sample_bilinear(&img, 0.5, 0.5).unwrap(), 0.5);
        assert_eq!(sample_bilinear(&img, -5.0, -5.0).unwrap(), 0.0);
        assert_eq!(sample_bilinear(&img, 9.0, -5.0).unwrap(), 1.0);
    }

    #[test]
    fn non_finite_is_an_argument_error() {
        let img = GrayImage::new(1, 1, vec![0.2]).unwrap();
        assert!(matches!(
            sample_bilinear(&img, f64::NAN, 0.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            sample_bilinear(&img, 0.0, f64::INFINITY),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn frame_sampling_per_channel() {
        let f = FrameImage::new(2, 1, vec![0.0, 0.2, 1.0, 1.0, 0.4, 0.0]).unwrap();
        let s = sample_bilinear(&f, 0.25, 0.0).unwrap();
        let expected = [0.25, 0.25, 0.75];
        for k in 0..3 {
            assert!((s[k] - expected[k]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn frame_grid_points_exact(w in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
            let mut s = seed;
            let f = FrameImage::from_fn(w, h, |_, _| {
                std::array::from_fn(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 11) as f64 / (1u64 << 53) as f64 })
            }).unwrap();
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(f.sample_clamped(x as f64, y as f64), f.pixel(x, y));
                }
            }
        }
    }
}
