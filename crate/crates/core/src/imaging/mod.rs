//! Image containers and the low-level operations the tracker and warper share.

mod filter;
mod io;
mod sample;

pub use filter::{build_pyramid, sobel_gradients, to_grayscale, LUMA_WEIGHTS};
pub use io::{depth_dims, frame_dims, read_depth, read_frame, write_depth, write_frame};
pub use sample::{sample_bilinear, Sample};

use crate::error::{Error, Result};

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "frame buffer holds {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Argument(format!(
                "frame channel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Returns a copy with every channel multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * a).collect(),
        )
    }

    /// Channel values quantized to 8 bits, as stored on disk.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Round-trips every channel through 8-bit quantization.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| f64::from(quantize(v)) / 255.0)
                .collect(),
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major single-channel image.
///
/// Also used for signed derivative fields, where values are not confined to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "image buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication for out-of-range indices.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        Self::from_raw(self.height, self.width, data)
    }
}

/// Per-pixel depth in scene units. Invalid pixels hold a non-finite value.
///
/// Stored as `f32` so that the on-disk float map round-trips bit-exactly.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "depth map must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "depth buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|v| v.is_finite() && **v <= 0.0) {
            return Err(Error::Argument(format!(
                "finite depth must be positive, got {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f32) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Nearest-pixel depth at a subpixel position, `None` when outside the
    /// map or when the nearest pixel is a hole.
    pub fn nearest(&self, u: f64, v: f64) -> Option<f64> {
        let (x, y) = (u.round(), v.round());
        if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
            return None;
        }
        let d = self.get(x as usize, y as usize);
        d.is_finite().then_some(f64::from(d))
    }

    /// Depth at a subpixel position.
    ///
    /// Validity follows the nearest pixel; the value is bilinearly interpolated
    /// when all four neighbors are finite and falls back to the nearest pixel
    /// otherwise.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let nearest = self.nearest(u, v)?;
        let uc = u.clamp(0.0, (self.width - 1) as f64);
        let vc = v.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (uc.floor() as usize, vc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (uc - x0 as f64, vc - y0 as f64);
        let c = [
            self.get(x0, y0),
            self.get(x1, y0),
            self.get(x0, y1),
            self.get(x1, y1),
        ];
        if c.iter().any(|d| !d.is_finite()) {
            return Some(nearest);
        }
        let c = c.map(f64::from);
        let top = c[0] + fx * (c[1] - c[0]);
        let bottom = c[2] + fx * (c[3] - c[2]);
        Some(top + fy * (bottom - top))
    }

    /// Bitwise equality, treating identical NaN payloads as equal.
    pub fn bit_eq(&self, other: &DepthMap) -> bool {
        self.dims() == other.dims()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Gaussian image pyramid, level 0 at full resolution.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

impl ImagePyramid {
    pub(crate) fn from_levels(levels: Vec<GrayImage>) -> Self {
        assert!(!levels.is_empty());
        Self { levels }
    }

    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> &GrayImage {
        &self.levels[k]
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }
}
