use super::{FrameImage, GrayImage, ImagePyramid};
use crate::error::{Error, Result};

/// Rec. 601 luma weights applied to (R, G, B).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Levels smaller than this on either side are not generated.
const MIN_LEVEL_DIM: usize = 16;

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

pub fn to_grayscale(frame: &FrameImage) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|px| wr * px[0] + wg * px[1] + wb * px[2])
        .collect();
    GrayImage::from_raw(frame.width(), frame.height(), data)
}

/// Horizontal and vertical derivatives using 3×3 Sobel kernels scaled by 1/8.
///
/// Borders replicate the edge pixels.
pub fn sobel_gradients(gray: &GrayImage) -> Result<(GrayImage, GrayImage)> {
    let (w, h) = gray.dims();
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "sobel needs at least 3x3, got {w}x{h}"
        )));
    }
    let mut ix = Vec::with_capacity(w * h);
    let mut iy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| gray.get_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            ix.push(gx / 8.0);
            iy.push(gy / 8.0);
        }
    }
    Ok((GrayImage::from_raw(w, h, ix), GrayImage::from_raw(w, h, iy)))
}

fn blur_binomial(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dims();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * img.get_clamped(x as isize + k as isize - 2, y as isize))
                .sum();
        }
    }
    let tmp = GrayImage::from_raw(w, h, tmp);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * tmp.get_clamped(x as isize, y as isize + k as isize - 2))
                .sum();
        }
    }
    GrayImage::from_raw(w, h, out)
}

fn downsample(img: &GrayImage) -> GrayImage {
    let blurred = blur_binomial(img);
    let (w, h) = img.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut data = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            data.push(blurred.get(2 * x, 2 * y));
        }
    }
    GrayImage::from_raw(nw, nh, data)
}

/// Builds up to `max_levels` levels by binomial blur and 2× decimation.
///
/// Generation stops early once the next level would be smaller than 16 pixels
/// on a side. `max_levels == 0` is treated as 1.
pub fn build_pyramid(gray: &GrayImage, max_levels: usize) -> ImagePyramid {
    let mut levels = vec![gray.clone()];
    while levels.len() < max_levels {
        let last = levels.last().unwrap();
        let (nw, nh) = (last.width().div_ceil(2), last.height().div_ceil(2));
        if nw.min(nh) < MIN_LEVEL_DIM {
            break;
        }
        let next = downsample(last);
        levels.push(next);
    }
    ImagePyramid::from_levels(levels)
}
