//! Frame and depth files.
//!
//! Frames are 8-bit RGB PNGs whose stored values map linearly to `[0, 1]`.
//! Depth maps use the single-channel portable float map layout: a `Pf`
//! header, dimensions, a negative scale marking little-endian data, then
//! rows of `f32` from the bottom of the image to the top.

use std::fs;
use std::path::Path;

use super::{DepthMap, FrameImage};
use crate::error::{Error, Result};

pub fn read_frame(path: impl AsRef<Path>) -> Result<FrameImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    FrameImage::from_rgb8(w as usize, h as usize, rgb.as_raw())
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Dimensions of a frame file, read from its header only.
pub fn frame_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((w as usize, h as usize))
}

/// Dimensions of a depth file, read from its header only.
pub fn depth_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = Vec::with_capacity(64);
    fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .take(64)
        .read_to_end(&mut head)
        .map_err(|e| Error::io(path, e))?;
    let parse = || -> Result<(usize, usize), String> {
        let (magic, rest) = header_token(&head)?;
        if magic != "Pf" {
            return Err(format!("bad magic {magic:?}"));
        }
        let (w, rest) = header_token(rest)?;
        let (h, _) = header_token(rest)?;
        match (w.parse(), h.parse()) {
            (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
            _ => Err(format!("bad dimensions {w:?} x {h:?}")),
        }
    };
    parse().map_err(|reason| Error::format(path, reason))
}

pub fn write_frame(path: impl AsRef<Path>, frame: &FrameImage) -> Result<()> {
    let path = path.as_ref();
    let buf =
        image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.to_rgb8())
            .expect("buffer length matches dimensions");
    let mut encoded = Vec::new();
    buf.write_to(
        &mut std::io::Cursor::new(&mut encoded),
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, encoded).map_err(|e| Error::io(path, e))
}

pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(depth)).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes).map_err(|reason| Error::format(path, reason))
}

pub(crate) fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + w * h * 4);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        for v in &depth.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits off the next whitespace-delimited header token, returning it and the
/// remaining bytes after exactly one trailing whitespace byte.
fn header_token(bytes: &[u8]) -> Result<(&str, &[u8]), String> {
    let start = bytes
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .ok_or("truncated header")?;
    let rest = &bytes[start..];
    let len = rest
        .iter()
        .position(|b| b.is_ascii_whitespace())
        .ok_or("truncated header")?;
    let token = std::str::from_utf8(&rest[..len]).map_err(|_| "header is not ASCII")?;
    Ok((token, &rest[len + 1..]))
}

pub(crate) fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, String> {
    let (magic, rest) = header_token(bytes)?;
    match magic {
        "Pf" => {}
        "PF" => return Err("three-channel float maps are not depth maps".into()),
        other => return Err(format!("bad magic {other:?}")),
    }
    let (w, rest) = header_token(rest)?;
    let (h, rest) = header_token(rest)?;
    let (scale, payload) = header_token(rest)?;
    let w: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    let scale: f64 = scale.parse().map_err(|_| format!("bad scale {scale:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("non-positive dimensions {w}x{h}"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("invalid scale {scale}"));
    }
    let little_endian = scale < 0.0;
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .ok_or("dimensions overflow")?;
    if payload.len() != expected {
        return Err(format!(
            "payload holds {} bytes, expected {expected}",
            payload.len()
        ));
    }
    let mut data = vec![0.0f32; w * h];
    for (row_idx, row) in payload.chunks_exact(w * 4).enumerate() {
        let y = h - 1 - row_idx;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[y * w + x] = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    DepthMap::new(w, h, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_depth() -> DepthMap {
        DepthMap::new(3, 2, vec![1.0, 2.5, f32::NAN, 4.0, f32::INFINITY, 0.125]).unwrap()
    }

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let bytes = encode_pfm(&sample_depth());
        let header = b"Pf\n3 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        // first stored row is the bottom image row
        assert_eq!(
            &bytes[header.len()..header.len() + 4],
            &4.0f32.to_le_bytes()
        );
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        let d = sample_depth();
        assert!(decode_pfm(&encode_pfm(&d)).unwrap().bit_eq(&d));
    }

    #[test]
    fn big_endian_is_accepted() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.0f32.to_be_bytes());
        bytes.extend_from_slice(&3.0f32.to_be_bytes());
        let d = decode_pfm(&bytes).unwrap();
        assert_eq!(d.data(), &[3.0, 2.0]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let good = encode_pfm(&sample_depth());
        assert!(decode_pfm(&good[..good.len() - 1]).is_err());
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n\0\0\x80\x3f").is_err());
        assert!(decode_pfm(b"Pf\n0 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n1 x\n-1.0\n\0\0\x80\x3f").is_err());
        assert!(decode_pfm(b"Pf\n1 1\n").is_err());
        assert!(decode_pfm(b"").is_err());
        // negative depth is not a valid depth map
        let mut neg = b"Pf\n1 1\n-1.0\n".to_vec();
        neg.extend_from_slice(&(-1.0f32).to_le_bytes());
        assert!(decode_pfm(&neg).is_err());
    }

    #[test]
    fn frame_round_trip_at_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame_00000.png");
        let f = FrameImage::from_fn(7, 5, |x, y| [x as f64 / 6.0, y as f64 / 4.0, 0.33]).unwrap();
        write_frame(&path, &f).unwrap();
        let back = read_frame(&path).unwrap();
        assert_eq!(back, f.quantized());
    }

    #[test]
    fn truncated_frame_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.png");
        let f = FrameImage::filled(8, 8, [0.5, 0.2, 0.1]).unwrap();
        write_frame(&path, &f).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_frame(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn header_only_dims() {
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("f.png");
        write_frame(&fp, &FrameImage::filled(9, 4, [0.1, 0.2, 0.3]).unwrap()).unwrap();
        assert_eq!(frame_dims(&fp).unwrap(), (9, 4));
        let dp = dir.path().join("d.pfm");
        write_depth(&dp, &sample_depth()).unwrap();
        assert_eq!(depth_dims(&dp).unwrap(), (3, 2));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_depth("/nonexistent/depth_00000.pfm").unwrap_err();
        assert!(err.to_string().contains("depth_00000.pfm"));
    }
}
