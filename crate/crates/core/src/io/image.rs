//! 8-bit image files as `[C, H, W]` tensors in `[0, 1]`.
//!
//! Binary PGM (`P5`) is parsed directly; PNG goes through the `image` crate
//! and must be 8-bit gray or RGB.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

fn unsupported(msg: impl Into<String>) -> Error {
    Error::UnsupportedImage(msg.into())
}

fn from_bytes<T: Scalar>(channels: usize, h: usize, w: usize, raw: &[u8], maxval: u32) -> Result<Tensor<T>> {
    let scale = 1.0 / f64::from(maxval);
    Tensor::new([channels, h, w], raw.iter().map(|&b| T::lit(f64::from(b) * scale)).collect())
}

/// Quantize `[0, 1]` values to bytes; values outside the range are clamped.
pub fn to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    t.data().iter().map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

struct PgmHeader<'a> {
    pos: usize,
    bytes: &'a [u8],
}

impl PgmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| unsupported(format!("PGM header: missing or malformed {what}")))
    }
}

pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    match bytes.get(..2) {
        Some(b"P5") => {}
        Some(b"P2") => return Err(unsupported("ASCII PGM (P2) is not supported; use binary P5")),
        _ => return Err(unsupported("not a binary PGM (missing P5 magic)")),
    }
    let mut hdr = PgmHeader { pos: 2, bytes };
    let w = hdr.number("width")? as usize;
    let h = hdr.number("height")? as usize;
    let maxval = hdr.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(unsupported(format!("PGM maxval {maxval}: only 8-bit images are supported")));
    }
    if !bytes.get(hdr.pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(unsupported("PGM header not terminated by whitespace"));
    }
    let raster = &bytes[hdr.pos + 1..];
    if raster.len() < w * h {
        return Err(unsupported(format!("PGM raster truncated: {} of {} bytes", raster.len(), w * h)));
    }
    from_bytes(1, h, w, &raster[..w * h], maxval)
}

pub fn encode_pgm<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let (c, h, w) = chw(img)?;
    if c != 1 {
        return Err(unsupported(format!("PGM holds one channel, image has {c}")));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(to_bytes(img));
    Ok(out)
}

fn chw<T: Scalar>(img: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::shape("image", format!("expected [C, H, W], got {s:?}"))),
    }
}

fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| unsupported(format!("PNG decode failed: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => from_bytes(1, h, w, buf.as_raw(), 255),
        image::DynamicImage::ImageRgb8(buf) => {
            let raw = buf.as_raw();
            let planar: Vec<u8> = (0..3).flat_map(|c| raw.iter().skip(c).step_by(3).copied()).collect();
            from_bytes(3, h, w, &planar, 255)
        }
        other => Err(unsupported(format!("PNG color type {:?}: only 8-bit gray or RGB is supported", other.color()))),
    }
}

fn encode_png<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let (c, h, w) = chw(img)?;
    let bytes = to_bytes(img);
    let (raw, color) = match c {
        1 => (bytes, image::ExtendedColorType::L8),
        3 => {
            let plane = h * w;
            let interleaved = (0..plane).flat_map(|i| [bytes[i], bytes[plane + i], bytes[2 * plane + i]]).collect();
            (interleaved, image::ExtendedColorType::Rgb8)
        }
        _ => return Err(unsupported(format!("PNG output needs 1 or 3 channels, image has {c}"))),
    };
    let mut out = Vec::new();
    image::ImageEncoder::write_image(image::codecs::png::PngEncoder::new(&mut out), &raw, w as u32, h as u32, color)
        .map_err(|e| unsupported(format!("PNG encode failed: {e}")))?;
    Ok(out)
}

/// Decode by content: PGM `P5` or PNG.
pub fn decode_image<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pgm(bytes)
    } else {
        Err(unsupported("unrecognized image format (expected binary PGM or PNG)"))
    }
}

pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_image(&bytes).map_err(|e| match e {
        Error::UnsupportedImage(m) => unsupported(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Encode by extension: `.png` writes PNG, anything else binary PGM.
pub fn save_image<T: Scalar>(path: impl AsRef<Path>, img: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pgm(img)? };
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_bytes_scale() {
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 128, 64]);
        let t = decode_pgm::<f64>(&bytes).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        let expect = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (a, b) in t.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((t.data()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn pgm_and_png_round_trip() {
        let raw: Vec<u8> = (0..=255u8).chain(0..=255u8).collect::<Vec<_>>()[..3 * 8 * 5].to_vec();
        let t = from_bytes::<f32>(1, 8, 5, &raw[..40], 255).unwrap();
        assert_eq!(to_bytes(&decode_pgm::<f32>(&encode_pgm(&t).unwrap()).unwrap()), raw[..40]);
        assert_eq!(to_bytes(&decode_png::<f32>(&encode_png(&t).unwrap()).unwrap()), raw[..40]);
        let rgb = from_bytes::<f32>(3, 8, 5, &raw, 255).unwrap();
        assert_eq!(to_bytes(&decode_image::<f32>(&encode_png(&rgb).unwrap()).unwrap()), raw);
    }

    #[test]
    fn rejects_unsupported() {
        assert!(matches!(decode_image::<f32>(b"P2\n1 1\n255\n0\n"), Err(Error::UnsupportedImage(m)) if m.contains("P2")));
        assert!(matches!(decode_image::<f32>(b"P5\n1 1\n65535\n\0\0"), Err(Error::UnsupportedImage(m)) if m.contains("8-bit")));
        assert!(decode_image::<f32>(b"P5\n4 4\n255\n\0\0").is_err());
        assert!(decode_image::<f32>(b"GIF89a").is_err());
    }
}
