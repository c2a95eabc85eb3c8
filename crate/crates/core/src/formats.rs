//! Image files (PGM, PNG) and the `DIRF` field container.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernelgen::{read_exact, read_u32};
use crate::raster::{GrayImage, Grid};

/// Per-channel header of a `DIRF` container.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelTag {
    pub kind: u8,
    pub n: i32,
    pub m: i32,
    pub w: u32,
}

/// Channel tag used for match-field components.
pub const MATCH_CHANNEL_KIND: u8 = 255;

#[derive(Clone, Debug, PartialEq)]
pub enum FieldPayload {
    Complex(Vec<Vec<Complex64>>),
    Real(Vec<Vec<f64>>),
}

impl FieldPayload {
    fn channels(&self) -> usize {
        match self {
            FieldPayload::Complex(c) => c.len(),
            FieldPayload::Real(c) => c.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub width: usize,
    pub height: usize,
    pub tags: Vec<ChannelTag>,
    pub payload: FieldPayload,
}

/// Writes a `DIRF` container.
///
/// Layout (little-endian): magic `DIRF`, `u8` payload kind (0 complex,
/// 1 real), `u32 M`, `u32 N`, `u32` channel count, per channel
/// `u8 kind, i32 n, i32 m, u32 w`, then each channel row-major as
/// `(f64 re, f64 im)` pairs or single `f64` values.
pub fn write_dirf(
    mut out: impl Write,
    width: usize,
    height: usize,
    tags: &[ChannelTag],
    payload: &FieldPayload,
) -> Result<()> {
    if tags.len() != payload.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channel tags for {} channels",
            tags.len(),
            payload.channels()
        )));
    }
    out.write_all(b"DIRF")?;
    out.write_all(&[matches!(payload, FieldPayload::Real(_)) as u8])?;
    out.write_all(&(width as u32).to_le_bytes())?;
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(tags.len() as u32).to_le_bytes())?;
    for t in tags {
        out.write_all(&[t.kind])?;
        out.write_all(&t.n.to_le_bytes())?;
        out.write_all(&t.m.to_le_bytes())?;
        out.write_all(&t.w.to_le_bytes())?;
    }
    let cells = width * height;
    match payload {
        FieldPayload::Complex(chs) => {
            for ch in chs {
                if ch.len() != cells {
                    return Err(Error::ShapeMismatch(format!("channel of {} values, expected {cells}", ch.len())));
                }
                let mut buf = Vec::with_capacity(cells * 16);
                for c in ch {
                    buf.extend_from_slice(&c.re.to_le_bytes());
                    buf.extend_from_slice(&c.im.to_le_bytes());
                }
                out.write_all(&buf)?;
            }
        }
        FieldPayload::Real(chs) => {
            for ch in chs {
                if ch.len() != cells {
                    return Err(Error::ShapeMismatch(format!("channel of {} values, expected {cells}", ch.len())));
                }
                let mut buf = Vec::with_capacity(cells * 8);
                for v in ch {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                out.write_all(&buf)?;
            }
        }
    }
    Ok(())
}

pub fn read_dirf(mut input: impl Read) -> Result<FieldDump> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic)?;
    if &magic != b"DIRF" {
        return Err(Error::UnsupportedFormat("missing DIRF magic".into()));
    }
    let mut flag = [0u8; 1];
    read_exact(&mut input, &mut flag)?;
    if flag[0] > 1 {
        return Err(Error::CorruptHeader(format!("unknown DIRF payload kind {}", flag[0])));
    }
    let width = read_u32(&mut input)? as usize;
    let height = read_u32(&mut input)? as usize;
    let count = read_u32(&mut input)? as usize;
    let cells = width
        .checked_mul(height)
        .filter(|&c| c <= 1 << 28)
        .ok_or_else(|| Error::CorruptHeader(format!("implausible field size {width}x{height}")))?;
    let mut tags = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let mut k = [0u8; 1];
        read_exact(&mut input, &mut k)?;
        tags.push(ChannelTag {
            kind: k[0],
            n: read_u32(&mut input)? as i32,
            m: read_u32(&mut input)? as i32,
            w: read_u32(&mut input)?,
        });
    }
    let payload = if flag[0] == 0 {
        let mut chs = Vec::with_capacity(count);
        for _ in 0..count {
            let mut raw = vec![0u8; cells * 16];
            read_exact(&mut input, &mut raw)?;
            chs.push(
                raw.chunks_exact(16)
                    .map(|c| {
                        Complex64::new(
                            f64::from_le_bytes(c[..8].try_into().unwrap()),
                            f64::from_le_bytes(c[8..].try_into().unwrap()),
                        )
                    })
                    .collect(),
            );
        }
        FieldPayload::Complex(chs)
    } else {
        let mut chs = Vec::with_capacity(count);
        for _ in 0..count {
            let mut raw = vec![0u8; cells * 8];
            read_exact(&mut input, &mut raw)?;
            chs.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        FieldPayload::Real(chs)
    };
    Ok(FieldDump {
        width,
        height,
        tags,
        payload,
    })
}

/// ITU-R BT.601 luma of an RGB triple.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Reads a PGM (P2/P5) or PNG file into `[0, 1]` samples.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = fs::read(path.as_ref())?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(Error::UnsupportedFormat("expected a PGM (P2/P5) or PNG file".into()))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("bad PGM {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let binary = bytes[1] == b'5';
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("PGM header {width}x{height} maxval {maxval}")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::CorruptHeader("PGM dimensions overflow".into()))?;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let need = count * bpp;
        if bytes.len() < start + need {
            return Err(Error::CorruptHeader(format!(
                "PGM raster has {} bytes, expected {need}",
                bytes.len().saturating_sub(start)
            )));
        }
        let raster = &bytes[start..start + need];
        if bpp == 1 {
            data.extend(raster.iter().map(|&b| b as f64 * scale));
        } else {
            data.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale));
        }
    } else {
        for _ in 0..count {
            let v = cur.number("sample").map_err(|_| Error::CorruptHeader("PGM raster is truncated".into()))?;
            if v > maxval {
                return Err(Error::CorruptHeader(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    }
    GrayImage::new(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader(format!("PNG: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if img.color().has_color() {
        img.to_rgb16()
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0)
            .collect()
    } else {
        img.to_luma16().pixels().map(|p| p[0] as f64 / 65535.0).collect()
    };
    GrayImage::new(w, h, data)
}

/// Encodes `[0, 1]` samples as 8-bit binary PGM.
pub fn encode_pgm8(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.as_slice().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Encodes `[0, 1]` samples as 16-bit binary PGM.
pub fn encode_pgm16(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for &v in image.as_slice() {
        out.extend_from_slice(&((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes());
    }
    out
}

/// Binary mask as 8-bit PGM with values 0 and 255.
pub fn encode_mask(mask: &Grid<bool>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Reads a mask image; samples of at least one half count as set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Grid<bool>> {
    Ok(load_image(path)?.grid().map(|&v| v >= 0.5))
}

/// Min-max normalizes finite values to `[0, 1]`; non-finite entries become 1.
pub fn normalized_map(values: &Grid<f64>) -> GrayImage {
    let finite = values.as_slice().iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(values.width(), values.height(), |x, y| {
        let v = *values.get(x, y);
        if v.is_finite() {
            (v - lo) / span
        } else {
            1.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_bytes() {
        let img = decode_image(b"P5\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn p2_equals_p5() {
        let a = decode_image(b"P2\n# comment\n3 1\n4\n0 2 4\n").unwrap();
        let b = decode_image(b"P5 3 1 4\n\x00\x02\x04").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sixteen_bit_pgm() {
        let img = GrayImage::new(2, 1, vec![0.25, 1.0]).unwrap();
        let back = decode_image(&encode_pgm16(&img)).unwrap();
        assert!((back.get(0, 0) - 0.25).abs() < 1e-4);
        assert_eq!(back.get(1, 0), 1.0);
    }

    #[test]
    fn truncated_pgm_is_corrupt() {
        assert!(matches!(decode_image(b"P5\n2 2\n255\n\x00\xff"), Err(Error::CorruptHeader(_))));
        assert!(matches!(decode_image(b"P2\n2 2\n255\n0 1 2"), Err(Error::CorruptHeader(_))));
        assert!(matches!(decode_image(b"P5\nx 2\n255\n"), Err(Error::CorruptHeader(_))));
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn png_rgb_uses_luma() {
        let mut rgb = image::RgbImage::new(2, 1);
        rgb.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        rgb.put_pixel(1, 0, image::Rgb([255, 255, 255]));
        let mut bytes = Vec::new();
        rgb.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png).unwrap();
        let img = decode_image(&bytes).unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-9);
        assert!((img.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_round_trip() {
        let mask = Grid::from_fn(5, 3, |x, y| (x + y) % 2 == 0);
        let back = decode_image(&encode_mask(&mask)).unwrap().grid().map(|&v| v >= 0.5);
        assert_eq!(back, mask);
    }

    #[test]
    fn real_dirf_round_trip() {
        let tags = [ChannelTag { kind: 0, n: 1, m: 2, w: 0 }];
        let payload = FieldPayload::Real(vec![vec![1.5, -2.0, 3.25, 0.0, 9.0, 1e-300]]);
        let mut bytes = Vec::new();
        write_dirf(&mut bytes, 3, 2, &tags, &payload).unwrap();
        let dump = read_dirf(bytes.as_slice()).unwrap();
        assert_eq!(dump.payload, payload);
        assert_eq!(dump.tags, tags);
        assert!(matches!(read_dirf(&bytes[..bytes.len() - 1]), Err(Error::CorruptHeader(_))));
    }
}
