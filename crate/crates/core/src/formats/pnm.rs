//! Binary portable graymap (`P5`) encoding. 16-bit samples are big-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::render::{DepthImage, GrayImage, Image, InstanceMap};

/// Decoded graymap with samples widened to `u16`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graymap {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

/// Largest accepted pixel count, to bound allocations on hostile headers.
const MAX_PIXELS: u64 = 1 << 26;

pub fn encode_u16(img: &Image<u16>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(img.data().len() * 2);
    for &v in img.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Quantizes `[0, 1]` intensities to 8 bits.
pub fn encode_gray8(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&g| quantize8(g)));
    out
}

pub fn quantize8(g: f32) -> u8 {
    (g.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("truncated graymap header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos || *pos - start > 10 {
        return Err(Error::Format("bad graymap header number".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad graymap header number".into()))
}

pub fn decode(bytes: &[u8]) -> Result<Graymap> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("not a binary graymap (missing P5)".into()));
    }
    let mut pos = 2;
    let width = header_token(bytes, &mut pos)?;
    let height = header_token(bytes, &mut pos)?;
    let maxval = header_token(bytes, &mut pos)?;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after graymap header".into()));
    }
    pos += 1;
    if width == 0 || height == 0 || width * height > MAX_PIXELS {
        return Err(Error::Format(format!("unsupported graymap size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("bad maxval {maxval}")));
    }
    let n = (width * height) as usize;
    let body = &bytes[pos..];
    let samples: Vec<u16> = if maxval < 256 {
        if body.len() != n {
            return Err(Error::Format(format!("expected {n} bytes of samples, got {}", body.len())));
        }
        body.iter().map(|&b| b as u16).collect()
    } else {
        if body.len() != 2 * n {
            return Err(Error::Format(format!(
                "expected {} bytes of samples, got {}",
                2 * n,
                body.len()
            )));
        }
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if samples.iter().any(|&s| s as u64 > maxval) {
        return Err(Error::Format("sample exceeds maxval".into()));
    }
    Ok(Graymap {
        width: width as u32,
        height: height as u32,
        maxval: maxval as u16,
        samples,
    })
}

pub fn decode_u16(bytes: &[u8]) -> Result<Image<u16>> {
    let g = decode(bytes)?;
    Image::from_vec(g.width, g.height, g.samples)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let g = decode(bytes)?;
    let scale = 1.0 / g.maxval as f32;
    Image::from_vec(
        g.width,
        g.height,
        g.samples.iter().map(|&s| s as f32 * scale).collect(),
    )
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    decode_u16(&super::read_bytes(path)?)
}

pub fn read_instances(path: &Path) -> Result<InstanceMap> {
    decode_u16(&super::read_bytes(path)?)
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    decode_gray(&super::read_bytes(path)?)
}
