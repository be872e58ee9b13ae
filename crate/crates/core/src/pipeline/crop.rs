use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{GrayImage, Image, Mask, Rect};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSpec {
    /// Window side as a multiple of the larger box side.
    pub padding: f64,
    pub output_size: u32,
    /// Zero every pixel outside the detection mask before resampling.
    pub mask_only: bool,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            padding: 1.2,
            output_size: 128,
            mask_only: false,
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.padding >= 1.0 && self.padding.is_finite()) || self.output_size == 0 {
            return Err(Error::InvalidValue(format!("invalid crop spec {self:?}")));
        }
        Ok(())
    }
}

/// Overlap weights of each destination cell with the source pixels along one
/// axis. Source pixel `p` spans `[p - 0.5, p + 0.5)`; the window starts at
/// `start` and each destination cell is `cell` wide.
fn axis_weights(start: f64, cell: f64, count: u32) -> Vec<(i64, Vec<f64>)> {
    (0..count)
        .map(|i| {
            let lo = start + i as f64 * cell;
            let hi = lo + cell;
            let first = (lo + 0.5).floor() as i64;
            let last = (hi + 0.5).ceil() as i64 - 1;
            let weights = (first..=last)
                .map(|p| {
                    let a = lo.max(p as f64 - 0.5);
                    let b = hi.min(p as f64 + 0.5);
                    (b - a).max(0.0)
                })
                .collect();
            (first, weights)
        })
        .collect()
}

/// Area-averaged resampling of the square window `[x0, x0 + side) x [y0, y0 + side)`
/// (continuous pixel coordinates) to `out x out`. `sample` returns 0 outside
/// the source.
pub(crate) fn resample_window(
    sample: impl Fn(i64, i64) -> f32,
    x0: f64,
    y0: f64,
    side: f64,
    out: u32,
) -> GrayImage {
    let cell = side / out as f64;
    let wx = axis_weights(x0, cell, out);
    let wy = axis_weights(y0, cell, out);
    let norm = 1.0 / (cell * cell);
    let mut img = GrayImage::new(out, out);
    for (j, (fy, wys)) in wy.iter().enumerate() {
        for (i, (fx, wxs)) in wx.iter().enumerate() {
            let mut acc = 0.0f64;
            for (dy, wyv) in wys.iter().enumerate() {
                if *wyv == 0.0 {
                    continue;
                }
                let mut row = 0.0f64;
                for (dx, wxv) in wxs.iter().enumerate() {
                    if *wxv == 0.0 {
                        continue;
                    }
                    row += *wxv * sample(fx + dx as i64, fy + dy as i64) as f64;
                }
                acc += *wyv * row;
            }
            img.set(i as u32, j as u32, (acc * norm) as f32);
        }
    }
    img
}

/// Square window geometry `(x0, y0, side)` for a box.
pub(crate) fn crop_window(bbox: &Rect, padding: f64) -> Result<(f64, f64, f64)> {
    if bbox.w == 0 || bbox.h == 0 {
        return Err(Error::ZeroAreaBox);
    }
    let side = padding * bbox.w.max(bbox.h) as f64;
    let (cx, cy) = bbox.center();
    Ok((cx - side / 2.0, cy - side / 2.0, side))
}

/// Square crop centered on the box, zero-padded outside the image and
/// area-resampled to `spec.output_size`.
pub fn extract_crop(gray: &GrayImage, bbox: &Rect, mask: Option<&Mask>, spec: &CropSpec) -> Result<GrayImage> {
    spec.validate()?;
    let (x0, y0, side) = crop_window(bbox, spec.padding)?;
    if let Some(m) = mask {
        gray.check_same_dims(m)?;
    }
    let use_mask = spec.mask_only.then_some(mask).flatten();
    if spec.mask_only && use_mask.is_none() {
        return Err(Error::InvalidValue("mask-only crop requires a mask".into()));
    }
    Ok(resample_window(
        |x, y| match gray.get_checked(x, y) {
            Some(v) if use_mask.is_none_or(|m| m.get(x as u32, y as u32)) => v,
            _ => 0.0,
        },
        x0,
        y0,
        side,
        spec.output_size,
    ))
}

/// Area-averaged downsampling of a whole image to `out_w x out_h`.
pub(crate) fn downsample(img: &Image<f32>, out_w: u32, out_h: u32) -> Image<f32> {
    let cx = img.width() as f64 / out_w as f64;
    let cy = img.height() as f64 / out_h as f64;
    let wx = axis_weights(-0.5, cx, out_w);
    let wy = axis_weights(-0.5, cy, out_h);
    let norm = 1.0 / (cx * cy);
    let mut res = Image::new(out_w, out_h);
    for (j, (fy, wys)) in wy.iter().enumerate() {
        for (i, (fx, wxs)) in wx.iter().enumerate() {
            let mut acc = 0.0;
            for (dy, wyv) in wys.iter().enumerate() {
                for (dx, wxv) in wxs.iter().enumerate() {
                    let w = wyv * wxv;
                    if w > 0.0 {
                        if let Some(v) = img.get_checked(fx + dx as i64, fy + dy as i64) {
                            acc += w * v as f64;
                        }
                    }
                }
            }
            res.set(i as u32, j as u32, (acc * norm) as f32);
        }
    }
    res
}
