//! Foveated observation extraction.
//!
//! A glimpse is a stack of concentric square patches around one center. Patch
//! `i` covers `patch_size * scale^i` frame pixels per side and is average-pooled
//! down to `patch_size`, so the focal patch keeps full resolution and the
//! periphery gets progressively coarser.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, GbacError, Result};
use crate::nn::Tensor;

/// Grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GbacError::Frame("frame dimensions must be positive".into()));
        }
        if pixels.len() != height * width {
            return Err(GbacError::Frame(format!(
                "frame {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(GbacError::Frame(format!(
                "pixel {i} = {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Quantised 8-bit copy, `round(v * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()
    }
}

/// Normalised glimpse center: `(-1, -1)` is the top-left pixel, `(1, 1)` the bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Loc {
    pub x: f32,
    pub y: f32,
}

impl Loc {
    pub const CENTER: Loc = Loc { x: 0.0, y: 0.0 };

    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }

    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.x) && (-1.0..=1.0).contains(&self.y)
    }

    pub fn clamped(self) -> Self {
        Self {
            x: self.x.clamp(-1.0, 1.0),
            y: self.y.clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlimpseConfig {
    pub num_patches: usize,
    /// Side of the focal (smallest) patch, in pixels.
    pub patch_size: usize,
    pub scale: usize,
}

impl Default for GlimpseConfig {
    fn default() -> Self {
        Self {
            num_patches: 3,
            patch_size: 40,
            scale: 2,
        }
    }
}

impl GlimpseConfig {
    pub fn new(num_patches: usize, patch_size: usize) -> Self {
        Self {
            num_patches,
            patch_size,
            scale: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_patches == 0 {
            return Err(config_err("glimpse.num_patches must be at least 1"));
        }
        if self.patch_size == 0 {
            return Err(config_err("glimpse.patch_size must be positive"));
        }
        if self.scale != 2 {
            return Err(config_err(format!("glimpse.scale must be 2, got {}", self.scale)));
        }
        Ok(())
    }

    /// Raw side of patch `i` before downscaling.
    pub fn raw_side(&self, i: usize) -> usize {
        self.patch_size * self.scale.pow(i as u32)
    }

    pub fn largest_side(&self) -> usize {
        self.raw_side(self.num_patches - 1)
    }

    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let largest = self.largest_side();
        if largest > height.min(width) {
            return Err(config_err(format!(
                "largest glimpse patch {largest} does not fit a {height}x{width} frame"
            )));
        }
        Ok(())
    }

    pub fn pixel_budget(&self) -> usize {
        pixel_budget(self)
    }
}

/// Stacked patches, smallest (focal) first.
#[derive(Debug, Clone, PartialEq)]
pub struct Glimpse {
    /// `[num_patches, patch_size, patch_size]`
    pub patches: Tensor<f32>,
    /// Center of the focal patch after it was shifted inside the frame.
    pub center_used: Loc,
}

/// Values processed per glimpse: `num_patches * patch_size^2`.
pub fn pixel_budget(cfg: &GlimpseConfig) -> usize {
    cfg.num_patches * cfg.patch_size * cfg.patch_size
}

/// Pixel-space `(row, col)` of a normalised location.
pub fn loc_to_pixel(l: Loc, height: usize, width: usize) -> (f64, f64) {
    let row = (l.y as f64 + 1.0) / 2.0 * (height as f64 - 1.0);
    let col = (l.x as f64 + 1.0) / 2.0 * (width as f64 - 1.0);
    (row, col)
}

/// Inverse of [`loc_to_pixel`].
pub fn pixel_to_loc(row: f64, col: f64, height: usize, width: usize) -> Loc {
    let norm = |v: f64, extent: usize| {
        if extent <= 1 {
            0.0
        } else {
            (2.0 * v / (extent as f64 - 1.0) - 1.0).clamp(-1.0, 1.0)
        }
    };
    Loc::new(norm(col, width) as f32, norm(row, height) as f32)
}

/// Top-left corner of a `side x side` patch centered near `center`, shifted to lie inside the frame.
pub fn fit_patch(center: (f64, f64), side: usize, height: usize, width: usize) -> Result<(usize, usize)> {
    if side > height || side > width {
        return Err(config_err(format!(
            "patch of side {side} does not fit a {height}x{width} frame"
        )));
    }
    let half = (side / 2) as i64;
    let fit = |c: f64, extent: usize| -> usize {
        let start = c.round() as i64 - half;
        start.clamp(0, (extent - side) as i64) as usize
    };
    Ok((fit(center.0, height), fit(center.1, width)))
}

/// Average-pools a square 2-D patch by `factor`.
///
/// Each output pixel is the mean of its `factor x factor` source block, summed
/// in row-major order in f64 and then rounded to f32.
pub fn downscale_avg(patch: &Tensor<f32>, factor: usize) -> Result<Tensor<f32>> {
    let (h, w) = match patch.shape() {
        [h, w] => (*h, *w),
        s => return Err(config_err(format!("patch must be 2-d, got {s:?}"))),
    };
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(config_err(format!(
            "patch {h}x{w} not divisible by factor {factor}"
        )));
    }
    let mut out = vec![0f32; (h / factor) * (w / factor)];
    pool_into(patch.data(), w, 0, 0, h, factor, &mut out);
    Tensor::from_vec(&[h / factor, w / factor], out)
}

/// Pools the `side x side` window at `(top, left)` of a row-major image into `out`.
fn pool_into(src: &[f32], stride: usize, top: usize, left: usize, side: usize, factor: usize, out: &mut [f32]) {
    let out_side = side / factor;
    let area = (factor * factor) as f64;
    for oy in 0..out_side {
        for ox in 0..out_side {
            let mut acc = 0f64;
            for dy in 0..factor {
                let row = &src[(top + oy * factor + dy) * stride + left + ox * factor..][..factor];
                for &v in row {
                    acc += v as f64;
                }
            }
            out[oy * out_side + ox] = (acc / area) as f32;
        }
    }
}

/// Extracts the glimpse centered at `l`.
pub fn extract_glimpse(frame: &Frame, l: Loc, cfg: &GlimpseConfig) -> Result<Glimpse> {
    let mut patches = vec![0f32; pixel_budget(cfg)];
    let center_used = extract_glimpse_into(frame, l, cfg, &mut patches)?;
    Ok(Glimpse {
        patches: Tensor::from_vec(&[cfg.num_patches, cfg.patch_size, cfg.patch_size], patches)?,
        center_used,
    })
}

/// Like [`extract_glimpse`] but writes the stacked patches into `out`.
pub fn extract_glimpse_into(frame: &Frame, l: Loc, cfg: &GlimpseConfig, out: &mut [f32]) -> Result<Loc> {
    cfg.validate_for(frame.height, frame.width)?;
    if !l.is_valid() {
        return Err(config_err(format!("glimpse location ({}, {}) outside [-1, 1]", l.x, l.y)));
    }
    if out.len() != pixel_budget(cfg) {
        return Err(config_err("glimpse output buffer has the wrong length"));
    }
    let s = cfg.patch_size;
    let center = loc_to_pixel(l, frame.height, frame.width);
    let mut center_used = l;
    for i in 0..cfg.num_patches {
        let side = cfg.raw_side(i);
        let factor = side / s;
        let (top, left) = fit_patch(center, side, frame.height, frame.width)?;
        let dst = &mut out[i * s * s..(i + 1) * s * s];
        if factor == 1 {
            for r in 0..s {
                dst[r * s..(r + 1) * s]
                    .copy_from_slice(&frame.pixels[(top + r) * frame.width + left..][..s]);
            }
            center_used = pixel_to_loc(
                (top + s / 2) as f64,
                (left + s / 2) as f64,
                frame.height,
                frame.width,
            );
        } else {
            pool_into(&frame.pixels, frame.width, top, left, side, factor, dst);
        }
    }
    Ok(center_used)
}
