use std::str::FromStr;

use crate::error::{GbacError, Result};
use crate::glimpse::Frame;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Layout of a raw frame buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    Gray,
    /// Interleaved RGB.
    Rgb,
}

impl PixelFormat {
    pub fn channels(self) -> usize {
        match self {
            Self::Gray => 1,
            Self::Rgb => 3,
        }
    }
}

impl FromStr for PixelFormat {
    type Err = GbacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grey" | "l" => Ok(Self::Gray),
            "rgb" => Ok(Self::Rgb),
            other => Err(GbacError::Frame(format!("unknown pixel format {other:?}"))),
        }
    }
}

fn convert<V: Copy>(height: usize, width: usize, format: PixelFormat, raw: &[V], to_unit: impl Fn(V) -> f32) -> Result<Frame> {
    let expected = height * width * format.channels();
    if raw.len() != expected {
        return Err(GbacError::Frame(format!(
            "raw frame has {} values, expected {height}x{width}x{}",
            raw.len(),
            format.channels()
        )));
    }
    let pixels = match format {
        PixelFormat::Gray => raw.iter().map(|&v| to_unit(v)).collect(),
        PixelFormat::Rgb => raw
            .chunks_exact(3)
            .map(|p| {
                let y = LUMA[0] * to_unit(p[0]) + LUMA[1] * to_unit(p[1]) + LUMA[2] * to_unit(p[2]);
                y.clamp(0.0, 1.0)
            })
            .collect(),
    };
    Frame::new(height, width, pixels)
}

/// 8-bit intensities in `[0, 255]` to a `[0, 1]` grayscale frame. No resizing.
pub fn preprocess_u8(height: usize, width: usize, format: PixelFormat, raw: &[u8]) -> Result<Frame> {
    convert(height, width, format, raw, |v| v as f32 / 255.0)
}

/// Float intensities already in `[0, 1]` to a grayscale frame. No resizing.
pub fn preprocess_f32(height: usize, width: usize, format: PixelFormat, raw: &[f32]) -> Result<Frame> {
    if let Some(v) = raw.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(GbacError::Frame(format!("float pixel {v} outside [0, 1]")));
    }
    convert(height, width, format, raw, |v| v)
}
