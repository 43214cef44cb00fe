use std::fs;
use std::path::Path;

use crate::error::{config_err, Result};
use crate::glimpse::{extract_glimpse, Frame, GlimpseConfig, Loc};

/// Binary PGM (P5, maxval 255) of `width x height` row-major pixels.
pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, encode(width, height, pixels))?;
    Ok(())
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    write(path, frame.width(), frame.height(), &frame.to_u8())
}

/// Writes the glimpse at `loc` with its patches side by side, focal patch first.
/// Returns the center actually used.
pub fn write_glimpse(path: &Path, frame: &Frame, loc: Loc, cfg: &GlimpseConfig) -> Result<Loc> {
    if !loc.is_valid() {
        return Err(config_err(format!("location ({}, {}) outside [-1, 1]", loc.x, loc.y)));
    }
    let g = extract_glimpse(frame, loc, cfg)?;
    let (n, s) = (cfg.num_patches, cfg.patch_size);
    let data = g.patches.data();
    let mut px = vec![0u8; n * s * s];
    for p in 0..n {
        for r in 0..s {
            for c in 0..s {
                let v = data[(p * s + r) * s + c];
                px[r * n * s + p * s + c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    write(path, n * s, s, &px)?;
    Ok(g.center_used)
}
