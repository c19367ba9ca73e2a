//! 8-bit binary PGM (P5) heat maps.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Encodes `values` (row-major, `width` per row) with a linear map of the
/// finite range onto 0..=255. `+∞` maps to 255; `−∞` and NaN map to 0.
pub fn encode(width: usize, height: usize, values: &[f64]) -> CliResult<Vec<u8>> {
    if width == 0 || height == 0 || values.len() != width * height {
        return Err(CliError::Config(format!("image of {width}x{height} cannot hold {} values", values.len())));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if v == f64::INFINITY {
            255
        } else if !v.is_finite() {
            0
        } else if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

pub fn write(path: &Path, width: usize, height: usize, values: &[f64]) -> CliResult<()> {
    let bytes = encode(width, height, values)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
