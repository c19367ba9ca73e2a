#![allow(dead_code)]

use lrwi_core::acquisition::{forward_model, Geometry, ObservedData, SourceSpectrum, Survey};
use lrwi_core::grid::{Grid2D, SlownessModel};

/// Square grid with a smooth two-bump perturbation around `base` km/s.
pub fn smooth_model(grid: Grid2D, base: f64, amp: f64, phase: f64) -> SlownessModel {
    let (lx, lz) = grid.extent();
    let vals = (0..grid.len())
        .map(|i| {
            let (ix, iz) = grid.coords(i);
            let (x, z) = (ix as f64 * grid.dx() / lx, iz as f64 * grid.dz() / lz);
            let v = base * (1.0 + amp * ((3.0 * x + phase).sin() * (2.0 * z + 0.5 * phase).cos()));
            1.0 / (v * v)
        })
        .collect();
    SlownessModel::new(grid, vals).unwrap()
}

pub struct Setup {
    pub grid: Grid2D,
    pub survey: Survey,
    pub truth: SlownessModel,
    pub start: SlownessModel,
    pub data: ObservedData,
}

/// `n×n` grid at 50 m spacing, sources near the top, receivers on the top row.
pub fn setup(n: usize, ns: usize, nr: usize, freqs: &[f64]) -> Setup {
    let grid = Grid2D::new(n, n, 0.05, 0.05).unwrap();
    let (lx, _) = grid.extent();
    let geo = Geometry::new(
        grid,
        Geometry::line(ns, 0.1, 0.15, lx - 0.15),
        Geometry::line(nr, 0.0, 0.0, lx),
    )
    .unwrap();
    let truth = smooth_model(grid, 2.0, 0.15, 0.3);
    let start = smooth_model(grid, 2.1, 0.05, 1.1);
    let survey = Survey::for_model(geo, SourceSpectrum::ricker(4.0).unwrap(), &start).unwrap();
    let (data, _) = forward_model(&truth, &survey, freqs).unwrap();
    Setup { grid, survey, truth, start, data }
}

/// Deterministic pseudo-random component indices.
pub fn components(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..count)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as usize) % n
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
