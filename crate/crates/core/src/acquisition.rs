//! Sources, receivers, source spectra, observed data and forward modeling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{Grid2D, SlownessModel};
use crate::helmholtz::{assemble_with, point_source, AbsorbingBoundary};
use crate::math::{exp, hypot, round, sqrt};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::stats::SolveStats;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Source and receiver positions, snapped to the nearest grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    grid: Grid2D,
    sources: Vec<(f64, f64)>,
    receivers: Vec<(f64, f64)>,
    source_nodes: Vec<usize>,
    receiver_nodes: Vec<usize>,
    max_snap: f64,
}

impl Geometry {
    pub fn new(grid: Grid2D, sources: Vec<(f64, f64)>, receivers: Vec<(f64, f64)>) -> Result<Self> {
        let mut max_snap: f64 = 0.0;
        let mut snap_all = |points: &[(f64, f64)], what: &str| -> Result<Vec<usize>> {
            points
                .iter()
                .map(|&p| {
                    let (node, d) = snap(&grid, p).ok_or_else(|| {
                        Error::domain(format!("{what} at ({}, {}) km lies outside the grid", p.0, p.1))
                    })?;
                    max_snap = max_snap.max(d);
                    Ok(node)
                })
                .collect()
        };
        let source_nodes = snap_all(&sources, "source")?;
        let receiver_nodes = snap_all(&receivers, "receiver")?;
        Ok(Self { grid, sources, receivers, source_nodes, receiver_nodes, max_snap })
    }

    /// `count` points evenly spaced on the horizontal line at depth `z`
    /// between `x0` and `x1` inclusive.
    pub fn line(count: usize, z: f64, x0: f64, x1: f64) -> Vec<(f64, f64)> {
        match count {
            0 => Vec::new(),
            1 => vec![(0.5 * (x0 + x1), z)],
            _ => (0..count).map(|i| (x0 + (x1 - x0) * i as f64 / (count - 1) as f64, z)).collect(),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn sources(&self) -> &[(f64, f64)] {
        &self.sources
    }

    pub fn receivers(&self) -> &[(f64, f64)] {
        &self.receivers
    }

    pub fn source_nodes(&self) -> &[usize] {
        &self.source_nodes
    }

    pub fn receiver_nodes(&self) -> &[usize] {
        &self.receiver_nodes
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Largest distance in km moved by snapping.
    pub fn max_snap_distance(&self) -> f64 {
        self.max_snap
    }
}

fn snap(grid: &Grid2D, (x, z): (f64, f64)) -> Option<(usize, f64)> {
    let (lx, lz) = grid.extent();
    let eps = 1e-9 * lx.max(lz);
    if !(x.is_finite() && z.is_finite()) || x < -eps || z < -eps || x > lx + eps || z > lz + eps {
        return None;
    }
    let ix = (round(x / grid.dx()) as usize).min(grid.nx() - 1);
    let iz = (round(z / grid.dz()) as usize).min(grid.nz() - 1);
    let d = hypot(x - ix as f64 * grid.dx(), z - iz as f64 * grid.dz());
    Some((grid.index(ix, iz), d))
}

/// Receiver sampling operator `P`: one unit entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOperator {
    nodes: Vec<usize>,
    n_grid: usize,
    matrix: CsrMatrix,
}

impl ProjectionOperator {
    pub fn new(n_grid: usize, nodes: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&n| n >= n_grid) {
            return Err(Error::shape(format!("receiver node {bad} outside a grid of {n_grid} nodes")));
        }
        let mut b = TripletBuilder::with_capacity(nodes.len(), n_grid, nodes.len());
        for (r, &n) in nodes.iter().enumerate() {
            b.push_real(r, n, 1.0);
        }
        Ok(Self { matrix: b.build(), nodes, n_grid })
    }

    pub fn from_geometry(g: &Geometry) -> Self {
        Self::new(g.grid.len(), g.receiver_nodes.clone()).expect("snapped nodes are on the grid")
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn n_receivers(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `P u`.
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.nodes.iter().map(|&n| u[n]).collect()
    }

    /// `Pᵀ r` (P is real, so this is also `Pᴴ r`).
    pub fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n_grid];
        for (&n, v) in self.nodes.iter().zip(r) {
            out[n] += v;
        }
        out
    }
}

/// Ricker amplitude spectrum `(2/√π)·(f²/f0³)·exp(−f²/f0²)`.
pub fn ricker_weight(f: f64, f0: f64) -> Result<f64> {
    if !(f > 0.0 && f0 > 0.0) {
        return Err(Error::domain(format!("Ricker spectrum needs positive frequencies, got f = {f}, f0 = {f0}")));
    }
    let pi = core::f64::consts::PI;
    Ok(2.0 / sqrt(pi) * f * f / (f0 * f0 * f0) * exp(-(f * f) / (f0 * f0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SpectrumShape {
    Ricker { center: f64 },
    Flat,
}

/// Complex source weight per frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpectrum {
    shape: SpectrumShape,
    amplitude: f64,
}

impl SourceSpectrum {
    pub fn ricker(center_frequency: f64) -> Result<Self> {
        if !(center_frequency > 0.0 && center_frequency.is_finite()) {
            return Err(Error::domain(format!("center frequency must be positive, got {center_frequency}")));
        }
        Ok(Self { shape: SpectrumShape::Ricker { center: center_frequency }, amplitude: 1.0 })
    }

    /// Same weight at every frequency.
    pub fn flat(amplitude: f64) -> Self {
        Self { shape: SpectrumShape::Flat, amplitude }
    }

    /// Scales the spectrum. A zero amplitude gives zero data, which is useful
    /// as a check but makes the spectrum useless for inversion.
    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn center_frequency(&self) -> Option<f64> {
        match self.shape {
            SpectrumShape::Ricker { center } => Some(center),
            SpectrumShape::Flat => None,
        }
    }

    pub fn weight(&self, f: f64) -> Result<Complex64> {
        let w = match self.shape {
            SpectrumShape::Ricker { center } => ricker_weight(f, center)?,
            SpectrumShape::Flat => 1.0,
        };
        let w = self.amplitude * w;
        if !w.is_finite() {
            return Err(Error::domain(format!("source weight at {f} Hz is not finite")));
        }
        Ok(Complex64::new(w, 0.0))
    }
}

/// Complex data indexed by (source, receiver, frequency), stored with the
/// frequency index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    ns: usize,
    nr: usize,
    frequencies: Vec<f64>,
    values: Vec<Complex64>,
}

impl ObservedData {
    pub fn zeros(ns: usize, nr: usize, frequencies: Vec<f64>) -> Self {
        let len = ns * nr * frequencies.len();
        Self { ns, nr, frequencies, values: vec![ZERO; len] }
    }

    pub fn new(ns: usize, nr: usize, frequencies: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let want = ns * nr * frequencies.len();
        if values.len() != want {
            return Err(Error::shape(format!("data holds {} values, expected {want}", values.len())));
        }
        Ok(Self { ns, nr, frequencies, values })
    }

    pub fn n_sources(&self) -> usize {
        self.ns
    }

    pub fn n_receivers(&self) -> usize {
        self.nr
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, s: usize, r: usize, k: usize) -> usize {
        (s * self.nr + r) * self.frequencies.len() + k
    }

    pub fn get(&self, s: usize, r: usize, k: usize) -> Complex64 {
        self.values[self.index(s, r, k)]
    }

    /// Receiver gather for source `s` at frequency index `k`.
    pub fn row(&self, s: usize, k: usize) -> Vec<Complex64> {
        (0..self.nr).map(|r| self.get(s, r, k)).collect()
    }

    pub fn set_row(&mut self, s: usize, k: usize, row: &[Complex64]) {
        assert_eq!(row.len(), self.nr, "gather length");
        for (r, v) in row.iter().enumerate() {
            let i = self.index(s, r, k);
            self.values[i] = *v;
        }
    }

    /// Frequency index of `f` (matched to 1e−9 relative).
    pub fn frequency_index(&self, f: f64) -> Option<usize> {
        self.frequencies.iter().position(|&g| (g - f).abs() <= 1e-9 * f.abs().max(1.0))
    }

    /// Subset of the data at the listed frequencies, in the listed order.
    pub fn select(&self, freqs: &[f64]) -> Result<Self> {
        let idx: Vec<usize> = freqs
            .iter()
            .map(|&f| self.frequency_index(f).ok_or_else(|| Error::Config(format!("no data at {f} Hz"))))
            .collect::<Result<_>>()?;
        let mut out = Self::zeros(self.ns, self.nr, freqs.to_vec());
        for s in 0..self.ns {
            for (k_new, &k_old) in idx.iter().enumerate() {
                out.set_row(s, k_new, &self.row(s, k_old));
            }
        }
        Ok(out)
    }

    /// Adds Gaussian noise with standard deviation `relative·rms(data)` to
    /// real and imaginary parts independently.
    pub fn with_noise(&self, relative: f64, seed: u64) -> Result<Self> {
        if !(relative >= 0.0 && relative.is_finite()) {
            return Err(Error::Config(format!("noise level must be non-negative, got {relative}")));
        }
        let n = self.values.len().max(1) as f64;
        let rms = sqrt(self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n);
        let sigma = relative * rms;
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("{e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for v in &mut out.values {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
        Ok(out)
    }
}

/// Everything that stays fixed while the model changes: grid, geometry,
/// sampling operator, source spectrum and absorbing-boundary reference.
/// Sharing one survey between data generation and inversion makes the
/// discretizations identical.
#[derive(Debug, Clone)]
pub struct Survey {
    geometry: Geometry,
    projection: ProjectionOperator,
    spectrum: SourceSpectrum,
    boundary: AbsorbingBoundary,
}

impl Survey {
    pub fn new(geometry: Geometry, spectrum: SourceSpectrum, boundary: AbsorbingBoundary) -> Result<Self> {
        if boundary.grid() != geometry.grid() {
            return Err(Error::shape("boundary descriptor and geometry use different grids"));
        }
        let projection = ProjectionOperator::from_geometry(&geometry);
        Ok(Self { geometry, projection, spectrum, boundary })
    }

    /// Boundary reference taken from `reference`.
    pub fn for_model(geometry: Geometry, spectrum: SourceSpectrum, reference: &SlownessModel) -> Result<Self> {
        Self::new(geometry, spectrum, AbsorbingBoundary::from_model(reference))
    }

    pub fn grid(&self) -> &Grid2D {
        self.geometry.grid()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn projection(&self) -> &ProjectionOperator {
        &self.projection
    }

    pub fn spectrum(&self) -> &SourceSpectrum {
        &self.spectrum
    }

    pub fn boundary(&self) -> &AbsorbingBoundary {
        &self.boundary
    }

    /// Right-hand side `q` for source `s` at frequency `f`.
    pub fn source_vector(&self, s: usize, f: f64) -> Result<Vec<Complex64>> {
        let w = self.spectrum.weight(f)?;
        Ok(point_source(self.grid(), self.geometry.source_nodes[s], w))
    }

    pub(crate) fn check_model(&self, grid: &Grid2D) -> Result<()> {
        if grid != self.grid() {
            return Err(Error::shape("model grid differs from the survey grid"));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, d: &ObservedData) -> Result<()> {
        if d.n_sources() != self.geometry.n_sources() || d.n_receivers() != self.geometry.n_receivers() {
            return Err(Error::shape(format!(
                "data has {}x{} source/receiver pairs, survey {}x{}",
                d.n_sources(),
                d.n_receivers(),
                self.geometry.n_sources(),
                self.geometry.n_receivers()
            )));
        }
        Ok(())
    }
}

/// `d_{s,f} = P·A(m, f)⁻¹·q_{s,f}` for all sources and frequencies, one
/// factorization per frequency.
pub fn forward_model(m: &SlownessModel, survey: &Survey, freqs: &[f64]) -> Result<(ObservedData, SolveStats)> {
    survey.check_model(m.grid())?;
    let ns = survey.geometry().n_sources();
    let mut data = ObservedData::zeros(ns, survey.geometry().n_receivers(), freqs.to_vec());
    let mut stats = SolveStats::default();
    for (k, &f) in freqs.iter().enumerate() {
        let gathers = forward_frequency(m, survey, f, &mut stats).map_err(|e| e.at_frequency(f))?;
        for (s, row) in gathers.iter().enumerate() {
            data.set_row(s, k, row);
        }
    }
    Ok((data, stats))
}

fn forward_frequency(m: &SlownessModel, survey: &Survey, f: f64, stats: &mut SolveStats) -> Result<Vec<Vec<Complex64>>> {
    let op = assemble_with(m, f, survey.boundary())?;
    let lu = op.factorize()?;
    stats.record_factorization(lu.dim());
    let mut out = Vec::with_capacity(survey.geometry().n_sources());
    for s in 0..survey.geometry().n_sources() {
        let q = survey.source_vector(s, f)?;
        out.push(survey.projection().apply(&lu.solve(&q)));
    }
    stats.record_solves(out.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn survey(n: usize, ns: usize, nr: usize) -> (Survey, SlownessModel) {
        let g = Grid2D::new(n, n, 0.05, 0.05).unwrap();
        let (lx, _) = g.extent();
        let geo = Geometry::new(g, Geometry::line(ns, 0.1, 0.1, lx - 0.1), Geometry::line(nr, 0.05, 0.0, lx)).unwrap();
        let m = SlownessModel::uniform(g, 0.25).unwrap();
        (Survey::for_model(geo, SourceSpectrum::ricker(5.0).unwrap(), &m).unwrap(), m)
    }

    #[test]
    fn ricker_examples() {
        let f0 = 15.0;
        let at = ricker_weight(f0, f0).unwrap();
        let want = 2.0 / core::f64::consts::PI.sqrt() / f0 * (-1.0f64).exp();
        assert!((at - want).abs() < 1e-15);
        assert!(ricker_weight(1e-8, f0).unwrap() < 1e-17);
        assert!(ricker_weight(0.0, f0).is_err());
        assert!(ricker_weight(-1.0, f0).is_err());
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 1..=60_000 {
            let f = i as f64 * 0.001;
            let w = ricker_weight(f, f0).unwrap();
            if w > best {
                best = w;
                arg = f;
            }
        }
        assert!((arg - f0).abs() <= 0.001);
    }

    #[test]
    fn snapping_and_bounds() {
        let g = Grid2D::new(5, 4, 0.1, 0.2).unwrap();
        let geo = Geometry::new(g, vec![(0.12, 0.31)], vec![(0.4, 0.6), (0.0, 0.0)]).unwrap();
        assert_eq!(geo.source_nodes(), &[g.index(1, 2)]);
        assert_eq!(geo.receiver_nodes(), &[g.index(4, 3), 0]);
        assert!((geo.max_snap_distance() - (0.02f64.powi(2) + 0.09f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!(Geometry::new(g, vec![(0.5, 0.0)], vec![]).is_err());
        assert!(Geometry::new(g, vec![], vec![(0.0, -0.1)]).is_err());
    }

    #[test]
    fn projection_has_one_unit_per_row() {
        let p = ProjectionOperator::new(10, vec![3, 7, 3]).unwrap();
        for r in 0..3 {
            let row: Vec<_> = p.matrix().row(r).collect();
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].1, Complex64::new(1.0, 0.0));
        }
        let u: Vec<Complex64> = (0..10).map(|i| Complex64::new(i as f64, 1.0)).collect();
        assert_eq!(p.apply(&u), p.matrix().mul_vec(&u));
        let r = vec![Complex64::new(1.0, 2.0); 3];
        assert_eq!(p.adjoint(&r), p.matrix().adjoint_mul_vec(&r));
        assert!(ProjectionOperator::new(10, vec![10]).is_err());
    }

    #[test]
    fn zero_spectrum_gives_zero_data() {
        let (s, m) = survey(9, 2, 3);
        let s0 = Survey::for_model(s.geometry().clone(), s.spectrum().with_amplitude(0.0), &m).unwrap();
        let (d, _) = forward_model(&m, &s0, &[3.0, 4.0]).unwrap();
        assert!(d.values().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn doubling_amplitude_doubles_data() {
        let (s, m) = survey(9, 2, 3);
        let s2 = Survey::for_model(s.geometry().clone(), s.spectrum().with_amplitude(2.0), &m).unwrap();
        let (d1, _) = forward_model(&m, &s, &[3.0]).unwrap();
        let (d2, _) = forward_model(&m, &s2, &[3.0]).unwrap();
        for (a, b) in d1.values().iter().zip(d2.values()) {
            assert!((2.0 * a - b).norm() <= 1e-12 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn one_factorization_per_frequency() {
        let (s, m) = survey(9, 4, 3);
        let (_, stats) = forward_model(&m, &s, &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(stats.factorization_count(), 3);
        assert_eq!(stats.factorization_dims(), &[81, 81, 81]);
        assert_eq!(stats.solves(), 12);
    }

    #[test]
    fn data_layout_and_selection() {
        let mut d = ObservedData::zeros(2, 3, vec![1.0, 2.0]);
        assert_eq!(d.index(1, 2, 1), 11);
        d.set_row(1, 1, &[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0)]);
        assert_eq!(d.get(1, 2, 1), Complex64::new(3.0, 0.0));
        let sub = d.select(&[2.0]).unwrap();
        assert_eq!(sub.frequencies(), &[2.0]);
        assert_eq!(sub.row(1, 0), d.row(1, 1));
        assert!(d.select(&[5.0]).is_err());
        assert!(ObservedData::new(1, 1, vec![1.0], vec![]).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let (s, m) = survey(9, 2, 3);
        let (d, _) = forward_model(&m, &s, &[3.0]).unwrap();
        let a = d.with_noise(0.1, 7).unwrap();
        assert_eq!(a, d.with_noise(0.1, 7).unwrap());
        assert_ne!(a, d.with_noise(0.1, 8).unwrap());
        assert_eq!(d.with_noise(0.0, 7).unwrap(), d);
    }
}
