//! Grids, physical models and the rank-2 lifted model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{cos, norm_real, sin, sqrt};
use crate::{Error, Result};

/// Regular 2-D grid. Node `(ix, iz)` sits at `(ix·dx, iz·dz)` km and has flat
/// index `iz·nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    nz: usize,
    dx: f64,
    dz: f64,
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, dx: f64, dz: f64) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::shape(format!("grid must be at least 3x3, got {nx}x{nz}")));
        }
        if !(dx > 0.0 && dz > 0.0 && dx.is_finite() && dz.is_finite()) {
            return Err(Error::domain(format!("grid spacing must be positive, got dx={dx}, dz={dz}")));
        }
        Ok(Self { nx, nz, dx, dz })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Number of nodes, `n_g`.
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    /// Largest x and z coordinates in km.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.dx, (self.nz - 1) as f64 * self.dz)
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let (ix, iz) = self.coords(index);
        ix == 0 || iz == 0 || ix == self.nx - 1 || iz == self.nz - 1
    }
}

fn check_positive(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(i) => Err(Error::domain(format!(
            "{what} must be finite and positive, entry {i} is {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn check_len(grid: &Grid2D, len: usize, what: &str) -> Result<()> {
    if len != grid.len() {
        return Err(Error::shape(format!(
            "{what} has {len} entries, grid has {}",
            grid.len()
        )));
    }
    Ok(())
}

/// Squared slowness `m = 1/v²` in s²/km².
#[derive(Debug, Clone, PartialEq)]
pub struct SlownessModel {
    grid: Grid2D,
    values: Vec<f64>,
}

impl SlownessModel {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len(), "slowness model")?;
        check_positive(&values, "squared slowness")?;
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: Grid2D, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest squared slowness, i.e. the slowest velocity.
    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::MIN, |a, &b| a.max(b))
    }
}

/// Velocity in km/s.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    grid: Grid2D,
    values: Vec<f64>,
}

impl VelocityModel {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len(), "velocity model")?;
        check_positive(&values, "velocity")?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn velocity_to_slowness(v: &VelocityModel) -> SlownessModel {
    SlownessModel {
        grid: v.grid,
        values: v.values.iter().map(|v| 1.0 / (v * v)).collect(),
    }
}

pub fn slowness_to_velocity(m: &SlownessModel) -> VelocityModel {
    VelocityModel {
        grid: m.grid,
        values: m.values.iter().map(|m| 1.0 / sqrt(*m)).collect(),
    }
}

/// Lifted model `(m̃₁, m̃₂)` with mixing angle `θ`; `α₁ = sin θ`, `α₂ = cos θ`,
/// so `α₁² + α₂² = 1` holds for every `θ`. The combined model is
/// `m = sin θ·m̃₁ + cos θ·m̃₂`. Components are not required to be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank2Model {
    grid: Grid2D,
    m1: Vec<f64>,
    m2: Vec<f64>,
    theta: f64,
}

impl Rank2Model {
    pub fn new(grid: Grid2D, m1: Vec<f64>, m2: Vec<f64>, theta: f64) -> Result<Self> {
        check_len(&grid, m1.len(), "m1")?;
        check_len(&grid, m2.len(), "m2")?;
        if !theta.is_finite() || m1.iter().chain(&m2).any(|v| !v.is_finite()) {
            return Err(Error::domain("rank-2 model entries and theta must be finite"));
        }
        Ok(Self { grid, m1, m2, theta })
    }

    /// Builds from the stacked vector `[m̃₁; m̃₂]`.
    pub fn from_stacked(grid: Grid2D, stacked: &[f64], theta: f64) -> Result<Self> {
        let n = grid.len();
        if stacked.len() != 2 * n {
            return Err(Error::shape(format!("stacked model needs {} entries", 2 * n)));
        }
        Self::new(grid, stacked[..n].to_vec(), stacked[n..].to_vec(), theta)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn m1(&self) -> &[f64] {
        &self.m1
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `(α₁, α₂) = (sin θ, cos θ)`.
    pub fn alphas(&self) -> (f64, f64) {
        (sin(self.theta), cos(self.theta))
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.m1.len());
        out.extend_from_slice(&self.m1);
        out.extend_from_slice(&self.m2);
        out
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..self.clone() }
    }
}

/// `m = sin θ·m̃₁ + cos θ·m̃₂`. Fails if the result is not a valid slowness.
pub fn combine(r: &Rank2Model) -> Result<SlownessModel> {
    SlownessModel::new(r.grid, combine_values(r))
}

/// Combined values without the positivity check.
pub fn combine_values(r: &Rank2Model) -> Vec<f64> {
    let (a1, a2) = r.alphas();
    r.m1.iter().zip(&r.m2).map(|(x, y)| a1 * x + a2 * y).collect()
}

/// `m̃₁ = sin θ·m`, `m̃₂ = cos θ·m`.
pub fn split(m: &SlownessModel, theta: f64) -> Rank2Model {
    let (a1, a2) = (sin(theta), cos(theta));
    Rank2Model {
        grid: m.grid,
        m1: m.values.iter().map(|v| a1 * v).collect(),
        m2: m.values.iter().map(|v| a2 * v).collect(),
        theta,
    }
}

/// `‖m_t − m_f‖₂ / ‖m_t‖₂`.
pub fn relative_model_error(m_true: &SlownessModel, m_final: &SlownessModel) -> Result<f64> {
    if m_true.grid != m_final.grid {
        return Err(Error::shape("models live on different grids"));
    }
    relative_error(&m_true.values, &m_final.values)
}

/// Slice form of [`relative_model_error`]; accepts arbitrary reals.
pub fn relative_error(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::shape(format!(
            "length mismatch: {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let denom = norm_real(reference);
    if denom == 0.0 {
        return Err(Error::domain("reference model has zero norm"));
    }
    let diff: Vec<f64> = reference.iter().zip(estimate).map(|(a, b)| a - b).collect();
    Ok(norm_real(&diff) / denom)
}

/// Clips the velocity equivalent of `m` into `[v_min, v_max]`.
pub fn apply_bounds(m: &SlownessModel, v_min: f64, v_max: f64) -> Result<SlownessModel> {
    Ok(SlownessModel {
        grid: m.grid,
        values: clip_slowness(&m.values, v_min, v_max)?,
    })
}

pub(crate) fn clip_slowness(values: &[f64], v_min: f64, v_max: f64) -> Result<Vec<f64>> {
    if !(v_min > 0.0 && v_min < v_max) {
        return Err(Error::Config(format!("invalid velocity bounds [{v_min}, {v_max}]")));
    }
    let (lo, hi) = (1.0 / (v_max * v_max), 1.0 / (v_min * v_min));
    Ok(values.iter().map(|m| m.clamp(lo, hi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    LinearGradient,
    Layered,
    Wedge,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-gradient" => Ok(Self::LinearGradient),
            "layered" => Ok(Self::Layered),
            "wedge" => Ok(Self::Wedge),
            other => Err(Error::Config(format!("unknown synthetic model kind '{other}'"))),
        }
    }
}

/// Parameters for [`make_synthetic`]. Depths are in km measured from `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    /// Linear gradient: velocity on the first row.
    pub v_top: f64,
    /// Linear gradient: velocity on the last row.
    pub v_bottom: f64,
    /// Layered/wedge: one velocity per layer, top to bottom.
    pub velocities: Vec<f64>,
    /// Layered/wedge: interface depths, ascending, one fewer than `velocities`.
    /// A node at depth `z` belongs to the layer below every interface with depth ≤ z.
    pub interfaces: Vec<f64>,
    /// Wedge: velocity inside the wedge.
    pub anomaly_velocity: f64,
    /// Wedge: depth of the dipping top surface at `x = 0`.
    pub dip_start: f64,
    /// Wedge: depth of the dipping top surface at the right edge.
    pub dip_end: f64,
    /// Wedge: flat base of the wedge.
    pub wedge_base: f64,
    /// Relative amplitude of a uniform multiplicative perturbation (0 disables).
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            v_top: 1.5,
            v_bottom: 4.5,
            velocities: vec![2.0, 3.0],
            interfaces: vec![1.0],
            anomaly_velocity: 3.5,
            dip_start: 0.5,
            dip_end: 1.0,
            wedge_base: 1.0,
            perturbation: 0.0,
            seed: 0,
        }
    }
}

pub fn make_synthetic(kind: SyntheticKind, grid: Grid2D, params: &SyntheticParams) -> Result<VelocityModel> {
    let (nx, nz) = (grid.nx(), grid.nz());
    let mut values = vec![0.0; grid.len()];
    match kind {
        SyntheticKind::LinearGradient => {
            for iz in 0..nz {
                let t = iz as f64 / (nz - 1) as f64;
                let v = params.v_top + (params.v_bottom - params.v_top) * t;
                values[iz * nx..(iz + 1) * nx].fill(v);
            }
        }
        SyntheticKind::Layered | SyntheticKind::Wedge => {
            if params.velocities.is_empty() || params.interfaces.len() + 1 != params.velocities.len() {
                return Err(Error::Config(format!(
                    "layered model needs one more velocity than interfaces ({} velocities, {} interfaces)",
                    params.velocities.len(),
                    params.interfaces.len()
                )));
            }
            if params.interfaces.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Config("interface depths must be ascending".into()));
            }
            let (x_max, _) = grid.extent();
            for iz in 0..nz {
                let z = iz as f64 * grid.dz();
                let layer = params.interfaces.iter().filter(|&&d| d <= z).count();
                for ix in 0..nx {
                    let mut v = params.velocities[layer];
                    if kind == SyntheticKind::Wedge {
                        let x = ix as f64 * grid.dx();
                        let top = params.dip_start + (params.dip_end - params.dip_start) * x / x_max;
                        if z >= top && z < params.wedge_base {
                            v = params.anomaly_velocity;
                        }
                    }
                    values[grid.index(ix, iz)] = v;
                }
            }
        }
    }
    if params.perturbation != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for v in values.iter_mut() {
            *v *= 1.0 + params.perturbation * rng.random_range(-1.0..=1.0);
        }
    }
    VelocityModel::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
    use proptest::prelude::*;

    fn grid(nx: usize, nz: usize) -> Grid2D {
        Grid2D::new(nx, nz, 1.0, 1.0).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(Grid2D::new(2, 5, 1.0, 1.0).is_err());
        assert!(Grid2D::new(5, 5, 0.0, 1.0).is_err());
        let g = grid(4, 3);
        assert_eq!(g.index(1, 2), 9);
        assert_eq!(g.coords(9), (1, 2));
        assert!(g.is_boundary(0) && !g.is_boundary(g.index(1, 1)));
    }

    #[test]
    fn velocity_conversion() {
        let g = grid(3, 3);
        let one = VelocityModel::new(g, vec![1.0; 9]).unwrap();
        assert!(velocity_to_slowness(&one).values().iter().all(|&m| m == 1.0));
        let two = VelocityModel::new(g, vec![2.0; 9]).unwrap();
        assert!(velocity_to_slowness(&two).values().iter().all(|&m| m == 0.25));
        assert!(VelocityModel::new(g, vec![-1.0; 9]).is_err());
        assert!(VelocityModel::new(g, vec![0.0; 9]).is_err());

        let v = VelocityModel::new(g, (0..9).map(|i| 1.3 + 0.37 * i as f64).collect()).unwrap();
        let back = slowness_to_velocity(&velocity_to_slowness(&v));
        for (a, b) in v.values().iter().zip(back.values()) {
            assert_relative_eq!(a, b, max_relative = 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn combine_examples() {
        let g = grid(3, 3);
        let m0: Vec<f64> = (0..9).map(|i| 0.1 + 0.01 * i as f64).collect();
        let half = SQRT_2 / 2.0;
        let r = Rank2Model::new(g, m0.iter().map(|v| v * half).collect(), m0.iter().map(|v| v * half).collect(), FRAC_PI_4)
            .unwrap();
        for (a, b) in combine_values(&r).iter().zip(&m0) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }

        let r0 = Rank2Model::new(g, vec![5.0; 9], m0.clone(), 0.0).unwrap();
        assert_eq!(combine_values(&r0), m0);

        let small = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
        let mut m1 = vec![0.0; 9];
        let mut m2 = vec![0.0; 9];
        m1[0] = 0.2;
        m1[1] = 0.4;
        m2[0] = 0.1;
        m2[1] = 0.1;
        let out = combine_values(&Rank2Model::new(small, m1, m2, FRAC_PI_4).unwrap());
        assert_relative_eq!(out[0], half * 0.3, max_relative = 1e-15);
        assert_relative_eq!(out[1], half * 0.5, max_relative = 1e-15);
    }

    #[test]
    fn split_examples() {
        let g = grid(3, 3);
        let m = SlownessModel::uniform(g, 1.0).unwrap();
        let r = split(&m, FRAC_PI_4);
        for (a, b) in r.m1().iter().zip(r.m2()) {
            assert_relative_eq!(*a, SQRT_2 / 2.0, max_relative = 1e-15);
            assert_relative_eq!(*b, SQRT_2 / 2.0, max_relative = 1e-15);
        }
        let r = split(&m, FRAC_PI_2);
        assert!(r.m1().iter().all(|&v| v == 1.0));
        assert!(r.m2().iter().all(|&v| v.abs() < 1e-16));
    }

    #[test]
    fn relative_error_examples() {
        let g = grid(3, 3);
        let m = SlownessModel::uniform(g, 0.3).unwrap();
        assert_eq!(relative_model_error(&m, &m).unwrap(), 0.0);
        assert_eq!(relative_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(relative_error(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), core::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(relative_error(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(relative_error(&[1.0], &[1.0, 0.0]).is_err());
        let other = SlownessModel::uniform(grid(4, 3), 0.3).unwrap();
        assert!(matches!(relative_model_error(&m, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn bounds_clip_in_velocity() {
        let g = grid(3, 3);
        let inside = SlownessModel::uniform(g, 0.25).unwrap();
        assert_eq!(apply_bounds(&inside, 1.0, 6.5).unwrap(), inside);
        let fast = SlownessModel::uniform(g, 1e-4).unwrap();
        let clipped = apply_bounds(&fast, 1.0, 6.5).unwrap();
        assert!(clipped.values().iter().all(|&m| (m - 1.0 / 42.25).abs() < 1e-15));
        let mixed = SlownessModel::new(g, (0..9).map(|i| 0.01 + 0.3 * i as f64).collect()).unwrap();
        let once = apply_bounds(&mixed, 1.0, 6.5).unwrap();
        assert_eq!(apply_bounds(&once, 1.0, 6.5).unwrap(), once);
        assert!(apply_bounds(&mixed, 2.0, 1.0).is_err());
    }

    #[test]
    fn synthetic_models() {
        let g = Grid2D::new(5, 10, 0.1, 0.1).unwrap();
        let p = SyntheticParams { v_top: 1.5, v_bottom: 4.5, ..Default::default() };
        let v = make_synthetic(SyntheticKind::LinearGradient, g, &p).unwrap();
        for iz in 0..10 {
            for ix in 0..5 {
                assert_relative_eq!(v.values()[g.index(ix, iz)], 1.5 + 3.0 * iz as f64 / 9.0, max_relative = 1e-15);
            }
        }

        let one = SyntheticParams { velocities: vec![2.5], interfaces: vec![], ..Default::default() };
        let v = make_synthetic(SyntheticKind::Layered, g, &one).unwrap();
        assert!(v.values().iter().all(|&x| x == 2.5));

        assert!(matches!("salt-dome".parse::<SyntheticKind>(), Err(Error::Config(_))));
        let bad = SyntheticParams { velocities: vec![2.0, 3.0], interfaces: vec![], ..Default::default() };
        assert!(make_synthetic(SyntheticKind::Layered, g, &bad).is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let g = Grid2D::new(6, 6, 0.1, 0.1).unwrap();
        let p = SyntheticParams { perturbation: 0.05, seed: 7, ..Default::default() };
        let a = make_synthetic(SyntheticKind::Layered, g, &p).unwrap();
        let b = make_synthetic(SyntheticKind::Layered, g, &p).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic(SyntheticKind::Layered, g, &SyntheticParams { seed: 8, ..p }).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn combine_split_roundtrip(theta in -20.0f64..20.0, vals in proptest::collection::vec(0.01f64..2.0, 9)) {
            let m = SlownessModel::new(grid(3, 3), vals).unwrap();
            let back = combine_values(&split(&m, theta));
            for (a, b) in back.iter().zip(m.values()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
            }
            let (s, c) = split(&m, theta).alphas();
            prop_assert!((s * s + c * c - 1.0).abs() <= f64::EPSILON);
        }

        #[test]
        fn relative_error_is_scale_aware(c in 0.0f64..3.0, vals in proptest::collection::vec(0.01f64..2.0, 1..20)) {
            let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
            let e = relative_error(&vals, &scaled).unwrap();
            prop_assert!((e - (1.0 - c).abs()).abs() <= 1e-12);
        }
    }
}
