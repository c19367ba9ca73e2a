//! Discrete Helmholtz operator `A(m) = L_ω + ω²·diag(m)`.
//!
//! `L_ω` is the 5-point Laplacian with radiating boundary rows. On a boundary
//! node the Laplacian refers to a ghost node outside the grid, which is
//! eliminated with the first-order radiating condition
//! `(u_ghost − u_nbr)/(2h) = iκ·u_b`, `κ = ω·√m_ref`. The reference slowness
//! `m_ref` belongs to the [`AbsorbingBoundary`] descriptor rather than the
//! model being assembled, so `A` stays affine in `m` with exactly `ω²` on the
//! diagonal for every node. The gradient formulas of all three inversion
//! methods depend on that structure.
//!
//! With time dependence `e^{−iωt}` the continuous Green's function of
//! `Δ + k²` is `−(i/4)·H₀⁽¹⁾(k r)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::grid::{Grid2D, SlownessModel};
use crate::lu::Factorization;
use crate::math::sqrt;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{angular, Error, Result};

/// Below this many grid points per minimum wavelength a warning is logged.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 6.0;

/// Reference squared slowness used in the radiating boundary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingBoundary {
    grid: Grid2D,
    reference: Vec<f64>,
}

impl AbsorbingBoundary {
    /// Uses the boundary values of `m`.
    pub fn from_model(m: &SlownessModel) -> Self {
        Self { grid: *m.grid(), reference: m.values().to_vec() }
    }

    pub fn uniform(grid: Grid2D, slowness: f64) -> Result<Self> {
        if !(slowness > 0.0 && slowness.is_finite()) {
            return Err(Error::domain(format!("boundary slowness must be positive, got {slowness}")));
        }
        Ok(Self { grid, reference: vec![slowness; grid.len()] })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn reference(&self, index: usize) -> f64 {
        self.reference[index]
    }
}

/// `L_ω`: 5-point Laplacian with ghost-eliminated radiating boundary rows.
/// At `ω = 0` the boundary rows reduce to reflecting (Neumann) rows.
pub fn laplacian(grid: &Grid2D, omega: f64, bc: &AbsorbingBoundary) -> Result<CsrMatrix> {
    if bc.grid != *grid {
        return Err(Error::shape("boundary descriptor belongs to a different grid"));
    }
    let (nx, nz) = (grid.nx(), grid.nz());
    let (hx2, hz2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dz() * grid.dz()));
    let mut b = TripletBuilder::with_capacity(grid.len(), grid.len(), 5 * grid.len());
    for iz in 0..nz {
        for ix in 0..nx {
            let i = grid.index(ix, iz);
            let kappa = omega * sqrt(bc.reference[i]);
            let mut diag = Complex64::new(0.0, 0.0);
            // One axis at a time: interior gets the centred stencil, an edge
            // gets the ghost-eliminated stencil toward its interior neighbor.
            for (pos, n, h, inv_h2, stride) in [(ix, nx, grid.dx(), hx2, 1usize), (iz, nz, grid.dz(), hz2, nx)] {
                if pos == 0 || pos == n - 1 {
                    let nbr = if pos == 0 { i + stride } else { i - stride };
                    b.push_real(i, nbr, 2.0 * inv_h2);
                    diag += Complex64::new(-2.0 * inv_h2, 2.0 * kappa / h);
                } else {
                    b.push_real(i, i - stride, inv_h2);
                    b.push_real(i, i + stride, inv_h2);
                    diag -= 2.0 * inv_h2;
                }
            }
            b.push(i, i, diag);
        }
    }
    Ok(b.build())
}

/// Assembled `A(m)` at one frequency.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    matrix: CsrMatrix,
    frequency: f64,
    omega: f64,
    model_hash: u64,
    boundary: AbsorbingBoundary,
    points_per_wavelength: f64,
}

impl HelmholtzOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// FNV-1a digest of the model values the operator was assembled from.
    pub fn model_hash(&self) -> u64 {
        self.model_hash
    }

    pub fn boundary(&self) -> &AbsorbingBoundary {
        &self.boundary
    }

    pub fn points_per_wavelength(&self) -> f64 {
        self.points_per_wavelength
    }

    pub fn factorize(&self) -> Result<Factorization> {
        Factorization::new(&self.matrix)
    }
}

pub(crate) fn model_hash(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Grid points per minimum wavelength for `m` at `frequency`.
pub fn points_per_wavelength(m: &SlownessModel, frequency: f64) -> f64 {
    let v_min = 1.0 / sqrt(m.max());
    let h = m.grid().dx().max(m.grid().dz());
    v_min / frequency / h
}

/// `A(m)` with the boundary reference taken from `m` itself.
pub fn assemble(m: &SlownessModel, frequency: f64) -> Result<HelmholtzOperator> {
    assemble_with(m, frequency, &AbsorbingBoundary::from_model(m))
}

pub fn assemble_with(m: &SlownessModel, frequency: f64, bc: &AbsorbingBoundary) -> Result<HelmholtzOperator> {
    if !(frequency >= 0.0 && frequency.is_finite()) {
        return Err(Error::domain(format!("frequency must be non-negative, got {frequency}")));
    }
    let omega = angular(frequency);
    let lap = laplacian(m.grid(), omega, bc)?;
    let matrix = add_mass(&lap, omega, m.values());
    let ppw = if frequency > 0.0 { points_per_wavelength(m, frequency) } else { f64::INFINITY };
    if ppw < MIN_POINTS_PER_WAVELENGTH {
        log::warn!("{ppw:.2} points per wavelength at {frequency} Hz (fewer than {MIN_POINTS_PER_WAVELENGTH})");
    }
    Ok(HelmholtzOperator {
        matrix,
        frequency,
        omega,
        model_hash: model_hash(m.values()),
        boundary: bc.clone(),
        points_per_wavelength: ppw,
    })
}

/// `scale·L + ω²·diag(m)`; the result shares the pattern of `L`.
pub fn scaled_laplacian_plus_mass(lap: &CsrMatrix, scale: f64, omega: f64, m: &[f64]) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(lap.nrows(), lap.ncols(), lap.nnz());
    for (r, c, v) in lap.triplets() {
        b.push(r, c, v * scale);
    }
    for (i, mi) in m.iter().enumerate() {
        b.push_real(i, i, omega * omega * mi);
    }
    b.build()
}

fn add_mass(lap: &CsrMatrix, omega: f64, m: &[f64]) -> CsrMatrix {
    scaled_laplacian_plus_mass(lap, 1.0, omega, m)
}

/// Factorizes and solves `A u = q`.
pub fn solve(op: &HelmholtzOperator, q: &[Complex64]) -> Result<Vec<Complex64>> {
    if q.len() != op.matrix.nrows() {
        return Err(Error::shape(format!("source has {} entries, operator {}", q.len(), op.matrix.nrows())));
    }
    Ok(op.factorize()?.solve(q))
}

/// Discrete delta of strength `amplitude` at node `index`: `amplitude/(dx·dz)`.
pub fn point_source(grid: &Grid2D, index: usize, amplitude: Complex64) -> Vec<Complex64> {
    let mut q = vec![Complex64::new(0.0, 0.0); grid.len()];
    q[index] = amplitude / (grid.dx() * grid.dz());
    q
}
