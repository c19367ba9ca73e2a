//! Least squares through the normal equations.
//!
//! `min ‖M x − b‖` is solved from a Cholesky factorization of `MᴴM`, followed by
//! corrected semi-normal refinement `x ← x + (MᴴM)⁻¹ Mᴴ(b − M x)`. The
//! residual is formed with `M` itself, never with the rounded product `MᴴM`,
//! which recovers most of the accuracy lost by squaring the condition number
//! as long as `κ(M)²·ε < 1`.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::chol::Cholesky;
use crate::math::norm;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

const MAX_REFINE: usize = 6;
/// Stop refining once a correction is this small relative to the iterate.
const REFINE_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct NormalEquations {
    op: CsrMatrix,
    chol: Cholesky,
}

impl NormalEquations {
    /// Factorizes `MᴴM`.
    pub fn new(op: CsrMatrix) -> Result<Self> {
        let chol = Cholesky::new(&op.gram())?;
        Ok(Self { op, chol })
    }

    pub fn operator(&self) -> &CsrMatrix {
        &self.op
    }

    pub fn factorization(&self) -> &Cholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    /// `‖Mᴴ(M x − b)‖ / ‖Mᴴ b‖`, zero for `b` with `Mᴴ b = 0` and `x = 0`.
    pub fn optimality_residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let bn = norm(&self.op.adjoint_mul_vec(b));
        let g = norm(&self.gradient(x, b));
        if bn == 0.0 {
            if g == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            g / bn
        }
    }

    /// `Mᴴ(b − M x)`.
    fn gradient(&self, x: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let r: Vec<Complex64> = b.iter().zip(self.op.mul_vec(x)).map(|(bi, mi)| bi - mi).collect();
        self.op.adjoint_mul_vec(&r)
    }

    /// Least-squares solution and its relative optimality residual.
    pub fn solve(&self, b: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        if b.len() != self.op.nrows() {
            return Err(Error::shape("right-hand side length does not match the operator"));
        }
        let mut x = self.chol.solve(&self.op.adjoint_mul_vec(b));
        let mut last = f64::INFINITY;
        for _ in 0..MAX_REFINE {
            let dx = self.chol.solve(&self.gradient(&x, b));
            let (dn, xn) = (norm(&dx), norm(&x));
            if dn >= last {
                // Stagnated at the rounding floor.
                break;
            }
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
            if dn <= REFINE_TOL * xn || xn == 0.0 {
                break;
            }
            last = dn;
        }
        let rel = self.optimality_residual(&x, b);
        Ok((x, rel))
    }
}
