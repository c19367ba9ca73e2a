//! Power iteration for the largest eigenvalue of Hermitian positive
//! semidefinite operators, and a 2-norm condition estimate built on it.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lu::Factorization;
use crate::math::{dot, norm, sqrt};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub max_iter: usize,
    /// Stop when `‖Ax − λx‖ ≤ tol·λ`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Largest eigenvalue of the Hermitian PSD operator realized by `apply`
/// (`apply(x, y)` writes `y = A x`). The start vector is drawn from a seeded
/// generator so repeated calls agree bit for bit.
pub fn power_iteration<F>(mut apply: F, n: usize, opts: PowerOptions) -> Result<PowerEstimate>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    if n == 0 {
        return Err(Error::shape("power iteration on an empty operator"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let mut estimate = PowerEstimate { value: 0.0, converged: false, iterations: 0, relative_residual: f64::INFINITY };
    for it in 1..=opts.max_iter {
        apply(&x, &mut y);
        let lambda = dot(&x, &y).re;
        let ynorm = norm(&y);
        if ynorm == 0.0 {
            return Ok(PowerEstimate { value: 0.0, converged: true, iterations: it, relative_residual: 0.0 });
        }
        let resid: f64 = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - xi * lambda).norm_sqr())
            .sum::<f64>();
        let rel = sqrt(resid) / lambda.abs();
        estimate = PowerEstimate { value: lambda, converged: rel <= opts.tol, iterations: it, relative_residual: rel };
        if estimate.converged {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ynorm;
        }
    }
    Ok(estimate)
}

/// 2-norm condition estimate `κ̂ = σ_max(M)/σ_min(M)`, computed as
/// `λ_max(MᴴM)^{1/2} · λ_max(M⁻¹M⁻ᴴ)^{1/2}` with matrix-free power iterations.
pub fn condition_estimate(m: &CsrMatrix, opts: PowerOptions) -> Result<f64> {
    let f = Factorization::new(m)?;
    condition_estimate_with(&f, opts)
}

/// As [`condition_estimate`], reusing an existing factorization.
pub fn condition_estimate_with(f: &Factorization, opts: PowerOptions) -> Result<f64> {
    let m = f.matrix();
    let n = m.nrows();
    let big = power_iteration(
        |x, y| {
            let mx = m.mul_vec(x);
            y.copy_from_slice(&m.adjoint_mul_vec(&mx));
        },
        n,
        opts,
    )?;
    let small = power_iteration(
        |x, y| {
            let z = f.solve_adjoint(x);
            y.copy_from_slice(&f.solve(&z));
        },
        n,
        opts,
    )?;
    Ok(sqrt(big.value) * sqrt(small.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag_apply(d: &[f64]) -> impl FnMut(&[Complex64], &mut [Complex64]) + '_ {
        move |x, y| {
            for ((yi, xi), di) in y.iter_mut().zip(x).zip(d) {
                *yi = xi * di;
            }
        }
    }

    #[test]
    fn diagonal_and_identity() {
        let est = power_iteration(diag_apply(&[3.0, 1.0]), 2, PowerOptions::default()).unwrap();
        assert_relative_eq!(est.value, 3.0, max_relative = 1e-6);
        assert!(est.converged);
        for n in [1, 5, 17] {
            let ones = vec![1.0; n];
            let est = power_iteration(diag_apply(&ones), n, PowerOptions::default()).unwrap();
            assert_relative_eq!(est.value, 1.0, max_relative = 1e-12);
        }
        assert!(power_iteration(diag_apply(&[]), 0, PowerOptions::default()).is_err());
    }

    #[test]
    fn zero_operator() {
        let est = power_iteration(diag_apply(&[0.0, 0.0]), 2, PowerOptions::default()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn scale_equivariant() {
        let d = [5.0, 2.0, 1.0, 0.5];
        let d2: Vec<f64> = d.iter().map(|x| 2.0 * x).collect();
        let a = power_iteration(diag_apply(&d), 4, PowerOptions::default()).unwrap().value;
        let b = power_iteration(diag_apply(&d2), 4, PowerOptions::default()).unwrap().value;
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-6);
    }

    #[test]
    fn condition_of_simple_matrices() {
        let opts = PowerOptions::default();
        assert_relative_eq!(condition_estimate(&CsrMatrix::identity(6), opts).unwrap(), 1.0, max_relative = 1e-6);
        let d = CsrMatrix::from_real_diagonal(&[10.0, 1.0]);
        assert_relative_eq!(condition_estimate(&d, opts).unwrap(), 10.0, max_relative = 1e-6);
        let scaled = d.scaled(Complex64::new(0.0, -3.5));
        assert_relative_eq!(condition_estimate(&scaled, opts).unwrap(), 10.0, max_relative = 1e-6);
        assert!(condition_estimate(&CsrMatrix::from_real_diagonal(&[1.0, 0.0]), opts).is_err());
    }
}
