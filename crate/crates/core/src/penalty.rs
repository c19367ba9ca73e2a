//! Penalty weights: `λ = β₁μ₁` and `γ = β₂μ₂`.
//!
//! `μ₁` is the largest eigenvalue of `A⁻ᴴPᵀPA⁻¹`, the scale above which the
//! PDE term dominates the data term. `μ₂` compares the diagonals of the
//! blocks `T_ij = λ·Ã_iᴴÃ_j + α_iα_j·PᵀP` of the rank-2 normal matrix with
//! `m̃_i⊙m̃_j`, the diagonal of the matching `γ`-block:
//! `μ₂ = max_ij ‖diag T_ij‖ / ‖m̃_i⊙m̃_j‖`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::acquisition::{ProjectionOperator, Survey};
use crate::grid::{Rank2Model, SlownessModel};
use crate::helmholtz::assemble_with;
use crate::lrwi::{lifted_operators, FrequencyContext};
use crate::lu::Factorization;
use crate::math::{norm, norm_real};
use crate::power::{power_iteration, PowerEstimate, PowerOptions};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub const DEFAULT_BETA1: f64 = 1e-8;
pub const DEFAULT_BETA2: f64 = 1e-12;
/// `β₂` at or below this is flagged as likely to make `S̃ᴴS̃` singular.
pub const BETA2_WARN: f64 = 1e-16;
/// Relative tolerance of the `μ₁` power iteration.
pub const MU1_TOL: f64 = 1e-4;

pub fn mu1_options() -> PowerOptions {
    PowerOptions { tol: MU1_TOL, ..PowerOptions::default() }
}

/// `λ_max(A⁻ᴴPᵀPA⁻¹)` from a factorization of `A`.
pub fn mu1_from_factorization(lu: &Factorization, proj: &ProjectionOperator, opts: PowerOptions) -> Result<PowerEstimate> {
    if lu.dim() != proj.n_grid() {
        return Err(Error::shape("factorization and projection sizes differ"));
    }
    power_iteration(
        |x, y| {
            let u = lu.solve(x);
            let v = lu.solve_adjoint(&proj.adjoint(&proj.apply(&u)));
            y.copy_from_slice(&v);
        },
        lu.dim(),
        opts,
    )
}

/// `μ₁` for `A(m0)` at frequency `f`.
pub fn estimate_mu1(m0: &SlownessModel, f: f64, survey: &Survey) -> Result<f64> {
    survey.check_model(m0.grid())?;
    let lu = assemble_with(m0, f, survey.boundary())?.factorize().map_err(|e| e.at_frequency(f))?;
    let est = mu1_from_factorization(&lu, survey.projection(), mu1_options())?;
    if !est.converged {
        log::warn!(
            "mu1 power iteration stopped after {} iterations at relative residual {:.2e}",
            est.iterations,
            est.relative_residual
        );
    }
    Ok(est.value)
}

/// `μ₂` from explicit lifted operators `Ã₁`, `Ã₂` and mixing weights `α`.
/// The diagonals `diag(Ã_iᴴÃ_j)_k = Σ_r conj(Ã_i[r,k])·Ã_j[r,k]` are formed
/// column by column without any matrix product.
pub fn mu2_from_operators(
    a1: &CsrMatrix,
    a2: &CsrMatrix,
    alphas: (f64, f64),
    proj: &ProjectionOperator,
    lambda: f64,
    m1: &[f64],
    m2: &[f64],
) -> Result<f64> {
    let n = m1.len();
    if a1.nrows() != a2.nrows() || a1.ncols() != n || a2.ncols() != n || m2.len() != n || proj.n_grid() != n {
        return Err(Error::shape("mu2 operands have inconsistent sizes"));
    }
    let mut ptp = vec![0.0; n];
    for &k in proj.nodes() {
        ptp[k] += 1.0;
    }
    let cols = [a1.transpose(), a2.transpose()];
    let ms = [m1, m2];
    let al = [alphas.0, alphas.1];
    let mut best: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let prod: Vec<f64> = ms[i].iter().zip(ms[j]).map(|(a, b)| a * b).collect();
            let denom = norm_real(&prod);
            if !(denom > 0.0) {
                return Err(Error::domain(format!("m{}⊙m{} is zero, mu2 is undefined", i + 1, j + 1)));
            }
            let diag: Vec<Complex64> = (0..n)
                .map(|k| lambda * column_dot(&cols[i], &cols[j], k) + al[i] * al[j] * ptp[k])
                .collect();
            best = best.max(norm(&diag) / denom);
        }
    }
    Ok(best)
}

/// `Σ_r conj(a[k, r])·b[k, r]` over two sorted CSR rows.
fn column_dot(a: &CsrMatrix, b: &CsrMatrix, k: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut bi = b.row(k).peekable();
    for (ca, va) in a.row(k) {
        while let Some(&(cb, _)) = bi.peek() {
            if cb < ca {
                bi.next();
            } else {
                break;
            }
        }
        if let Some(&(cb, vb)) = bi.peek() {
            if cb == ca {
                acc += va.conj() * vb;
            }
        }
    }
    acc
}

/// `μ₂` for the lifted model at frequency `f`.
pub fn estimate_mu2(r: &Rank2Model, lambda: f64, f: f64, survey: &Survey) -> Result<f64> {
    survey.check_model(r.grid())?;
    let ctx = FrequencyContext::new(survey, f)?;
    let (a1, a2) = lifted_operators(r, &ctx);
    mu2_from_operators(&a1, &a2, r.alphas(), survey.projection(), lambda, r.m1(), r.m2())
}

/// Penalty weights with their scale references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    beta1: f64,
    beta2: f64,
    mu1: f64,
    mu2: f64,
    growth: (f64, f64),
}

/// `λ = β₁μ₁`, `γ = β₂μ₂`. All inputs must be positive and finite.
pub fn make_penalties(beta1: f64, beta2: f64, mu1: f64, mu2: f64) -> Result<PenaltyConfig> {
    for (name, v) in [("beta1", beta1), ("beta2", beta2), ("mu1", mu1), ("mu2", mu2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let cfg = PenaltyConfig { beta1, beta2, mu1, mu2, growth: (1.0, 1.0) };
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    Ok(cfg)
}

impl PenaltyConfig {
    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn lambda(&self) -> f64 {
        self.beta1 * self.mu1
    }

    pub fn gamma(&self) -> f64 {
        self.beta2 * self.mu2
    }

    pub fn growth(&self) -> (f64, f64) {
        self.growth
    }

    /// Per-band multiplicative growth of `(β₁, β₂)`.
    pub fn with_growth(mut self, g1: f64, g2: f64) -> Result<Self> {
        if !(g1 > 0.0 && g2 > 0.0 && g1.is_finite() && g2.is_finite()) {
            return Err(Error::Config(format!("growth factors must be positive, got ({g1}, {g2})")));
        }
        self.growth = (g1, g2);
        Ok(self)
    }

    /// Applies `steps` growth steps to `(β₁, β₂)`. Steps compose:
    /// `schedule_step(a).schedule_step(b) == schedule_step(a + b)` up to rounding.
    pub fn schedule_step(&self, steps: usize) -> Self {
        let mut out = *self;
        for _ in 0..steps {
            out.beta1 *= self.growth.0;
            out.beta2 *= self.growth.1;
        }
        out
    }

    /// Same `β`s against new scale references.
    pub fn with_mus(&self, mu1: f64, mu2: f64) -> Result<Self> {
        make_penalties(self.beta1, self.beta2, mu1, mu2).map(|c| Self { growth: self.growth, ..c })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.beta2 <= BETA2_WARN {
            out.push(format!(
                "beta2 = {:e} is at or below {BETA2_WARN:e}: the augmented normal matrix is likely close to singular or badly scaled",
                self.beta2
            ));
        }
        out
    }
}
