//! Rank-2 lift-and-relax WRI.
//!
//! The model is lifted to `(m̃₁, m̃₂)` mixed by `θ` (`α = (sin θ, cos θ)`) and
//! the wavefield to `(ũ₁, ũ₂)`. For one source and frequency the objective is
//!
//! ```text
//! f = ½‖r‖² + (λ/2)‖p‖² + (γ/2)‖s‖²
//! w = sin θ ũ₁ + cos θ ũ₂
//! r = P w − d
//! p = L w + ω²(m̃₁⊙ũ₁ + m̃₂⊙ũ₂) − q
//! s = m̃₁⊙ũ₂ − m̃₂⊙ũ₁
//! ```
//!
//! where `L` is the boundary-aware Laplacian of [`crate::helmholtz`]. The
//! objective is quadratic in `ũ`, so `ũ*` is the least-squares solution of
//! `S̃ ũ = [d; √λ q; 0]` with
//!
//! ```text
//!      ⎡ sin θ·P               cos θ·P              ⎤
//! S̃ =  ⎢ √λ(sin θ·L + ω²m̃₁)    √λ(cos θ·L + ω²m̃₂)   ⎥
//!      ⎣ √γ·diag(m̃₂)           −√γ·diag(m̃₁)         ⎦
//! ```
//!
//! obtained from the normal equations `S̃ᴴS̃ ũ = S̃ᴴ rhs`. `S̃` does not depend on
//! the source, so one factorization of the `2n_g × 2n_g` normal matrix per
//! frequency serves every source. Because `∇_ũ f = 0` at `ũ*`, the projected
//! objective's gradients are the partial derivatives at fixed `ũ*`.
//!
//! A rank-1 point `m̃ = (sin θ·m, cos θ·m)`, `ũ = (sin θ·u, cos θ·u)` gives
//! `w = u`, `p = A(m)u − q` and `s = 0`, so the objective reduces to WRI.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::acquisition::{ObservedData, ProjectionOperator, Survey};
use crate::dense::{numerical_rank, singular_values};
use crate::grid::Rank2Model;
use crate::helmholtz::{laplacian, scaled_laplacian_plus_mass};
use crate::lsq::NormalEquations;
use crate::chol::Cholesky;
use crate::math::{dot, norm_sqr, sqrt};
use crate::objective::{Evaluation, ObjectiveReport, PairTerms, PROJECTION_TOL};
use crate::sparse::CsrMatrix;
use crate::stats::SolveStats;
use crate::{angular, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest `2n_g` accepted by the dense rank diagnostic.
pub const DENSE_RANK_LIMIT: usize = 800;

/// Lifted wavefield pair for one source and frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank2Wavefield {
    pub u1: Vec<Complex64>,
    pub u2: Vec<Complex64>,
}

impl Rank2Wavefield {
    /// `(sin θ·u, cos θ·u)`.
    pub fn lift(u: &[Complex64], theta: f64) -> Self {
        let (a1, a2) = (crate::math::sin(theta), crate::math::cos(theta));
        Self { u1: u.iter().map(|z| z * a1).collect(), u2: u.iter().map(|z| z * a2).collect() }
    }

    pub fn stacked(&self) -> Vec<Complex64> {
        let mut v = self.u1.clone();
        v.extend_from_slice(&self.u2);
        v
    }

    fn from_stacked(v: Vec<Complex64>) -> Self {
        let n = v.len() / 2;
        let mut u1 = v;
        let u2 = u1.split_off(n);
        Self { u1, u2 }
    }
}

/// PDE, rank-1 and data residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub p: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub r: Vec<Complex64>,
}

/// Per-frequency operators that do not depend on the model.
#[derive(Debug, Clone)]
pub struct FrequencyContext {
    pub frequency: f64,
    pub omega: f64,
    /// `L_ω`.
    pub laplacian: CsrMatrix,
}

impl FrequencyContext {
    pub fn new(survey: &Survey, frequency: f64) -> Result<Self> {
        let omega = angular(frequency);
        Ok(Self { frequency, omega, laplacian: laplacian(survey.grid(), omega, survey.boundary())? })
    }
}

/// `Ã(m̃ᵢ) = αᵢ·L + ω²·diag(m̃ᵢ)` for `i = 1, 2`.
pub fn lifted_operators(r: &Rank2Model, ctx: &FrequencyContext) -> (CsrMatrix, CsrMatrix) {
    let (a1, a2) = r.alphas();
    (
        scaled_laplacian_plus_mass(&ctx.laplacian, a1, ctx.omega, r.m1()),
        scaled_laplacian_plus_mass(&ctx.laplacian, a2, ctx.omega, r.m2()),
    )
}

/// The augmented operator `S̃`, shape `(n_r + 2n_g) × 2n_g`.
pub fn build_augmented(
    r: &Rank2Model,
    ctx: &FrequencyContext,
    proj: &ProjectionOperator,
    lambda: f64,
    gamma: f64,
) -> Result<CsrMatrix> {
    check_penalties(lambda, gamma)?;
    let n = r.grid().len();
    if proj.n_grid() != n {
        return Err(Error::shape("projection operator and model use different grids"));
    }
    let (a1, a2) = r.alphas();
    let (t1, t2) = lifted_operators(r, ctx);
    let sl = Complex64::new(sqrt(lambda), 0.0);
    let (p1, p2) = (proj.matrix().scaled(Complex64::new(a1, 0.0)), proj.matrix().scaled(Complex64::new(a2, 0.0)));
    let (t1, t2) = (t1.scaled(sl), t2.scaled(sl));
    let sg = sqrt(gamma);
    let d2 = CsrMatrix::from_real_diagonal(&r.m2().iter().map(|v| sg * v).collect::<Vec<_>>());
    let d1 = CsrMatrix::from_real_diagonal(&r.m1().iter().map(|v| -sg * v).collect::<Vec<_>>());
    let gamma_blocks = if gamma > 0.0 { [Some(&d2), Some(&d1)] } else { [None, None] };
    CsrMatrix::from_blocks(
        &[proj.n_receivers(), n, n],
        &[n, n],
        &[Some(&p1), Some(&p2), Some(&t1), Some(&t2), gamma_blocks[0], gamma_blocks[1]],
    )
}

fn check_penalties(lambda: f64, gamma: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Factorized `S̃ᴴS̃` for one model, angle and frequency.
#[derive(Debug, Clone)]
pub struct Rank2System {
    normal: NormalEquations,
    lambda: f64,
    gamma: f64,
    n_receivers: usize,
}

impl Rank2System {
    /// Singular normal matrices are reported as [`Error::BadlyScaled`].
    pub fn new(r: &Rank2Model, ctx: &FrequencyContext, proj: &ProjectionOperator, lambda: f64, gamma: f64) -> Result<Self> {
        let augmented = build_augmented(r, ctx, proj, lambda, gamma)?;
        let normal = NormalEquations::new(augmented).map_err(|e| match e {
            Error::Singular { pivot, .. } => Error::BadlyScaled { lambda, gamma, betas: None, pivot: Some(pivot) },
            other => other,
        })?;
        Ok(Self { normal, lambda, gamma, n_receivers: proj.n_receivers() })
    }

    pub fn augmented(&self) -> &CsrMatrix {
        self.normal.operator()
    }

    pub fn normal_matrix(&self) -> &CsrMatrix {
        self.normal.factorization().matrix()
    }

    pub fn factorization(&self) -> &Cholesky {
        self.normal.factorization()
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    /// `[d; √λ q; 0]`.
    pub fn rhs(&self, d_row: &[Complex64], q: &[Complex64]) -> Vec<Complex64> {
        let sl = sqrt(self.lambda);
        let rows = self.augmented().nrows();
        let mut rhs = Vec::with_capacity(rows);
        rhs.extend_from_slice(d_row);
        rhs.extend(q.iter().map(|z| z * sl));
        rhs.resize(rows, ZERO);
        rhs
    }

    /// `‖S̃ᴴ(S̃ũ − rhs)‖ / ‖S̃ᴴ rhs‖`.
    pub fn optimality_residual(&self, u: &Rank2Wavefield, rhs: &[Complex64]) -> f64 {
        self.normal.optimality_residual(&u.stacked(), rhs)
    }

    /// `ũ*` for one gather, with its relative optimality residual. Fails with
    /// [`Error::BadlyScaled`] if refinement cannot reach [`PROJECTION_TOL`].
    pub fn solve(&self, d_row: &[Complex64], q: &[Complex64]) -> Result<(Rank2Wavefield, f64)> {
        if d_row.len() != self.n_receivers || 2 * q.len() != self.dim() {
            return Err(Error::shape("gather or source length does not match the augmented system"));
        }
        let (x, rel) = self.normal.solve(&self.rhs(d_row, q))?;
        let u = Rank2Wavefield::from_stacked(x);
        if !(rel <= PROJECTION_TOL) {
            return Err(Error::BadlyScaled { lambda: self.lambda, gamma: self.gamma, betas: None, pivot: None });
        }
        Ok((u, rel))
    }
}

/// Convenience wrapper: factorize and solve one gather.
pub fn solve_rank2_u(
    r: &Rank2Model,
    ctx: &FrequencyContext,
    proj: &ProjectionOperator,
    lambda: f64,
    gamma: f64,
    d_row: &[Complex64],
    q: &[Complex64],
) -> Result<Rank2Wavefield> {
    Ok(Rank2System::new(r, ctx, proj, lambda, gamma)?.solve(d_row, q)?.0)
}

pub fn lrwi_residuals(
    r: &Rank2Model,
    u: &Rank2Wavefield,
    ctx: &FrequencyContext,
    proj: &ProjectionOperator,
    d_row: &[Complex64],
    q: &[Complex64],
) -> Residuals {
    let (a1, a2) = r.alphas();
    let w2 = ctx.omega * ctx.omega;
    let w: Vec<Complex64> = u.u1.iter().zip(&u.u2).map(|(x, y)| x * a1 + y * a2).collect();
    let mut p = ctx.laplacian.mul_vec(&w);
    for i in 0..p.len() {
        p[i] += w2 * (r.m1()[i] * u.u1[i] + r.m2()[i] * u.u2[i]) - q[i];
    }
    let s = (0..w.len()).map(|i| r.m1()[i] * u.u2[i] - r.m2()[i] * u.u1[i]).collect();
    let rr = proj.apply(&w).iter().zip(d_row).map(|(a, b)| a - b).collect();
    Residuals { p, s, r: rr }
}

fn pair_terms(res: &Residuals, lambda: f64, gamma: f64, source: usize, frequency: f64) -> PairTerms {
    PairTerms {
        source,
        frequency,
        data: 0.5 * norm_sqr(&res.r),
        pde: 0.5 * lambda * norm_sqr(&res.p),
        rank1: 0.5 * gamma * norm_sqr(&res.s),
    }
}

/// Adds one pair's gradient contributions at fixed `ũ`.
#[allow(clippy::too_many_arguments)]
fn accumulate_grads(
    r: &Rank2Model,
    u: &Rank2Wavefield,
    res: &Residuals,
    ctx: &FrequencyContext,
    proj: &ProjectionOperator,
    lambda: f64,
    gamma: f64,
    grad_m: &mut [f64],
    grad_theta: &mut f64,
) {
    let n = u.u1.len();
    let lw2 = lambda * ctx.omega * ctx.omega;
    let (g1, g2) = grad_m.split_at_mut(n);
    for i in 0..n {
        let (c1, c2) = (u.u1[i].conj(), u.u2[i].conj());
        g1[i] += (lw2 * c1 * res.p[i] + gamma * c2 * res.s[i]).re;
        g2[i] += (lw2 * c2 * res.p[i] - gamma * c1 * res.s[i]).re;
    }
    let (a1, a2) = r.alphas();
    let term = |ui: &[Complex64]| dot(&proj.apply(ui), &res.r) + lambda * dot(&ctx.laplacian.mul_vec(ui), &res.p);
    *grad_theta += (a2 * term(&u.u1) - a1 * term(&u.u2)).re;
}

/// Objective at given wavefields, one entry of `u` per `(frequency, source)`
/// in frequency-major order.
pub fn lrwi_value(
    r: &Rank2Model,
    u: &[Rank2Wavefield],
    lambda: f64,
    gamma: f64,
    data: &ObservedData,
    survey: &Survey,
) -> Result<ObjectiveReport> {
    Ok(lrwi_value_and_grads(r, u, lambda, gamma, data, survey)?.0)
}

/// Gradients `(∇_{[m̃₁; m̃₂]}, ∂/∂θ)` at fixed wavefields. They equal the
/// gradients of the projected objective when `u` is the projection `ũ*`.
pub fn lrwi_grads(
    r: &Rank2Model,
    u_star: &[Rank2Wavefield],
    lambda: f64,
    gamma: f64,
    data: &ObservedData,
    survey: &Survey,
) -> Result<(Vec<f64>, f64)> {
    let (_, g, t) = lrwi_value_and_grads(r, u_star, lambda, gamma, data, survey)?;
    Ok((g, t))
}

fn lrwi_value_and_grads(
    r: &Rank2Model,
    u: &[Rank2Wavefield],
    lambda: f64,
    gamma: f64,
    data: &ObservedData,
    survey: &Survey,
) -> Result<(ObjectiveReport, Vec<f64>, f64)> {
    survey.check_model(r.grid())?;
    survey.check_data(data)?;
    let ns = data.n_sources();
    if u.len() != ns * data.frequencies().len() {
        return Err(Error::shape(format!("{} wavefields for {} source/frequency pairs", u.len(), ns * data.frequencies().len())));
    }
    let n = r.grid().len();
    let (mut grad_m, mut grad_theta) = (vec![0.0; 2 * n], 0.0);
    let mut pairs = Vec::with_capacity(u.len());
    for (k, &f) in data.frequencies().iter().enumerate() {
        let ctx = FrequencyContext::new(survey, f)?;
        for s in 0..ns {
            let uk = &u[k * ns + s];
            let (q, d_row) = (survey.source_vector(s, f)?, data.row(s, k));
            let res = lrwi_residuals(r, uk, &ctx, survey.projection(), &d_row, &q);
            accumulate_grads(r, uk, &res, &ctx, survey.projection(), lambda, gamma, &mut grad_m, &mut grad_theta);
            pairs.push(pair_terms(&res, lambda, gamma, s, f));
        }
    }
    Ok((ObjectiveReport::from_pairs(pairs), grad_m, grad_theta))
}

/// Projected objective and gradients.
#[derive(Debug, Clone)]
pub struct LrwiEvaluation {
    pub evaluation: Evaluation,
    /// `ũ*` per `(frequency, source)`, frequency-major.
    pub wavefields: Vec<Rank2Wavefield>,
}

/// Solves for `ũ*` (one factorization per frequency), then evaluates the
/// objective and both gradients there.
pub fn lrwi_evaluate(
    r: &Rank2Model,
    lambda: f64,
    gamma: f64,
    data: &ObservedData,
    survey: &Survey,
) -> Result<LrwiEvaluation> {
    survey.check_model(r.grid())?;
    survey.check_data(data)?;
    let ns = data.n_sources();
    let n = r.grid().len();
    let (mut grad_m, mut grad_theta) = (vec![0.0; 2 * n], 0.0);
    let mut pairs = Vec::new();
    let mut wavefields = Vec::with_capacity(ns * data.frequencies().len());
    let mut stats = SolveStats::default();
    let mut worst: f64 = 0.0;
    for (k, &f) in data.frequencies().iter().enumerate() {
        let res: Result<()> = (|| {
            let ctx = FrequencyContext::new(survey, f)?;
            let sys = Rank2System::new(r, &ctx, survey.projection(), lambda, gamma)?;
            stats.record_factorization(sys.dim());
            for s in 0..ns {
                let (q, d_row) = (survey.source_vector(s, f)?, data.row(s, k));
                let (u, rel) = sys.solve(&d_row, &q)?;
                worst = worst.max(rel);
                let res = lrwi_residuals(r, &u, &ctx, survey.projection(), &d_row, &q);
                accumulate_grads(r, &u, &res, &ctx, survey.projection(), lambda, gamma, &mut grad_m, &mut grad_theta);
                pairs.push(pair_terms(&res, lambda, gamma, s, f));
                wavefields.push(u);
            }
            stats.record_solves(ns);
            Ok(())
        })();
        res.map_err(|e| e.at_frequency(f))?;
    }
    Ok(LrwiEvaluation {
        evaluation: Evaluation {
            report: ObjectiveReport::from_pairs(pairs),
            gradient: grad_m,
            grad_theta,
            max_projection_residual: worst,
            stats,
        },
        wavefields,
    })
}

/// Dense rank diagnostic of the augmented system.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCheck {
    /// Number of unknowns, `2n_g`.
    pub columns: usize,
    /// Numerical rank of `S` (data and PDE blocks only).
    pub rank: usize,
    /// `2n_g − rank(S)`.
    pub nullity: usize,
    /// Dimension count `n_g − n_r`, a lower bound on the nullity.
    pub nullity_lower_bound: usize,
    /// Numerical rank once the `√γ` block is appended (`None` if `γ = 0`).
    pub rank_with_gamma: Option<usize>,
}

/// Relative singular-value cutoff used by [`s_rank_deficiency_check`].
pub const RANK_TOL: f64 = 1e-10;

/// Rank of `S = [αP; √λ Ã]` (and of `S̃` when `γ > 0`) via a dense SVD.
pub fn s_rank_deficiency_check(
    r: &Rank2Model,
    ctx: &FrequencyContext,
    proj: &ProjectionOperator,
    lambda: f64,
    gamma: f64,
) -> Result<RankCheck> {
    let n = r.grid().len();
    if 2 * n > DENSE_RANK_LIMIT {
        return Err(Error::TooLarge { size: 2 * n, limit: DENSE_RANK_LIMIT });
    }
    let nr = proj.n_receivers();
    if nr >= n {
        return Err(Error::shape(format!("rank check needs fewer receivers ({nr}) than grid nodes ({n})")));
    }
    let full = build_augmented(r, ctx, proj, lambda, gamma)?;
    let dense = full.to_dense();
    let s_rows = nr + n;
    let rank_of = |rows: usize| numerical_rank(&singular_values(rows, 2 * n, &dense[..rows * 2 * n]), RANK_TOL);
    let rank = rank_of(s_rows);
    Ok(RankCheck {
        columns: 2 * n,
        rank,
        nullity: 2 * n - rank,
        nullity_lower_bound: n - nr,
        rank_with_gamma: (gamma > 0.0).then(|| rank_of(full.nrows())),
    })
}
