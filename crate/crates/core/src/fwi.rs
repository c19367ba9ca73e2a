//! Reduced FWI: `f(m) = ½ Σ ‖P A(m)⁻¹ q − d‖²` with the adjoint-state gradient.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::acquisition::{ObservedData, Survey};
use crate::grid::SlownessModel;
use crate::helmholtz::assemble_with;
use crate::math::norm_sqr;
use crate::objective::{Evaluation, ObjectiveReport, PairTerms};
use crate::stats::SolveStats;
use crate::Result;

/// Objective and gradient. Per pair, with `u = A⁻¹q` and
/// `v = A⁻ᴴPᵀ(Pu − d)`, the gradient contribution is `−ω²·Re(conj(u)⊙v)`.
pub fn fwi_value_grad(m: &SlownessModel, data: &ObservedData, survey: &Survey) -> Result<Evaluation> {
    survey.check_model(m.grid())?;
    survey.check_data(data)?;
    let n = m.grid().len();
    let mut gradient = vec![0.0; n];
    let mut pairs = Vec::new();
    let mut stats = SolveStats::default();
    for (k, &f) in data.frequencies().iter().enumerate() {
        fwi_frequency(m, data, survey, k, &mut gradient, &mut pairs, &mut stats).map_err(|e| e.at_frequency(f))?;
    }
    Ok(Evaluation {
        report: ObjectiveReport::from_pairs(pairs),
        gradient,
        grad_theta: 0.0,
        max_projection_residual: 0.0,
        stats,
    })
}

fn fwi_frequency(
    m: &SlownessModel,
    data: &ObservedData,
    survey: &Survey,
    k: usize,
    gradient: &mut [f64],
    pairs: &mut Vec<PairTerms>,
    stats: &mut SolveStats,
) -> Result<()> {
    let f = data.frequencies()[k];
    let op = assemble_with(m, f, survey.boundary())?;
    let lu = op.factorize()?;
    stats.record_factorization(lu.dim());
    let w2 = op.omega() * op.omega();
    let proj = survey.projection();
    for s in 0..data.n_sources() {
        let q = survey.source_vector(s, f)?;
        let u = lu.solve(&q);
        let r: Vec<Complex64> = proj.apply(&u).iter().zip(data.row(s, k)).map(|(a, b)| a - b).collect();
        let v = lu.solve_adjoint(&proj.adjoint(&r));
        for ((g, ui), vi) in gradient.iter_mut().zip(&u).zip(&v) {
            *g -= w2 * (ui.conj() * vi).re;
        }
        pairs.push(PairTerms { source: s, frequency: f, data: 0.5 * norm_sqr(&r), pde: 0.0, rank1: 0.0 });
    }
    stats.record_solves(2 * data.n_sources());
    Ok(())
}

/// Objective value only (one solve per pair).
pub fn fwi_value(m: &SlownessModel, data: &ObservedData, survey: &Survey) -> Result<f64> {
    survey.check_model(m.grid())?;
    survey.check_data(data)?;
    let mut total = 0.0;
    for (k, &f) in data.frequencies().iter().enumerate() {
        let lu = assemble_with(m, f, survey.boundary())?.factorize().map_err(|e| e.at_frequency(f))?;
        for s in 0..data.n_sources() {
            let u = lu.solve(&survey.source_vector(s, f)?);
            let r: Vec<Complex64> = survey.projection().apply(&u).iter().zip(data.row(s, k)).map(|(a, b)| a - b).collect();
            total += 0.5 * norm_sqr(&r);
        }
    }
    Ok(total)
}
