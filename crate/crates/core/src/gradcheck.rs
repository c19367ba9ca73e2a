//! Finite-difference checks of the analytic gradients.
//!
//! Differences use the fourth-order central stencil
//! `(8[f(x+h) − f(x−h)] − [f(x+2h) − f(x−2h)]) / 12h`, whose small truncation
//! error allows steps large enough to keep round-off negligible.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{ObservedData, Survey};
use crate::fwi::fwi_value_grad;
use crate::grid::{Rank2Model, SlownessModel};
use crate::lrwi::lrwi_evaluate;
use crate::wri::wri_value_grad;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Fwi,
    Wri,
    LrwiModel,
    LrwiTheta,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Fwi => "fwi",
            Target::Wri => "wri",
            Target::LrwiModel => "lrwi-m",
            Target::LrwiTheta => "lrwi-theta",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdRecord {
    pub target: Target,
    /// Model component; `None` for θ.
    pub component: Option<usize>,
    pub h: f64,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
}

/// `count` distinct indices below `n`, drawn from a seeded generator and sorted.
pub fn sample_components(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, count.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

fn stencil<F: Fn(f64) -> Result<f64>>(f: F, h: f64) -> Result<f64> {
    Ok((8.0 * (f(h)? - f(-h)?) - (f(2.0 * h)? - f(-2.0 * h)?)) / (12.0 * h))
}

fn central<F>(target: Target, x: &[f64], grad: &[f64], components: &[usize], rel_h: f64, f: F) -> Result<Vec<FdRecord>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut out = Vec::with_capacity(components.len());
    for &i in components {
        if i >= x.len() {
            return Err(Error::shape("finite-difference component out of range"));
        }
        let h = rel_h * x[i].abs();
        if !(h > 0.0) {
            return Err(Error::Domain("finite-difference step is zero; use a nonzero component".into()));
        }
        let at = |t: f64| {
            let mut y = x.to_vec();
            y[i] += t;
            f(&y)
        };
        let fd = stencil(at, h)?;
        out.push(FdRecord {
            target,
            component: Some(i),
            h,
            analytic: grad[i],
            finite_difference: fd,
            rel_error: relative_difference(fd, grad[i]),
        });
    }
    Ok(out)
}

pub fn check_fwi(m: &SlownessModel, data: &ObservedData, survey: &Survey, components: &[usize], rel_h: f64) -> Result<Vec<FdRecord>> {
    let g = *m.grid();
    let e = fwi_value_grad(m, data, survey)?;
    central(Target::Fwi, m.values(), &e.gradient, components, rel_h, |v| {
        Ok(fwi_value_grad(&SlownessModel::new(g, v.to_vec())?, data, survey)?.value())
    })
}

pub fn check_wri(
    m: &SlownessModel,
    lambda: f64,
    data: &ObservedData,
    survey: &Survey,
    components: &[usize],
    rel_h: f64,
) -> Result<Vec<FdRecord>> {
    let g = *m.grid();
    let e = wri_value_grad(m, lambda, data, survey)?;
    central(Target::Wri, m.values(), &e.gradient, components, rel_h, |v| {
        Ok(wri_value_grad(&SlownessModel::new(g, v.to_vec())?, lambda, data, survey)?.value())
    })
}

/// Checks `∇m̃` on the stacked components and `∂/∂θ` with absolute step `h_theta`.
#[allow(clippy::too_many_arguments)]
pub fn check_lrwi(
    r: &Rank2Model,
    lambda: f64,
    gamma: f64,
    data: &ObservedData,
    survey: &Survey,
    components: &[usize],
    rel_h: f64,
    h_theta: f64,
) -> Result<Vec<FdRecord>> {
    let g = *r.grid();
    let theta = r.theta();
    let e = lrwi_evaluate(r, lambda, gamma, data, survey)?.evaluation;
    let mut out = central(Target::LrwiModel, &r.stacked(), &e.gradient, components, rel_h, |v| {
        Ok(lrwi_evaluate(&Rank2Model::from_stacked(g, v, theta)?, lambda, gamma, data, survey)?.evaluation.value())
    })?;
    let ft = |t: f64| -> Result<f64> { Ok(lrwi_evaluate(&r.with_theta(theta + t), lambda, gamma, data, survey)?.evaluation.value()) };
    let fd = stencil(ft, h_theta)?;
    out.push(FdRecord {
        target: Target::LrwiTheta,
        component: None,
        h: h_theta,
        analytic: e.grad_theta,
        finite_difference: fd,
        rel_error: relative_difference(fd, e.grad_theta),
    });
    Ok(out)
}
