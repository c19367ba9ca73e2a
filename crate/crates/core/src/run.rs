//! Band drivers and frequency continuation.
//!
//! FWI and WRI bands run l-BFGS on `m` with a projected line search when
//! velocity bounds are set. An LRWI band alternates an l-BFGS step on
//! `[m̃₁; m̃₂]` at fixed `θ` with a backtracking gradient step on `θ`. Each
//! accepted point's evaluation carries freshly projected wavefields, so the
//! `θ` gradient after the model update and the model gradient after the `θ`
//! update are never computed from stale `ũ*`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::acquisition::{ObservedData, Survey};
use crate::fwi::fwi_value_grad;
use crate::grid::{clip_slowness, combine, relative_model_error, split, Rank2Model, SlownessModel};
use crate::lrwi::lrwi_evaluate;
use crate::math::{norm_inf, norm_real};
use crate::objective::{Evaluation, ObjectiveReport};
use crate::optim::{lbfgs_step, theta_step, LbfgsOptions, LbfgsState, StepStatus, DEFAULT_MEMORY};
use crate::penalty::{estimate_mu1, estimate_mu2, make_penalties, PenaltyConfig, DEFAULT_BETA1, DEFAULT_BETA2};
use crate::stats::SolveStats;
use crate::wri::wri_value_grad;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fwi,
    Wri,
    Lrwi,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fwi, Method::Wri, Method::Lrwi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fwi => "fwi",
            Method::Wri => "wri",
            Method::Lrwi => "lrwi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwi" => Ok(Method::Fwi),
            "wri" => Ok(Method::Wri),
            "lrwi" => Ok(Method::Lrwi),
            other => Err(Error::Config(format!("unknown method '{other}' (expected fwi, wri or lrwi)"))),
        }
    }
}

pub const DEFAULT_BOUNDS: (f64, f64) = (1.0, 6.5);

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Frequency bands in Hz, each ascending, run in order.
    pub bands: Vec<Vec<f64>>,
    pub iters_per_band: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Per-band growth of `(β₁, β₂)`.
    pub growth: (f64, f64),
    pub initial: SlownessModel,
    /// Starting angle for the lifted model.
    pub theta0: f64,
    /// Used only to report relative model errors.
    pub true_model: Option<SlownessModel>,
    /// Velocity bounds in km/s applied to FWI/WRI iterates and to combined
    /// LRWI outputs.
    pub bounds: Option<(f64, f64)>,
    /// Run LRWI on every band instead of handing over to FWI after the first.
    pub lrwi_all_bands: bool,
    /// Keep the first band's WRI `λ` instead of re-estimating it per band.
    pub freeze_wri_lambda: bool,
    pub memory: usize,
    /// First l-BFGS trial step, as a fraction of the largest model value.
    pub initial_step: f64,
    /// Stop a band once `‖g‖∞ < grad_tol·‖g₀‖∞`.
    pub grad_tol: f64,
}

impl RunConfig {
    pub fn new(method: Method, bands: Vec<Vec<f64>>, initial: SlownessModel) -> Self {
        Self {
            method,
            bands,
            iters_per_band: 45,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            growth: (1.0, 1.0),
            initial,
            theta0: core::f64::consts::FRAC_PI_4,
            true_model: None,
            bounds: Some(DEFAULT_BOUNDS),
            lrwi_all_bands: false,
            freeze_wri_lambda: false,
            memory: DEFAULT_MEMORY,
            initial_step: 0.1,
            grad_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() || self.bands.iter().any(|b| b.is_empty()) {
            return Err(Error::Config("at least one nonempty frequency band is required".into()));
        }
        for b in &self.bands {
            if b.iter().any(|f| !(*f > 0.0 && f.is_finite())) || b.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("band {b:?} must hold positive, strictly ascending frequencies")));
            }
        }
        if self.iters_per_band == 0 {
            return Err(Error::Config("iters_per_band must be at least 1".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config(format!("initial_step must be positive, got {}", self.initial_step)));
        }
        if !self.theta0.is_finite() {
            return Err(Error::Config("theta0 must be finite".into()));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!("invalid velocity bounds [{lo}, {hi}]")));
            }
        }
        if let Some(t) = &self.true_model {
            if t.grid() != self.initial.grid() {
                return Err(Error::Config("true model grid differs from the initial model grid".into()));
            }
        }
        make_penalties(self.beta1, self.beta2, 1.0, 1.0)?.with_growth(self.growth.0, self.growth.1)?;
        Ok(())
    }

    /// Method actually run on band `index`.
    pub fn band_method(&self, index: usize) -> Method {
        match self.method {
            Method::Lrwi if index > 0 && !self.lrwi_all_bands => Method::Fwi,
            m => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the band's starting point.
    pub iter: usize,
    pub band: usize,
    pub method: Method,
    pub objective: f64,
    pub data_term: f64,
    pub pde_term: f64,
    pub rank1_term: f64,
    pub grad_norm: f64,
    pub theta: Option<f64>,
    /// Accepted l-BFGS step length (0 at the starting point).
    pub step: f64,
    pub rel_model_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandSummary {
    pub band: usize,
    pub method: Method,
    pub frequencies: Vec<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub penalties: Option<PenaltyConfig>,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub stalled: bool,
    pub rel_model_error: Option<f64>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub iterations: Vec<IterationRecord>,
    pub bands: Vec<BandSummary>,
    /// Model each band started from.
    pub band_start_models: Vec<SlownessModel>,
    pub final_model: SlownessModel,
    pub final_rank2: Option<Rank2Model>,
    pub stats: SolveStats,
}

impl RunReport {
    fn empty(initial: &SlownessModel) -> Self {
        Self {
            iterations: Vec::new(),
            bands: Vec::new(),
            band_start_models: Vec::new(),
            final_model: initial.clone(),
            final_rank2: None,
            stats: SolveStats::default(),
        }
    }

    pub fn final_rel_model_error(&self) -> Option<f64> {
        self.bands.last().and_then(|b| b.rel_model_error)
    }
}

/// A failed run with everything completed before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub band: usize,
    pub partial: RunReport,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "band {} failed: {}", self.band, self.error)
    }
}

/// Output of one band.
#[derive(Debug, Clone)]
pub struct BandOutcome {
    pub model: SlownessModel,
    pub rank2: Option<Rank2Model>,
    pub records: Vec<IterationRecord>,
    pub summary: BandSummary,
}

/// Settings shared by the band drivers.
#[derive(Debug, Clone)]
pub struct BandSettings<'a> {
    pub band: usize,
    pub iters: usize,
    pub bounds: Option<(f64, f64)>,
    pub true_model: Option<&'a SlownessModel>,
    pub memory: usize,
    pub initial_step: f64,
    pub grad_tol: f64,
}

impl<'a> BandSettings<'a> {
    pub fn from_config(cfg: &'a RunConfig, band: usize) -> Self {
        Self {
            band,
            iters: cfg.iters_per_band,
            bounds: cfg.bounds,
            true_model: cfg.true_model.as_ref(),
            memory: cfg.memory,
            initial_step: cfg.initial_step,
            grad_tol: cfg.grad_tol,
        }
    }

    fn error_of(&self, m: &[f64]) -> Option<f64> {
        let t = self.true_model?;
        crate::grid::relative_error(t.values(), m).ok()
    }

    fn bounded(&self, values: Vec<f64>) -> Result<Vec<f64>> {
        match self.bounds {
            Some((lo, hi)) => clip_slowness(&values, lo, hi),
            None => Ok(values),
        }
    }
}

fn infeasible(n: usize) -> Evaluation {
    Evaluation {
        report: ObjectiveReport { total: f64::INFINITY, ..ObjectiveReport::default() },
        gradient: alloc::vec![0.0; n],
        grad_theta: 0.0,
        max_projection_residual: 0.0,
        stats: SolveStats::default(),
    }
}

fn record(band: usize, iter: usize, method: Method, e: &Evaluation, theta: Option<f64>, step: f64, err: Option<f64>) -> IterationRecord {
    IterationRecord {
        iter,
        band,
        method,
        objective: e.report.total,
        data_term: e.report.data_term,
        pde_term: e.report.pde_term,
        rank1_term: e.report.rank1_term,
        grad_norm: norm_real(&e.gradient),
        theta,
        step,
        rel_model_error: err,
    }
}

/// FWI (`lambda = None`) or WRI band on `m`.
fn run_reduced_band(
    method: Method,
    m0: &SlownessModel,
    lambda: Option<f64>,
    data: &ObservedData,
    survey: &Survey,
    set: &BandSettings<'_>,
) -> Result<BandOutcome> {
    let grid = *m0.grid();
    let n = grid.len();
    let mut stats = SolveStats::default();
    let evaluate = |x: &[f64], stats: &mut SolveStats| -> Result<Evaluation> {
        let Ok(m) = SlownessModel::new(grid, x.to_vec()) else { return Ok(infeasible(n)) };
        let e = match lambda {
            None => fwi_value_grad(&m, data, survey)?,
            Some(l) => wri_value_grad(&m, l, data, survey)?,
        };
        stats.merge(&e.stats);
        Ok(e)
    };
    let project = |v: &mut [f64]| {
        if let Some((lo, hi)) = set.bounds {
            let (a, b) = (1.0 / (hi * hi), 1.0 / (lo * lo));
            v.iter_mut().for_each(|z| *z = z.clamp(a, b));
        }
    };
    let mut x = set.bounded(m0.values().to_vec())?;
    let mut cur = evaluate(&x, &mut stats)?;
    let g0 = norm_inf(&cur.gradient);
    let initial_objective = cur.value();
    let mut records = alloc::vec![record(set.band, 0, method, &cur, None, 0.0, set.error_of(&x))];
    let opts = LbfgsOptions { memory: set.memory, initial_step: set.initial_step * norm_inf(&x) };
    let mut state = LbfgsState::new(set.memory);
    let mut stalled = false;
    let mut iterations = 0;
    for it in 1..=set.iters {
        if norm_inf(&cur.gradient) <= set.grad_tol * g0 {
            break;
        }
        let step = lbfgs_step(&mut state, &opts, &x, &cur, |t| evaluate(t, &mut stats), project)?;
        match step.status {
            StepStatus::Accepted { step: len, .. } => {
                x = step.x;
                cur = step.eval.expect("accepted step carries its evaluation");
                iterations = it;
                records.push(record(set.band, it, method, &cur, None, len, set.error_of(&x)));
                log::info!("{method} band {} iter {it}: f = {:.6e}", set.band, cur.value());
            }
            StepStatus::Stationary => break,
            StepStatus::Stalled => {
                stalled = true;
                log::warn!("{method} band {} stalled at iteration {it}", set.band);
                break;
            }
        }
    }
    let model = SlownessModel::new(grid, x)?;
    let summary = BandSummary {
        band: set.band,
        method,
        frequencies: data.frequencies().to_vec(),
        lambda,
        gamma: None,
        penalties: None,
        iterations,
        initial_objective,
        final_objective: cur.value(),
        stalled,
        rel_model_error: set.error_of(model.values()),
        stats,
    };
    Ok(BandOutcome { model, rank2: None, records, summary })
}

pub fn run_fwi_band(m0: &SlownessModel, data: &ObservedData, survey: &Survey, set: &BandSettings<'_>) -> Result<BandOutcome> {
    run_reduced_band(Method::Fwi, m0, None, data, survey, set)
}

pub fn run_wri_band(
    m0: &SlownessModel,
    lambda: f64,
    data: &ObservedData,
    survey: &Survey,
    set: &BandSettings<'_>,
) -> Result<BandOutcome> {
    run_reduced_band(Method::Wri, m0, Some(lambda), data, survey, set)
}

/// `λ`, `γ` for an LRWI band: `μ₁` at the band's lowest frequency from the
/// combined starting model, `μ₂` from the lifted starting model and that `λ`.
pub fn lrwi_penalties(r0: &Rank2Model, betas: (f64, f64), f_min: f64, survey: &Survey) -> Result<PenaltyConfig> {
    let mu1 = estimate_mu1(&combine(r0)?, f_min, survey)?;
    let lambda = betas.0 * mu1;
    let mu2 = estimate_mu2(r0, lambda, f_min, survey)?;
    make_penalties(betas.0, betas.1, mu1, mu2)
}

/// One LRWI band: alternate l-BFGS on `[m̃₁; m̃₂]` and a gradient step on `θ`.
pub fn run_lrwi_band(
    r0: &Rank2Model,
    penalties: &PenaltyConfig,
    data: &ObservedData,
    survey: &Survey,
    set: &BandSettings<'_>,
) -> Result<BandOutcome> {
    let grid = *r0.grid();
    let (lambda, gamma) = (penalties.lambda(), penalties.gamma());
    let betas = (penalties.beta1(), penalties.beta2());
    let mut stats = SolveStats::default();
    let evaluate = |x: &[f64], theta: f64, stats: &mut SolveStats| -> Result<Evaluation> {
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(infeasible(x.len()));
        }
        let r = Rank2Model::from_stacked(grid, x, theta)?;
        let e = lrwi_evaluate(&r, lambda, gamma, data, survey).map_err(|e| e.with_betas(betas.0, betas.1))?.evaluation;
        stats.merge(&e.stats);
        Ok(e)
    };
    let combined_error = |x: &[f64], theta: f64| -> Option<f64> {
        let r = Rank2Model::from_stacked(grid, x, theta).ok()?;
        set.error_of(&set.bounded(crate::grid::combine_values(&r)).ok()?)
    };
    let mut x = r0.stacked();
    let mut theta = r0.theta();
    let mut cur = evaluate(&x, theta, &mut stats)?;
    let g0 = norm_inf(&cur.gradient).max(cur.grad_theta.abs());
    let initial_objective = cur.value();
    let mut records = alloc::vec![record(set.band, 0, Method::Lrwi, &cur, Some(theta), 0.0, combined_error(&x, theta))];
    let opts = LbfgsOptions { memory: set.memory, initial_step: set.initial_step * norm_inf(&x) };
    let mut state = LbfgsState::new(set.memory);
    let (mut stalled, mut iterations) = (false, 0);
    for it in 1..=set.iters {
        if norm_inf(&cur.gradient).max(cur.grad_theta.abs()) <= set.grad_tol * g0 {
            break;
        }
        let step = lbfgs_step(&mut state, &opts, &x, &cur, |t| evaluate(t, theta, &mut stats), |_: &mut [f64]| {})?;
        let mut moved = false;
        let mut len = 0.0;
        if let StepStatus::Accepted { step: l, .. } = step.status {
            x = step.x;
            cur = step.eval.expect("accepted step carries its evaluation");
            len = l;
            moved = true;
        }
        let ts = theta_step(theta, cur.value(), cur.grad_theta, |t| evaluate(&x, t, &mut stats))?;
        if let Some(e) = ts.eval {
            theta = ts.theta;
            cur = e;
            moved = true;
        }
        if !moved {
            stalled = matches!(step.status, StepStatus::Stalled);
            if stalled {
                log::warn!("lrwi band {} stalled at iteration {it}", set.band);
            }
            break;
        }
        iterations = it;
        records.push(record(set.band, it, Method::Lrwi, &cur, Some(theta), len, combined_error(&x, theta)));
        log::info!("lrwi band {} iter {it}: f = {:.6e}, theta = {theta:.6}", set.band, cur.value());
    }
    let rank2 = Rank2Model::from_stacked(grid, &x, theta)?;
    let model = SlownessModel::new(grid, set.bounded(crate::grid::combine_values(&rank2))?).map_err(|_| {
        Error::Domain(String::from("combined LRWI model has non-positive entries; set velocity bounds"))
    })?;
    let summary = BandSummary {
        band: set.band,
        method: Method::Lrwi,
        frequencies: data.frequencies().to_vec(),
        lambda: Some(lambda),
        gamma: Some(gamma),
        penalties: Some(*penalties),
        iterations,
        initial_objective,
        final_objective: cur.value(),
        stalled,
        rel_model_error: set.error_of(model.values()),
        stats,
    };
    Ok(BandOutcome { model, rank2: Some(rank2), records, summary })
}

/// Runs all bands in order, each warm-started from the previous band.
pub fn run_continuation(cfg: &RunConfig, data: &ObservedData, survey: &Survey) -> core::result::Result<RunReport, Box<RunFailure>> {
    let fail = |error: Error, band: usize, partial: RunReport| Box::new(RunFailure { error, band, partial });
    let mut report = RunReport::empty(&cfg.initial);
    if let Err(e) = cfg.validate() {
        return Err(fail(e, 0, report));
    }
    let mut model = cfg.initial.clone();
    let mut rank2: Option<Rank2Model> = None;
    let mut frozen_lambda: Option<f64> = None;
    for (b, freqs) in cfg.bands.iter().enumerate() {
        let set = BandSettings::from_config(cfg, b);
        let method = cfg.band_method(b);
        report.band_start_models.push(model.clone());
        let outcome = (|| -> Result<BandOutcome> {
            let band_data = data.select(freqs)?;
            let f_min = freqs[0];
            let base = make_penalties(cfg.beta1, cfg.beta2, 1.0, 1.0)?.with_growth(cfg.growth.0, cfg.growth.1)?;
            let scheduled = base.schedule_step(b);
            match method {
                Method::Fwi => run_fwi_band(&model, &band_data, survey, &set),
                Method::Wri => {
                    let lambda = match frozen_lambda {
                        Some(l) if cfg.freeze_wri_lambda => l,
                        _ => scheduled.beta1() * estimate_mu1(&set_bounds(&model, &set)?, f_min, survey)?,
                    };
                    frozen_lambda.get_or_insert(lambda);
                    run_wri_band(&model, lambda, &band_data, survey, &set)
                }
                Method::Lrwi => {
                    let r0 = match &rank2 {
                        Some(r) => r.clone(),
                        None => split(&model, cfg.theta0),
                    };
                    let pen = lrwi_penalties(&r0, (scheduled.beta1(), scheduled.beta2()), f_min, survey)
                        .map_err(|e| e.with_betas(scheduled.beta1(), scheduled.beta2()))?;
                    run_lrwi_band(&r0, &pen, &band_data, survey, &set)
                }
            }
        })();
        match outcome {
            Ok(out) => {
                report.stats.merge(&out.summary.stats);
                report.iterations.extend(out.records);
                report.bands.push(out.summary);
                model = out.model;
                rank2 = out.rank2;
                report.final_model = model.clone();
                if rank2.is_some() {
                    report.final_rank2 = rank2.clone();
                }
            }
            Err(e) => return Err(fail(e, b, report)),
        }
    }
    Ok(report)
}

fn set_bounds(m: &SlownessModel, set: &BandSettings<'_>) -> Result<SlownessModel> {
    SlownessModel::new(*m.grid(), set.bounded(m.values().to_vec())?)
}

/// Relative model error of `m` against `truth`, for reporting.
pub fn model_error(truth: &SlownessModel, m: &SlownessModel) -> Result<f64> {
    relative_model_error(truth, m)
}
