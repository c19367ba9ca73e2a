//! The six experiment commands. Each writes its artifacts plus `manifest.txt`
//! into the output directory.

use std::fmt::Write as _;
use std::path::Path;

use lrwi_core::acquisition::{forward_model, ObservedData};
use lrwi_core::gradcheck::{check_fwi, check_lrwi, check_wri, sample_components, FdRecord};
use lrwi_core::grid::{split, Rank2Model, SlownessModel};
use lrwi_core::helmholtz::assemble_with;
use lrwi_core::lrwi::{build_augmented, FrequencyContext};
use lrwi_core::penalty::{estimate_mu1, estimate_mu2};
use lrwi_core::power::{condition_estimate, PowerOptions};
use lrwi_core::run::{run_continuation, Method, RunConfig, RunReport};
use rayon::prelude::*;

use crate::config::{run_config, Config, Experiment};
use crate::error::{CliError, CliResult};
use crate::formats::{read_data, write_data, GridFile, GridUnit};
use crate::manifest::Manifest;
use crate::pgm;

/// Largest grid accepted by `gradcheck` and `condstudy`.
pub const MAX_STUDY_GRID: usize = 2500;
/// `gradcheck` fails when any checked component exceeds this relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

pub const REPORT_HEADER: &str = "iter,band,objective,data_term,pde_term,rank1_term,grad_norm,theta,rel_model_error";
pub const GRADCHECK_HEADER: &str = "target,beta1,beta2,component,h,analytic,finite_difference,rel_error,role";
pub const CONDSTUDY_HEADER: &str = "beta1,beta2,cond,cond_ref";
pub const BETASWEEP_HEADER: &str = "method,beta1,beta2,rel_model_error,reason";
pub const FREQSWEEP_HEADER: &str = "method,f_start,rel_model_error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Invert,
    Gradcheck,
    Condstudy,
    Betasweep,
    Freqsweep,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Invert => "invert",
            Command::Gradcheck => "gradcheck",
            Command::Condstudy => "condstudy",
            Command::Betasweep => "betasweep",
            Command::Freqsweep => "freqsweep",
        }
    }
}

/// Loads the configuration, runs `cmd` and writes everything under `out`.
pub fn execute(cmd: Command, config: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let cfg = Config::load(config)?;
    let exp = Experiment::from_config(&cfg, seed)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut manifest = Manifest::new(cmd.as_str(), cfg.text(), exp.seed);
    let result = match cmd {
        Command::Forward => forward(&cfg, &exp, out, &mut manifest),
        Command::Invert => invert(&cfg, &exp, out, &mut manifest),
        Command::Gradcheck => gradcheck(&cfg, &exp, out, &mut manifest),
        Command::Condstudy => condstudy(&cfg, &exp, out, &mut manifest),
        Command::Betasweep => betasweep(&cfg, &exp, out, &mut manifest),
        Command::Freqsweep => freqsweep(&cfg, &exp, out, &mut manifest),
    };
    if let Err(e) = &result {
        manifest.push("status", format!("failed: {}", one_line(&e.to_string())));
    } else {
        manifest.push("status", "ok");
    }
    manifest.write(out)?;
    result
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip scientific form; empty for `None`.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ").replace(',', ";")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Observed data: `data.file` if given (restricted to `freqs`), otherwise
/// modeled from the true model with optional seeded noise.
fn observed(cfg: &Config, exp: &Experiment, freqs: &[f64]) -> CliResult<ObservedData> {
    let data = match cfg.path_value("data.file")? {
        Some(path) => read_data(&path)?.select(freqs)?,
        None => forward_model(exp.require_truth()?, &exp.survey, freqs)?.0,
    };
    let geo = exp.survey.geometry();
    if data.n_sources() != geo.n_sources() || data.n_receivers() != geo.n_receivers() {
        return Err(CliError::Config(format!(
            "data holds {} sources x {} receivers but the acquisition has {} x {}",
            data.n_sources(),
            data.n_receivers(),
            geo.n_sources(),
            geo.n_receivers()
        )));
    }
    let noise: f64 = cfg.get_or("data.noise", 0.0)?;
    if noise > 0.0 && !cfg.contains("data.file") {
        Ok(data.with_noise(noise, exp.seed)?)
    } else {
        Ok(data)
    }
}

fn band_frequencies(bands: &[Vec<f64>]) -> Vec<f64> {
    let mut all: Vec<f64> = bands.concat();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

pub fn forward(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    let freqs: Vec<f64> = cfg.list("data.frequencies")?.ok_or_else(|| CliError::Config("missing required key 'data.frequencies'".into()))?;
    let m = exp.require_truth()?;
    let (mut data, stats) = forward_model(m, &exp.survey, &freqs)?;
    let noise: f64 = cfg.get_or("data.noise", 0.0)?;
    if noise > 0.0 {
        data = data.with_noise(noise, exp.seed)?;
    }
    write_data(&out.join("data.lrwi"), &data)?;
    manifest.push("frequencies", join(&freqs));
    manifest.push("factorizations", stats.factorization_count());
    manifest.push("max_snap_distance", exp.survey.geometry().max_snap_distance());
    Ok(())
}

pub fn report_csv(report: &RunReport) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in &report.iterations {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.band,
            num(r.objective),
            num(r.data_term),
            num(r.pde_term),
            num(r.rank1_term),
            num(r.grad_norm),
            opt(r.theta),
            opt(r.rel_model_error)
        );
    }
    s
}

fn write_model(out: &Path, name: &str, m: &SlownessModel) -> CliResult<()> {
    GridFile::from_slowness(m, GridUnit::Velocity).write(&out.join(format!("{name}.grid")))?;
    let g = m.grid();
    let v = GridFile::from_slowness(m, GridUnit::Velocity).values;
    pgm::write(&out.join(format!("{name}.pgm")), g.nx(), g.nz(), &v)
}

pub fn invert(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    let rc = run_config(cfg, exp)?;
    let data = observed(cfg, exp, &band_frequencies(&rc.bands))?;
    manifest.push("method", rc.method);
    let (report, failure) = match run_continuation(&rc, &data, &exp.survey) {
        Ok(r) => (r, None),
        Err(f) => {
            let f = *f;
            (f.partial, Some((f.band, f.error)))
        }
    };
    write_text(&out.join("report.csv"), &report_csv(&report))?;
    write_model(out, "model", &report.final_model)?;
    if let Some(r2) = &report.final_rank2 {
        let g = *r2.grid();
        for (name, vals) in [("lifted_m1", r2.m1()), ("lifted_m2", r2.m2())] {
            GridFile { grid: g, unit: GridUnit::Slowness2, values: vals.to_vec() }.write(&out.join(format!("{name}.grid")))?;
        }
        manifest.push("theta", num(r2.theta()));
    }
    for b in &report.bands {
        manifest.push(
            &format!("band{}", b.band),
            format!(
                "method={} iterations={} lambda={} gamma={} stalled={} rel_model_error={}",
                b.method,
                b.iterations,
                opt(b.lambda),
                opt(b.gamma),
                b.stalled,
                opt(b.rel_model_error)
            ),
        );
    }
    manifest.push("rel_model_error", opt(report.final_rel_model_error()));
    match failure {
        None => Ok(()),
        Some((band, e)) => {
            log::error!("band {band} failed: {e}");
            Err(CliError::Numerical(e))
        }
    }
}

fn check_size(exp: &Experiment, what: &str) -> CliResult<()> {
    let n = exp.grid.len();
    if n > MAX_STUDY_GRID {
        return Err(CliError::Config(format!("{what} is limited to {MAX_STUDY_GRID} grid points, got {n}")));
    }
    Ok(())
}

/// A lifted model off the rank-1 set: `m̃₁ = sin θ·m₀`, `m̃₂ = cos θ·m_true`.
fn lifted_probe(initial: &SlownessModel, truth: &SlownessModel, theta: f64) -> CliResult<Rank2Model> {
    Ok(Rank2Model::new(
        *initial.grid(),
        initial.values().iter().map(|v| v * theta.sin()).collect(),
        truth.values().iter().map(|v| v * theta.cos()).collect(),
        theta,
    )?)
}

pub fn gradcheck(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    check_size(exp, "gradcheck")?;
    let f: f64 = cfg.require("gradcheck.frequency")?;
    let count: usize = cfg.get_or("gradcheck.components", 10)?;
    let rel_h: f64 = cfg.get_or("gradcheck.rel_h", 1e-4)?;
    let lrwi_rel_h: f64 = cfg.get_or("gradcheck.lrwi_rel_h", 1e-4)?;
    let h_theta: f64 = cfg.get_or("gradcheck.h_theta", 1e-4)?;
    let beta1s: Vec<f64> = cfg.list("gradcheck.beta1")?.unwrap_or_else(|| vec![1e-4, 1.0]);
    let beta2s: Vec<f64> = cfg.list("gradcheck.beta2")?.unwrap_or_else(|| vec![1e-8, 1e-2]);
    let theta: f64 = cfg.get_or("gradcheck.theta", 0.7)?;
    let sweep: usize = cfg.get_or("gradcheck.sweep", 4)?;
    let m0 = exp.require_initial()?;
    let truth = exp.require_truth()?;
    let data = observed(cfg, exp, &[f])?;
    let survey = &exp.survey;
    let n = exp.grid.len();
    let comps = sample_components(n, count, exp.seed);
    let comps2 = sample_components(2 * n, count, exp.seed.wrapping_add(1));
    let r = lifted_probe(m0, truth, theta)?;
    let mu1 = estimate_mu1(m0, f, survey)?;

    let mut rows: Vec<(FdRecord, Option<f64>, Option<f64>, &str)> = Vec::new();
    for rec in check_fwi(m0, &data, survey, &comps, rel_h)? {
        rows.push((rec, None, None, "check"));
    }
    for &b1 in &beta1s {
        let lambda = b1 * mu1;
        for rec in check_wri(m0, lambda, &data, survey, &comps, rel_h)? {
            rows.push((rec, Some(b1), None, "check"));
        }
        let mu2 = estimate_mu2(&r, lambda, f, survey)?;
        for &b2 in &beta2s {
            for rec in check_lrwi(&r, lambda, b2 * mu2, &data, survey, &comps2, lrwi_rel_h, h_theta)? {
                rows.push((rec, Some(b1), Some(b2), "check"));
            }
        }
    }
    // Step-size sweep on one component: the error should fall about 16x per halving
    // until round-off takes over.
    for k in 1..=sweep {
        let scale = 0.5f64.powi(k as i32);
        for rec in check_fwi(m0, &data, survey, &comps[..1], 16.0 * rel_h * scale)? {
            rows.push((rec, None, None, "sweep"));
        }
    }
    let mut s = format!("{GRADCHECK_HEADER}\n");
    let mut worst: f64 = 0.0;
    for (rec, b1, b2, role) in &rows {
        if *role == "check" {
            worst = worst.max(rec.rel_error);
        }
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            rec.target,
            opt(*b1),
            opt(*b2),
            rec.component.map(|c| c.to_string()).unwrap_or_default(),
            num(rec.h),
            num(rec.analytic),
            num(rec.finite_difference),
            num(rec.rel_error),
            role
        );
    }
    write_text(&out.join("gradcheck.csv"), &s)?;
    manifest.push("max_rel_error", num(worst));
    if worst > GRADCHECK_TOL || !worst.is_finite() {
        return Err(CliError::Check(format!("gradient check failed: max relative error {worst:e} exceeds {GRADCHECK_TOL:e}")));
    }
    Ok(())
}

/// `cond(S̃ᴴS̃)` at one penalty pair; `∞` when the matrix is numerically singular.
pub fn augmented_condition(r: &Rank2Model, ctx: &FrequencyContext, exp: &Experiment, lambda: f64, gamma: f64) -> f64 {
    let cond = build_augmented(r, ctx, exp.survey.projection(), lambda, gamma)
        .and_then(|s| condition_estimate(&s.gram(), PowerOptions::default()));
    match cond {
        Ok(c) if c.is_finite() => c,
        Ok(_) => f64::INFINITY,
        Err(e) if e.is_singular() => f64::INFINITY,
        Err(e) => {
            log::warn!("condition estimate failed: {e}");
            f64::NAN
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondCell {
    pub beta1: f64,
    pub beta2: f64,
    pub cond: f64,
}

/// Condition numbers over the β grid (β₁ outer) and the reference `cond(AᴴA)`.
pub fn condition_grid(exp: &Experiment, f: f64, theta0: f64, beta1s: &[f64], beta2s: &[f64]) -> CliResult<(Vec<CondCell>, f64)> {
    let m0 = exp.require_initial()?;
    let a = assemble_with(m0, f, exp.survey.boundary())?;
    let cond_ref = condition_estimate(&a.matrix().gram(), PowerOptions::default())?;
    let r0 = split(m0, theta0);
    let ctx = FrequencyContext::new(&exp.survey, f)?;
    let mu1 = estimate_mu1(m0, f, &exp.survey)?;
    let mut mu2s = Vec::with_capacity(beta1s.len());
    for &b1 in beta1s {
        mu2s.push(estimate_mu2(&r0, b1 * mu1, f, &exp.survey)?);
    }
    let cells: Vec<(usize, f64, f64)> =
        beta1s.iter().enumerate().flat_map(|(i, &b1)| beta2s.iter().map(move |&b2| (i, b1, b2))).collect();
    let out = cells
        .par_iter()
        .map(|&(i, b1, b2)| CondCell { beta1: b1, beta2: b2, cond: augmented_condition(&r0, &ctx, exp, b1 * mu1, b2 * mu2s[i]) })
        .collect();
    Ok((out, cond_ref))
}

pub fn condstudy(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    check_size(exp, "condstudy")?;
    let f: f64 = cfg.require("condstudy.frequency")?;
    let beta1s: Vec<f64> = cfg.list("condstudy.beta1")?.ok_or_else(|| CliError::Config("missing required key 'condstudy.beta1'".into()))?;
    let beta2s: Vec<f64> = cfg.list("condstudy.beta2")?.ok_or_else(|| CliError::Config("missing required key 'condstudy.beta2'".into()))?;
    let theta0: f64 = cfg.get_or("inversion.theta0", std::f64::consts::FRAC_PI_4)?;
    let (cells, cond_ref) = condition_grid(exp, f, theta0, &beta1s, &beta2s)?;
    let mut s = format!("{CONDSTUDY_HEADER}\n");
    for c in &cells {
        let _ = writeln!(s, "{},{},{},{}", num(c.beta1), num(c.beta2), num(c.cond), num(cond_ref));
    }
    write_text(&out.join("condstudy.csv"), &s)?;
    if cfg.bool_or("condstudy.image", true)? {
        // Rows are β₂ values, columns β₁ values.
        let (w, h) = (beta1s.len(), beta2s.len());
        let mut img = vec![0.0; w * h];
        for (k, c) in cells.iter().enumerate() {
            let (i, j) = (k / h, k % h);
            img[j * w + i] = if c.cond.is_finite() { c.cond.log10() } else { c.cond };
        }
        pgm::write(&out.join("condstudy.pgm"), w, h, &img)?;
    }
    manifest.push("cond_ref", num(cond_ref));
    Ok(())
}

fn methods(cfg: &Config, key: &str, default: &[Method]) -> CliResult<Vec<Method>> {
    Ok(cfg.list::<Method>(key)?.unwrap_or_else(|| default.to_vec()))
}

/// Final relative model error of one run, or the failure reason.
fn run_cell(rc: &RunConfig, data: &ObservedData, exp: &Experiment) -> Result<f64, String> {
    match run_continuation(rc, data, &exp.survey) {
        Ok(r) => r.final_rel_model_error().ok_or_else(|| "no true model".to_string()),
        Err(f) => Err(one_line(&f.error.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub beta1: f64,
    pub beta2: Option<f64>,
    pub f_start: Option<f64>,
    pub result: Result<f64, String>,
}

impl SweepRow {
    pub fn error(&self) -> f64 {
        *self.result.as_ref().unwrap_or(&f64::NAN)
    }
}

pub fn beta_grid(cfg: &Config, exp: &Experiment) -> CliResult<Vec<SweepRow>> {
    exp.require_truth()?;
    let base = run_config(cfg, exp)?;
    let data = observed(cfg, exp, &band_frequencies(&base.bands))?;
    let beta1s: Vec<f64> = cfg.list("betasweep.beta1")?.ok_or_else(|| CliError::Config("missing required key 'betasweep.beta1'".into()))?;
    let beta2s: Vec<f64> = cfg.list("betasweep.beta2")?.unwrap_or_else(|| vec![base.beta2]);
    let mut cells = Vec::new();
    for m in methods(cfg, "betasweep.methods", &[Method::Wri, Method::Lrwi])? {
        for &b1 in &beta1s {
            if m == Method::Lrwi {
                cells.extend(beta2s.iter().map(|&b2| (m, b1, Some(b2))));
            } else {
                cells.push((m, b1, None));
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(method, b1, b2)| {
            let rc = RunConfig { method, beta1: b1, beta2: b2.unwrap_or(base.beta2), ..base.clone() };
            SweepRow { method, beta1: b1, beta2: b2, f_start: None, result: run_cell(&rc, &data, exp) }
        })
        .collect())
}

pub fn betasweep(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    let rows = beta_grid(cfg, exp)?;
    let mut s = format!("{BETASWEEP_HEADER}\n");
    for r in &rows {
        let (err, reason) = match &r.result {
            Ok(e) => (num(*e), String::new()),
            Err(msg) => ("nan".to_string(), msg.clone()),
        };
        let _ = writeln!(s, "{},{},{},{},{}", r.method, num(r.beta1), opt(r.beta2), err, reason);
    }
    write_text(&out.join("betasweep.csv"), &s)?;
    manifest.push("cells", rows.len());
    manifest.push("failed_cells", rows.iter().filter(|r| r.result.is_err()).count());
    Ok(())
}

pub fn frequency_grid(cfg: &Config, exp: &Experiment) -> CliResult<Vec<SweepRow>> {
    exp.require_truth()?;
    let base = run_config(cfg, exp)?;
    let starts: Vec<f64> = cfg.list("freqsweep.starts")?.ok_or_else(|| CliError::Config("missing required key 'freqsweep.starts'".into()))?;
    let offsets = cfg.groups("freqsweep.offsets")?.unwrap_or_else(|| vec![vec![0.0]]);
    let meths = methods(cfg, "freqsweep.methods", &Method::ALL)?;
    let mut cells = Vec::new();
    for &f0 in &starts {
        let bands: Vec<Vec<f64>> = offsets.iter().map(|b| b.iter().map(|o| f0 + o).collect()).collect();
        let data = observed(cfg, exp, &band_frequencies(&bands))?;
        for &m in &meths {
            cells.push((m, f0, bands.clone(), data.clone()));
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(method, f0, bands, data)| {
            let rc = RunConfig { method, bands, ..base.clone() };
            SweepRow { method, beta1: rc.beta1, beta2: None, f_start: Some(f0), result: run_cell(&rc, &data, exp) }
        })
        .collect())
}

pub fn freqsweep(cfg: &Config, exp: &Experiment, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    let rows = frequency_grid(cfg, exp)?;
    let mut s = format!("{FREQSWEEP_HEADER}\n");
    for r in &rows {
        let err = match &r.result {
            Ok(e) => num(*e),
            Err(msg) => {
                manifest.push("failure", format!("{} at {}: {msg}", r.method, opt(r.f_start)));
                "nan".to_string()
            }
        };
        let _ = writeln!(s, "{},{},{}", r.method, opt(r.f_start), err);
    }
    write_text(&out.join("freqsweep.csv"), &s)?;
    Ok(())
}
