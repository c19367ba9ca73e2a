//! Flat `section.key = value` configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Unknown or repeated keys are errors. Relative paths resolve against the
//! directory holding the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrwi_core::acquisition::{Geometry, SourceSpectrum, Survey};
use lrwi_core::grid::{make_synthetic, velocity_to_slowness, Grid2D, SlownessModel, SyntheticKind, SyntheticParams};
use lrwi_core::helmholtz::AbsorbingBoundary;
use lrwi_core::run::{Method, RunConfig, DEFAULT_BOUNDS};

use crate::error::{CliError, CliResult};
use crate::formats::GridFile;

/// Every accepted key. Model keys exist under both `true.` and `initial.`.
pub const KEYS: &[&str] = &[
    "run.seed",
    "grid.nx",
    "grid.nz",
    "grid.dx",
    "grid.dz",
    "true.file",
    "true.kind",
    "true.v_top",
    "true.v_bottom",
    "true.velocities",
    "true.interfaces",
    "true.anomaly_velocity",
    "true.dip_start",
    "true.dip_end",
    "true.wedge_base",
    "true.perturbation",
    "true.seed",
    "initial.file",
    "initial.kind",
    "initial.v_top",
    "initial.v_bottom",
    "initial.velocities",
    "initial.interfaces",
    "initial.anomaly_velocity",
    "initial.dip_start",
    "initial.dip_end",
    "initial.wedge_base",
    "initial.perturbation",
    "initial.seed",
    "acquisition.sources",
    "acquisition.source_depth",
    "acquisition.source_x0",
    "acquisition.source_x1",
    "acquisition.receivers",
    "acquisition.receiver_depth",
    "acquisition.receiver_x0",
    "acquisition.receiver_x1",
    "acquisition.spectrum",
    "acquisition.f0",
    "acquisition.amplitude",
    "acquisition.boundary",
    "data.file",
    "data.frequencies",
    "data.noise",
    "inversion.method",
    "inversion.bands",
    "inversion.iters_per_band",
    "inversion.beta1",
    "inversion.beta2",
    "inversion.growth1",
    "inversion.growth2",
    "inversion.theta0",
    "inversion.bounds",
    "inversion.v_min",
    "inversion.v_max",
    "inversion.lrwi_all_bands",
    "inversion.freeze_wri_lambda",
    "inversion.memory",
    "inversion.initial_step",
    "inversion.grad_tol",
    "gradcheck.frequency",
    "gradcheck.components",
    "gradcheck.rel_h",
    "gradcheck.lrwi_rel_h",
    "gradcheck.h_theta",
    "gradcheck.beta1",
    "gradcheck.beta2",
    "gradcheck.theta",
    "gradcheck.sweep",
    "condstudy.frequency",
    "condstudy.beta1",
    "condstudy.beta2",
    "condstudy.image",
    "betasweep.methods",
    "betasweep.beta1",
    "betasweep.beta2",
    "freqsweep.methods",
    "freqsweep.starts",
    "freqsweep.offsets",
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct Config {
    path: PathBuf,
    text: String,
    entries: BTreeMap<String, Entry>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ln = i + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::parse(path, ln, "expected 'section.key = value'"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::parse(path, ln, format!("unknown key '{k}'")));
            }
            if v.is_empty() {
                return Err(CliError::parse(path, ln, format!("empty value for '{k}'")));
            }
            if let Some(prev) = entries.insert(k.to_string(), Entry { value: v.to_string(), line: ln }) {
                return Err(CliError::parse(path, ln, format!("'{k}' already set on line {}", prev.line)));
            }
        }
        Ok(Self { path: path.to_path_buf(), text: text.to_string(), entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Raw file contents, hashed into manifests.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn bad(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        CliError::parse(&self.path, line, format!("{key}: {msg}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| self.bad(key, err)),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.entries.get(key).map(|e| e.value.as_str()) {
            None => Ok(default),
            Some("true" | "on" | "yes") => Ok(true),
            Some("false" | "off" | "no") => Ok(false),
            Some(other) => Err(self.bad(key, format!("expected a boolean, got '{other}'"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|t| t.trim().parse::<T>().map_err(|err| self.bad(key, format!("'{}': {err}", t.trim()))))
                .collect::<CliResult<Vec<T>>>()
                .map(Some),
        }
    }

    /// Semicolon-separated groups of comma-separated numbers.
    pub fn groups(&self, key: &str) -> CliResult<Option<Vec<Vec<f64>>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(';')
                .map(|g| {
                    g.split(',')
                        .map(|t| t.trim().parse::<f64>().map_err(|err| self.bad(key, format!("'{}': {err}", t.trim()))))
                        .collect::<CliResult<Vec<f64>>>()
                })
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn path_value(&self, key: &str) -> CliResult<Option<PathBuf>> {
        Ok(self.get::<String>(key)?.map(|p| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                self.path.parent().unwrap_or(Path::new(".")).join(p)
            }
        }))
    }
}

/// Models, acquisition and data settings shared by every command.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub grid: Grid2D,
    pub truth: Option<SlownessModel>,
    pub initial: Option<SlownessModel>,
    pub survey: Survey,
    pub seed: u64,
}

impl Experiment {
    /// `seed` overrides `run.seed`.
    pub fn from_config(cfg: &Config, seed: Option<u64>) -> CliResult<Self> {
        let seed = match seed {
            Some(s) => s,
            None => cfg.get_or("run.seed", 0u64)?,
        };
        let explicit = match (cfg.get::<usize>("grid.nx")?, cfg.get::<usize>("grid.nz")?) {
            (Some(nx), Some(nz)) => Some(Grid2D::new(nx, nz, cfg.require("grid.dx")?, cfg.require("grid.dz")?)?),
            (None, None) => None,
            _ => return Err(CliError::Config("grid.nx and grid.nz must be given together".into())),
        };
        let truth_file = load_file(cfg, "true")?;
        let initial_file = load_file(cfg, "initial")?;
        let grid = explicit
            .or(truth_file.as_ref().map(|f| f.grid))
            .or(initial_file.as_ref().map(|f| f.grid))
            .ok_or_else(|| CliError::Config("no grid: set grid.* or give a model file".into()))?;
        let truth = build_model(cfg, "true", grid, truth_file)?;
        let initial = build_model(cfg, "initial", grid, initial_file)?;
        let survey = build_survey(cfg, grid, truth.as_ref(), initial.as_ref())?;
        Ok(Self { grid, truth, initial, survey, seed })
    }

    pub fn require_truth(&self) -> CliResult<&SlownessModel> {
        self.truth.as_ref().ok_or_else(|| CliError::Config("this command needs a true model (true.file or true.kind)".into()))
    }

    pub fn require_initial(&self) -> CliResult<&SlownessModel> {
        self.initial
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs an initial model (initial.file or initial.kind)".into()))
    }
}

fn load_file(cfg: &Config, prefix: &str) -> CliResult<Option<GridFile>> {
    match cfg.path_value(&format!("{prefix}.file"))? {
        Some(p) => Ok(Some(GridFile::read(&p)?)),
        None => Ok(None),
    }
}

fn build_model(cfg: &Config, prefix: &str, grid: Grid2D, file: Option<GridFile>) -> CliResult<Option<SlownessModel>> {
    let key = |k: &str| format!("{prefix}.{k}");
    let kind: Option<String> = cfg.get(&key("kind"))?;
    match (file, kind) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("{prefix}.file and {prefix}.kind are mutually exclusive"))),
        (Some(f), None) => {
            if f.grid != grid {
                return Err(CliError::Config(format!("{prefix}.file grid does not match the experiment grid")));
            }
            Ok(Some(f.to_slowness()?))
        }
        (None, Some(kind)) => {
            let kind = SyntheticKind::from_str(&kind)?;
            let d = SyntheticParams::default();
            let params = SyntheticParams {
                v_top: cfg.get_or(&key("v_top"), d.v_top)?,
                v_bottom: cfg.get_or(&key("v_bottom"), d.v_bottom)?,
                velocities: cfg.list(&key("velocities"))?.unwrap_or(d.velocities),
                interfaces: cfg.list(&key("interfaces"))?.unwrap_or(d.interfaces),
                anomaly_velocity: cfg.get_or(&key("anomaly_velocity"), d.anomaly_velocity)?,
                dip_start: cfg.get_or(&key("dip_start"), d.dip_start)?,
                dip_end: cfg.get_or(&key("dip_end"), d.dip_end)?,
                wedge_base: cfg.get_or(&key("wedge_base"), d.wedge_base)?,
                perturbation: cfg.get_or(&key("perturbation"), d.perturbation)?,
                seed: cfg.get_or(&key("seed"), d.seed)?,
            };
            Ok(Some(velocity_to_slowness(&make_synthetic(kind, grid, &params)?)))
        }
        (None, None) => Ok(None),
    }
}

fn build_survey(cfg: &Config, grid: Grid2D, truth: Option<&SlownessModel>, initial: Option<&SlownessModel>) -> CliResult<Survey> {
    let (lx, _) = grid.extent();
    let ns: usize = cfg.get_or("acquisition.sources", 1)?;
    let nr: usize = cfg.get_or("acquisition.receivers", grid.nx())?;
    let sources = Geometry::line(
        ns,
        cfg.get_or("acquisition.source_depth", grid.dz())?,
        cfg.get_or("acquisition.source_x0", 0.0)?,
        cfg.get_or("acquisition.source_x1", lx)?,
    );
    let receivers = Geometry::line(
        nr,
        cfg.get_or("acquisition.receiver_depth", 0.0)?,
        cfg.get_or("acquisition.receiver_x0", 0.0)?,
        cfg.get_or("acquisition.receiver_x1", lx)?,
    );
    let geometry = Geometry::new(grid, sources, receivers)?;
    let amplitude: f64 = cfg.get_or("acquisition.amplitude", 1.0)?;
    let spectrum = match cfg.get_or("acquisition.spectrum", String::from("ricker"))?.as_str() {
        "ricker" => SourceSpectrum::ricker(cfg.require("acquisition.f0")?)?.with_amplitude(amplitude),
        "flat" => SourceSpectrum::flat(amplitude),
        other => return Err(CliError::Config(format!("acquisition.spectrum must be ricker or flat, got '{other}'"))),
    };
    let reference = match cfg.get::<String>("acquisition.boundary")?.as_deref() {
        Some("true") => truth.ok_or_else(|| CliError::Config("acquisition.boundary = true needs a true model".into()))?,
        Some("initial") => initial.ok_or_else(|| CliError::Config("acquisition.boundary = initial needs an initial model".into()))?,
        Some(other) => return Err(CliError::Config(format!("acquisition.boundary must be true or initial, got '{other}'"))),
        None => initial.or(truth).ok_or_else(|| CliError::Config("no model to set the absorbing boundary from".into()))?,
    };
    Ok(Survey::new(geometry, spectrum, AbsorbingBoundary::from_model(reference))?)
}

/// Inversion settings from `inversion.*`.
pub fn run_config(cfg: &Config, exp: &Experiment) -> CliResult<RunConfig> {
    let method: Method = cfg.get_or("inversion.method", Method::Lrwi)?;
    let bands = cfg.groups("inversion.bands")?.ok_or_else(|| CliError::Config("missing required key 'inversion.bands'".into()))?;
    let initial = exp.require_initial()?.clone();
    let mut rc = RunConfig::new(method, bands, initial);
    rc.iters_per_band = cfg.get_or("inversion.iters_per_band", rc.iters_per_band)?;
    rc.beta1 = cfg.get_or("inversion.beta1", rc.beta1)?;
    rc.beta2 = cfg.get_or("inversion.beta2", rc.beta2)?;
    rc.growth = (cfg.get_or("inversion.growth1", rc.growth.0)?, cfg.get_or("inversion.growth2", rc.growth.1)?);
    rc.theta0 = cfg.get_or("inversion.theta0", rc.theta0)?;
    rc.bounds = if cfg.bool_or("inversion.bounds", true)? {
        Some((cfg.get_or("inversion.v_min", DEFAULT_BOUNDS.0)?, cfg.get_or("inversion.v_max", DEFAULT_BOUNDS.1)?))
    } else {
        None
    };
    rc.lrwi_all_bands = cfg.bool_or("inversion.lrwi_all_bands", false)?;
    rc.freeze_wri_lambda = cfg.bool_or("inversion.freeze_wri_lambda", false)?;
    rc.memory = cfg.get_or("inversion.memory", rc.memory)?;
    rc.initial_step = cfg.get_or("inversion.initial_step", rc.initial_step)?;
    rc.grad_tol = cfg.get_or("inversion.grad_tol", rc.grad_tol)?;
    rc.true_model = exp.truth.clone();
    rc.validate()?;
    Ok(rc)
}
