//! Text formats: `LRWI-GRID v1` models and `LRWI-DATA v1` frequency-domain data.
//!
//! Grid files start with
//! `LRWI-GRID v1 nx=<int> nz=<int> dx=<float> dz=<float> unit=<velocity|slowness2>`
//! followed by `nz` rows of `nx` values (x increasing along a row).
//!
//! Data files start with `LRWI-DATA v1 ns=<int> nr=<int> nf=<int>`, then one
//! line of frequencies in Hz, then `ns·nr·nf` lines `s r f re im` with
//! zero-based source, receiver and frequency indices in lexicographic order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lrwi_core::acquisition::ObservedData;
use lrwi_core::grid::{slowness_to_velocity, velocity_to_slowness, Grid2D, SlownessModel, VelocityModel};
use lrwi_core::Complex64;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridUnit {
    Velocity,
    Slowness2,
}

impl GridUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridUnit::Velocity => "velocity",
            GridUnit::Slowness2 => "slowness2",
        }
    }
}

impl FromStr for GridUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "velocity" => Ok(GridUnit::Velocity),
            "slowness2" => Ok(GridUnit::Slowness2),
            other => Err(format!("unknown unit '{other}' (expected velocity or slowness2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub grid: Grid2D,
    pub unit: GridUnit,
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn from_slowness(m: &SlownessModel, unit: GridUnit) -> Self {
        let values = match unit {
            GridUnit::Velocity => slowness_to_velocity(m).values().to_vec(),
            GridUnit::Slowness2 => m.values().to_vec(),
        };
        Self { grid: *m.grid(), unit, values }
    }

    pub fn to_slowness(&self) -> lrwi_core::Result<SlownessModel> {
        match self.unit {
            GridUnit::Velocity => Ok(velocity_to_slowness(&VelocityModel::new(self.grid, self.values.clone())?)),
            GridUnit::Slowness2 => SlownessModel::new(self.grid, self.values.clone()),
        }
    }

    pub fn render(&self) -> String {
        let g = self.grid;
        let mut s = format!(
            "LRWI-GRID v1 nx={} nz={} dx={} dz={} unit={}\n",
            g.nx(),
            g.nz(),
            g.dx(),
            g.dz(),
            self.unit.as_str()
        );
        for row in self.values.chunks(g.nx()) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let err = |line: usize, msg: String| CliError::parse(origin, line, msg);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty grid file".into()))?;
        let fields = header_fields(header, &["LRWI-GRID", "v1"]).map_err(|m| err(hl, m))?;
        let nx: usize = field(&fields, "nx").map_err(|m| err(hl, m))?;
        let nz: usize = field(&fields, "nz").map_err(|m| err(hl, m))?;
        let dx: f64 = field(&fields, "dx").map_err(|m| err(hl, m))?;
        let dz: f64 = field(&fields, "dz").map_err(|m| err(hl, m))?;
        let unit: GridUnit = field(&fields, "unit").map_err(|m| err(hl, m))?;
        if fields.len() != 5 {
            return Err(err(hl, "header must hold exactly nx, nz, dx, dz and unit".into()));
        }
        let grid = Grid2D::new(nx, nz, dx, dz).map_err(|e| err(hl, e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        let mut rows = 0;
        for (ln, line) in lines {
            rows += 1;
            if rows > nz {
                return Err(err(ln, format!("more than nz = {nz} rows")));
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(parse_f64(tok).map_err(|m| err(ln, m))?);
            }
            if values.len() - before != nx {
                return Err(err(ln, format!("row has {} values, expected nx = {nx}", values.len() - before)));
            }
        }
        if rows != nz {
            return Err(err(text.lines().count().max(1), format!("found {rows} rows, expected nz = {nz}")));
        }
        Ok(Self { grid, unit, values })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }
}

pub fn render_data(d: &ObservedData) -> String {
    let (ns, nr, nf) = (d.n_sources(), d.n_receivers(), d.frequencies().len());
    let mut s = format!("LRWI-DATA v1 ns={ns} nr={nr} nf={nf}\n");
    let freqs: Vec<String> = d.frequencies().iter().map(|f| f.to_string()).collect();
    s.push_str(&freqs.join(" "));
    s.push('\n');
    for si in 0..ns {
        for r in 0..nr {
            for k in 0..nf {
                let v = d.get(si, r, k);
                let _ = writeln!(s, "{si} {r} {k} {:e} {:e}", v.re, v.im);
            }
        }
    }
    s
}

pub fn parse_data(text: &str, origin: &Path) -> CliResult<ObservedData> {
    let err = |line: usize, msg: String| CliError::parse(origin, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty data file".into()))?;
    let fields = header_fields(header, &["LRWI-DATA", "v1"]).map_err(|m| err(hl, m))?;
    let ns: usize = field(&fields, "ns").map_err(|m| err(hl, m))?;
    let nr: usize = field(&fields, "nr").map_err(|m| err(hl, m))?;
    let nf: usize = field(&fields, "nf").map_err(|m| err(hl, m))?;
    if fields.len() != 3 {
        return Err(err(hl, "header must hold exactly ns, nr and nf".into()));
    }
    let (fl, fline) = lines.next().ok_or_else(|| err(hl + 1, "missing frequency line".into()))?;
    let freqs = fline.split_whitespace().map(parse_f64).collect::<Result<Vec<_>, _>>().map_err(|m| err(fl, m))?;
    if freqs.len() != nf {
        return Err(err(fl, format!("{} frequencies listed, expected nf = {nf}", freqs.len())));
    }
    let mut d = ObservedData::zeros(ns, nr, freqs);
    let mut values = d.values().to_vec();
    let mut count = 0usize;
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(err(ln, format!("expected 's r f re im', found {} fields", toks.len())));
        }
        let idx: Vec<usize> = toks[..3]
            .iter()
            .map(|t| t.parse::<usize>().map_err(|e| format!("bad index '{t}': {e}")))
            .collect::<Result<_, _>>()
            .map_err(|m| err(ln, m))?;
        let expected = (count / (nr * nf), (count / nf) % nr, count % nf);
        if count >= ns * nr * nf || (idx[0], idx[1], idx[2]) != expected {
            return Err(err(ln, format!("entry ({}, {}, {}) out of order; expected {expected:?}", idx[0], idx[1], idx[2])));
        }
        let re = parse_f64(toks[3]).map_err(|m| err(ln, m))?;
        let im = parse_f64(toks[4]).map_err(|m| err(ln, m))?;
        values[d.index(idx[0], idx[1], idx[2])] = Complex64::new(re, im);
        count += 1;
    }
    if count != ns * nr * nf {
        return Err(err(text.lines().count().max(1), format!("found {count} entries, expected {}", ns * nr * nf)));
    }
    d = ObservedData::new(ns, nr, d.frequencies().to_vec(), values).map_err(|e| err(hl, e.to_string()))?;
    Ok(d)
}

pub fn read_data(path: &Path) -> CliResult<ObservedData> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_data(&text, path)
}

pub fn write_data(path: &Path, d: &ObservedData) -> CliResult<()> {
    std::fs::write(path, render_data(d)).map_err(|e| CliError::io(path, e))
}

fn header_fields<'a>(header: &'a str, magic: &[&str]) -> Result<Vec<(&'a str, &'a str)>, String> {
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < magic.len() || toks[..magic.len()] != *magic {
        return Err(format!("expected header starting with '{}'", magic.join(" ")));
    }
    let mut out: Vec<(&str, &str)> = Vec::new();
    for t in &toks[magic.len()..] {
        let (k, v) = t.split_once('=').ok_or_else(|| format!("malformed header field '{t}'"))?;
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(format!("duplicate header field '{k}'"));
        }
        out.push((k, v));
    }
    Ok(out)
}

fn field<T: FromStr>(fields: &[(&str, &str)], key: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let (_, v) = fields.iter().find(|(k, _)| *k == key).ok_or_else(|| format!("missing header field '{key}'"))?;
    v.parse().map_err(|e| format!("bad value for '{key}': {e}"))
}

fn parse_f64(tok: &str) -> Result<f64, String> {
    let v: f64 = tok.parse().map_err(|e| format!("bad number '{tok}': {e}"))?;
    if v.is_finite() { Ok(v) } else { Err(format!("non-finite number '{tok}'")) }
}
