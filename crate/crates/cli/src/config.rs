//! `key = value` configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gqlab::eigen::{EigenOptions, MethodChoice, DEFAULT_SEED, DEFAULT_TOL};
use gqlab::lattice::OperatorKind;
use gqlab::{Error, Preset, Result};

/// Every accepted `section.key`.
const KEYS: &[&str] = &[
    "model.preset",
    "model.family_path",
    "model.n",
    "model.s",
    "bundle.k",
    "bundle.offsets",
    "grid.n_theta",
    "grid.n_x",
    "solver.m",
    "solver.tol",
    "solver.seed",
    "solver.method",
    "solver.filter_degree",
    "solver.operator",
    "analysis.s_list",
    "analysis.kappa",
    "analysis.delta",
    "analysis.epsilon",
    "analysis.n_max",
    "analysis.sweep_tol",
    "analysis.region",
    "analysis.b",
    "analysis.ricci_tol",
    "output.dir",
];

/// Parses the file into `section.key → value`, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut section = String::new();
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: no + 1, message };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| bad(format!("unterminated section header `{line}`")))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
        if section.is_empty() {
            return Err(bad(format!("key `{}` outside any section", key.trim())));
        }
        let full = format!("{section}.{}", key.trim());
        if !KEYS.contains(&full.as_str()) {
            return Err(bad(format!("unknown key `{full}`")));
        }
        if out.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(bad(format!("duplicate key `{full}`")));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_num(key, t)).collect()
}

/// Parses `NθxNx`.
pub fn parse_grid(v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("grid must look like 64x64, got `{v}`")))?;
    Ok((parse_num("grid", a)?, parse_num("grid", b)?))
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub family_path: Option<PathBuf>,
    pub n: usize,
    /// Deformation parameter for single-`s` subcommands.
    pub s: f64,
    pub k: u32,
    pub offsets: Option<Vec<f64>>,
    pub n_theta: usize,
    pub n_x: usize,
    pub m: Option<usize>,
    pub tol: f64,
    pub seed: u64,
    pub method: MethodChoice,
    pub filter_degree: usize,
    pub operator: Option<OperatorKind>,
    pub s_list: Vec<f64>,
    pub kappa: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub n_max: u64,
    pub sweep_tol: f64,
    pub region: Option<(f64, f64)>,
    pub b: Option<Vec<f64>>,
    pub ricci_tol: f64,
    pub out: PathBuf,
}

/// `1/(2π)`: balances the angle and action spacings of a square grid.
pub const DEFAULT_S: f64 = 0.159154943091895;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Flat,
            family_path: None,
            n: 1,
            s: DEFAULT_S,
            k: 1,
            offsets: None,
            n_theta: 64,
            n_x: 64,
            m: None,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            method: MethodChoice::Auto,
            filter_degree: 64,
            operator: None,
            s_list: vec![0.4, 0.2, 0.1, 0.05],
            kappa: 0.0,
            delta: 0.0,
            epsilon: 0.1,
            n_max: 10,
            sweep_tol: 0.1,
            region: None,
            b: None,
            ricci_tol: gqlab::curvature::DEFAULT_RICCI_TOL,
            out: PathBuf::from("."),
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub k: Option<u32>,
    pub s: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, cli: &Overrides) -> Result<Self> {
        let entries = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut c = RunConfig::default();
        let mut grid_set = false;
        for (key, v) in &entries {
            let key = key.as_str();
            match key {
                "model.preset" => c.preset = Preset::from_name(v)?,
                "model.family_path" => c.family_path = Some(PathBuf::from(v)),
                "model.n" => c.n = parse_num(key, v)?,
                "model.s" => c.s = parse_num(key, v)?,
                "bundle.k" => c.k = parse_num(key, v)?,
                "bundle.offsets" => c.offsets = Some(parse_list(key, v)?),
                "grid.n_theta" => {
                    c.n_theta = parse_num(key, v)?;
                    grid_set = true;
                }
                "grid.n_x" => {
                    c.n_x = parse_num(key, v)?;
                    grid_set = true;
                }
                "solver.m" => c.m = Some(parse_num(key, v)?),
                "solver.tol" => c.tol = parse_num(key, v)?,
                "solver.seed" => c.seed = parse_num(key, v)?,
                "solver.method" => {
                    c.method = match v.as_str() {
                        "auto" => MethodChoice::Auto,
                        "lanczos" => MethodChoice::Lanczos,
                        "dense" => MethodChoice::Dense,
                        _ => return Err(Error::Config(format!("`{key}` must be auto, lanczos or dense, got `{v}`"))),
                    }
                }
                "solver.filter_degree" => c.filter_degree = parse_num(key, v)?,
                "solver.operator" => c.operator = Some(OperatorKind::from_name(v)?),
                "analysis.s_list" => c.s_list = parse_list(key, v)?,
                "analysis.kappa" => c.kappa = parse_num(key, v)?,
                "analysis.delta" => c.delta = parse_num(key, v)?,
                "analysis.epsilon" => c.epsilon = parse_num(key, v)?,
                "analysis.n_max" => c.n_max = parse_num(key, v)?,
                "analysis.sweep_tol" => c.sweep_tol = parse_num(key, v)?,
                "analysis.region" => {
                    let r = parse_list(key, v)?;
                    if r.len() != 2 {
                        return Err(Error::Config(format!("`{key}` needs two numbers `lo, hi`")));
                    }
                    c.region = Some((r[0], r[1]));
                }
                "analysis.b" => c.b = Some(parse_list(key, v)?),
                "analysis.ricci_tol" => c.ricci_tol = parse_num(key, v)?,
                "output.dir" => c.out = PathBuf::from(v),
                _ => unreachable!("keys are validated by the parser"),
            }
        }
        if let Some(p) = &cli.preset {
            c.preset = Preset::from_name(p)?;
        }
        if let Some(o) = &cli.out {
            c.out = o.clone();
        }
        if let Some(s) = cli.seed {
            c.seed = s;
        }
        if let Some(k) = cli.k {
            c.k = k;
        }
        if let Some(n) = cli.n {
            c.n = n;
        }
        if let Some(m) = cli.m {
            c.m = Some(m);
        }
        if let Some(g) = &cli.grid {
            (c.n_theta, c.n_x) = parse_grid(g)?;
            grid_set = true;
        }
        if let Some(s) = &cli.s {
            c.s_list = parse_list("--s", s)?;
            c.s = *c.s_list.first().ok_or_else(|| Error::Config("--s needs at least one value".into()))?;
        }
        if !grid_set && c.n >= 2 {
            c.n_theta = 16;
            c.n_x = 16;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.s > 0.0) {
            return Err(Error::Config(format!("s must be positive, got {}", self.s)));
        }
        if self.s_list.is_empty() || self.s_list.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("s list must be nonempty and positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config("epsilon must lie in (0, 1)".into()));
        }
        if let Some(o) = &self.offsets {
            if o.len() != self.n {
                return Err(Error::Config(format!("{} offsets for n = {}", o.len(), self.n)));
            }
        }
        if let Some(b) = &self.b {
            if b.len() != self.n {
                return Err(Error::Config(format!("fiber point has {} coordinates for n = {}", b.len(), self.n)));
            }
        }
        gqlab::Grid::new(self.n, self.n_theta, self.n_x)?;
        Ok(())
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.tol,
            seed: self.seed,
            method: self.method,
            filter_degree: self.filter_degree,
            ..Default::default()
        }
    }
}
