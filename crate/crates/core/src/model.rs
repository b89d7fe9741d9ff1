//! The model torus `T^{2n} = (R^n/Z^n)_x × (R^n/2πZ^n)_θ` with `ω = dx_i∧dθ^i`,
//! families of compatible complex structures `A(s, x, θ) = P + iQ`, and the
//! metrics `g_J` they induce.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Smallest admissible eigenvalue of `Im A` (and of the metric).
pub const PD_FLOOR: f64 = 1e-12;
const LIOUVILLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusModel {
    pub n: usize,
}

impl TorusModel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        Ok(Self { n })
    }

    pub fn x_period(&self) -> f64 {
        1.0
    }

    pub fn theta_period(&self) -> f64 {
        TAU
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `A(s) = s·A⁰` exactly.
    Linear,
    /// `A(s) = s·A⁰ + s²·C(s)`.
    General,
}

/// Properties a family is claimed to have; checked by the diagnostics, never assumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub integrable: bool,
    pub semiflat: bool,
    pub heart: bool,
}

type Leading = Arc<dyn Fn(&[f64], &[f64]) -> CMatrix + Send + Sync>;
type Correction = Arc<dyn Fn(f64, &[f64], &[f64]) -> CMatrix + Send + Sync>;

/// A family `s ↦ A(s, x, θ)` of compatible (almost) complex structures.
#[derive(Clone)]
pub struct ComplexStructureFamily {
    pub name: String,
    pub n: usize,
    pub kind: FamilyKind,
    pub claims: Claims,
    leading: Leading,
    correction: Option<Correction>,
}

impl fmt::Debug for ComplexStructureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexStructureFamily")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("claims", &self.claims)
            .finish()
    }
}

/// Built-in families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// `A⁰ = i·I`.
    Flat,
    /// `A⁰ = i·diag(1 + ½cos 2πx_i)`.
    SemiflatX,
    /// `A⁰ = i·diag(1 + ½cos θ^i)`; violates semiflatness.
    NonSemiflatTheta,
    /// θ-independent `A⁰(x)` with nonzero real part.
    Heart,
    /// `A⁰ = i·(Hess u)⁻¹` for a periodic perturbation `u` of `|x|²/2`; integrable and x-dependent.
    Hessian,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Flat,
        Preset::SemiflatX,
        Preset::NonSemiflatTheta,
        Preset::Heart,
        Preset::Hessian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Flat => "flat",
            Preset::SemiflatX => "semiflat-x",
            Preset::NonSemiflatTheta => "nonsemiflat-theta",
            Preset::Heart => "heart",
            Preset::Hessian => "hessian",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
            })
    }

    pub fn family(&self, n: usize) -> ComplexStructureFamily {
        let i = Complex64::i();
        match self {
            Preset::Flat => ComplexStructureFamily::linear(
                self.name(),
                n,
                Claims { integrable: true, semiflat: true, heart: true },
                move |_, _| CMatrix::identity(n, n) * i,
            ),
            Preset::SemiflatX => ComplexStructureFamily::linear(
                self.name(),
                n,
                Claims { integrable: true, semiflat: true, heart: true },
                move |x, _| {
                    CMatrix::from_fn(n, n, |r, c| {
                        if r == c {
                            i * (1.0 + 0.5 * (TAU * x[r]).cos())
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                },
            ),
            Preset::NonSemiflatTheta => ComplexStructureFamily::linear(
                self.name(),
                n,
                Claims { integrable: true, semiflat: false, heart: false },
                move |_, theta| {
                    CMatrix::from_fn(n, n, |r, c| {
                        if r == c {
                            i * (1.0 + 0.5 * theta[r].cos())
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                },
            ),
            Preset::Heart => ComplexStructureFamily::linear(
                self.name(),
                n,
                Claims { integrable: n == 1, semiflat: true, heart: true },
                move |x, _| {
                    CMatrix::from_fn(n, n, |r, c| {
                        if r == c {
                            Complex64::new(0.3 * (TAU * x[r]).sin(), 1.0 + 0.5 * (TAU * x[r]).cos())
                        } else {
                            Complex64::new(0.2 * (TAU * x[0]).sin(), 0.0)
                        }
                    })
                },
            ),
            Preset::Hessian => ComplexStructureFamily::linear(
                self.name(),
                n,
                Claims { integrable: true, semiflat: true, heart: true },
                move |x, _| {
                    let hess = hessian_potential(x, 0.3);
                    let inv = hess.try_inverse().expect("Hessian of a convex potential is invertible");
                    inv.map(|v| i * v)
                },
            ),
        }
    }
}

/// Hessian of `u(x) = |x|²/2 + ε/(4π²)·Π_i cos 2πx_i`.
fn hessian_potential(x: &[f64], eps: f64) -> RMatrix {
    let n = x.len();
    let c: Vec<f64> = x.iter().map(|v| (TAU * v).cos()).collect();
    let s: Vec<f64> = x.iter().map(|v| (TAU * v).sin()).collect();
    RMatrix::from_fn(n, n, |a, b| {
        let others: f64 = (0..n).filter(|&l| l != a && l != b).map(|l| c[l]).product();
        if a == b {
            1.0 - eps * c[a] * others
        } else {
            eps * s[a] * s[b] * others
        }
    })
}

impl ComplexStructureFamily {
    /// A linear family `A(s) = s·A⁰` from a leading-term evaluator `(x, θ) ↦ A⁰`.
    pub fn linear<F>(name: &str, n: usize, claims: Claims, leading: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> CMatrix + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            n,
            kind: FamilyKind::Linear,
            claims,
            leading: Arc::new(leading),
            correction: None,
        }
    }

    /// A family `A(s) = s·A⁰ + s²·C(s, x, θ)`.
    pub fn with_correction<F>(mut self, correction: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> CMatrix + Send + Sync + 'static,
    {
        self.kind = FamilyKind::General;
        self.correction = Some(Arc::new(correction));
        self
    }

    pub fn leading_term(&self, x: &[f64], theta: &[f64]) -> CMatrix {
        (self.leading)(x, theta)
    }

    pub fn evaluate(&self, s: f64, x: &[f64], theta: &[f64]) -> CMatrix {
        let mut a = self.leading_term(x, theta) * Complex64::new(s, 0.0);
        if let Some(c) = &self.correction {
            a += c(s, x, theta) * Complex64::new(s * s, 0.0);
        }
        a
    }

    /// Loads a tabulated leading term `A⁰`.
    ///
    /// Format: a header line `n N_theta N_x`, then one line per grid site
    /// holding the site index followed by the n² real parts and the n²
    /// imaginary parts of `A⁰`, each row-major. The family is linear and is
    /// evaluated between samples by periodic multilinear interpolation.
    pub fn from_tabulated<R: BufRead>(name: &str, reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter_map(|(no, l)| match l {
            Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('#') => None,
            other => Some((no + 1, other)),
        });
        let (no, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
        let header = header?;
        let fields: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: no, message: format!("bad header: {e}") })?;
        let [n, n_theta, n_x] = fields[..] else {
            return Err(Error::Parse { line: no, message: "header must be `n N_theta N_x`".into() });
        };
        let grid = Grid::new(n, n_theta, n_x).map_err(|e| Error::Parse { line: no, message: e.to_string() })?;
        let mut samples: Vec<Option<CMatrix>> = vec![None; grid.num_sites()];
        for (no, line) in lines {
            let line = line?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: no, message: e.to_string() })?;
            if vals.len() != 1 + 2 * n * n {
                return Err(Error::Parse {
                    line: no,
                    message: format!("expected {} fields, found {}", 1 + 2 * n * n, vals.len()),
                });
            }
            let site = vals[0];
            if site < 0.0 || site.fract() != 0.0 || site as usize >= grid.num_sites() {
                return Err(Error::Parse { line: no, message: format!("site index {site} out of range") });
            }
            let (re, im) = vals[1..].split_at(n * n);
            let a = CMatrix::from_fn(n, n, |r, c| Complex64::new(re[r * n + c], im[r * n + c]));
            samples[site as usize] = Some(a);
        }
        let samples: Vec<CMatrix> = samples
            .into_iter()
            .enumerate()
            .map(|(site, a)| a.ok_or(Error::Parse { line: 0, message: format!("site {site} missing") }))
            .collect::<Result<_>>()?;
        let table = Arc::new(samples);
        let interp = move |x: &[f64], theta: &[f64]| interpolate(&grid, &table, x, theta);
        Ok(Self::linear(name, n, Claims::default(), interp))
    }

    pub fn from_tabulated_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("tabulated");
        Self::from_tabulated(name, std::io::BufReader::new(file))
    }

    /// Writes the leading term sampled on `grid` in the tabulated format.
    pub fn write_tabulated<W: std::io::Write>(&self, grid: &Grid, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", grid.n, grid.n_theta, grid.n_x)?;
        for site in 0..grid.num_sites() {
            let a = self.leading_term(&grid.x(site), &grid.theta(site));
            let mut row = site.to_string();
            for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
                for r in 0..grid.n {
                    for c in 0..grid.n {
                        row.push(' ');
                        row.push_str(&format!("{:e}", part(&a[(r, c)])));
                    }
                }
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn interpolate(grid: &Grid, table: &[CMatrix], x: &[f64], theta: &[f64]) -> CMatrix {
    let n = grid.n;
    let dims = grid.dims();
    // (lower index, weight of upper) per axis
    let mut base = Vec::with_capacity(2 * n);
    for a in 0..2 * n {
        let (coord, h) = if a < n { (theta[a], grid.h_theta()) } else { (x[a - n], grid.h_x()) };
        let period = dims[a] as f64 * h;
        let u = coord.rem_euclid(period) / h;
        let lo = u.floor();
        base.push(((lo as usize) % dims[a], u - lo));
    }
    let mut acc = CMatrix::zeros(n, n);
    for corner in 0..(1usize << (2 * n)) {
        let mut w = 1.0;
        let mut idx = vec![0; 2 * n];
        for a in 0..2 * n {
            let up = (corner >> a) & 1 == 1;
            let (lo, t) = base[a];
            idx[a] = if up { (lo + 1) % dims[a] } else { lo };
            w *= if up { t } else { 1.0 - t };
        }
        if w != 0.0 {
            acc += &table[grid::ravel(&idx, &dims)] * Complex64::new(w, 0.0);
        }
    }
    acc
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn min_eigenvalue(m: &RMatrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks the compatibility conditions `A = Aᵀ`, `Im A > 0`.
pub fn validate_structure(a: &CMatrix, site: Option<usize>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidStructure { site, reason: "A is not square".into() });
    }
    let scale = 1.0 + max_abs(a);
    let asym = max_abs(&(a - a.transpose()));
    if asym > 1e-12 * scale {
        return Err(Error::InvalidStructure { site, reason: format!("A is not symmetric (|A - Aᵀ| = {asym:e})") });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidStructure { site, reason: "A has non-finite entries".into() });
    }
    let q = a.map(|z| z.im);
    let lam = min_eigenvalue(&q);
    if lam <= PD_FLOOR {
        return Err(Error::InvalidStructure {
            site,
            reason: format!("Im A is not positive definite (smallest eigenvalue {lam:e})"),
        });
    }
    Ok(())
}

/// The metric `g_A` in the `(θ, x)` coordinate frame:
/// `(Q + PQ⁻¹P) dθ² − 2PQ⁻¹ dθdx + Q⁻¹ dx²`.
pub fn metric_from_a(a: &CMatrix) -> Result<RMatrix> {
    validate_structure(a, None)?;
    Ok(metric_blocks(a).0)
}

/// Returns `(g, g⁻¹)`, using the closed form
/// `g⁻¹ = [[Q⁻¹, Q⁻¹P], [PQ⁻¹, Q + PQ⁻¹P]]`.
fn metric_blocks(a: &CMatrix) -> (RMatrix, RMatrix) {
    let n = a.nrows();
    let p = a.map(|z| z.re);
    let q = a.map(|z| z.im);
    let q_inv = q.clone().cholesky().expect("Im A positive definite").inverse();
    let pqi = &p * &q_inv;
    let theta_block = &q + &pqi * &p;
    let mut g = RMatrix::zeros(2 * n, 2 * n);
    let mut g_inv = RMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            g[(r, c)] = theta_block[(r, c)];
            g[(r, n + c)] = -pqi[(r, c)];
            g[(n + c, r)] = -pqi[(r, c)];
            g[(n + r, n + c)] = q_inv[(r, c)];

            g_inv[(r, c)] = q_inv[(r, c)];
            g_inv[(r, n + c)] = pqi[(c, r)];
            g_inv[(n + c, r)] = pqi[(c, r)];
            g_inv[(n + r, n + c)] = theta_block[(r, c)];
        }
    }
    symmetrize(&mut g);
    symmetrize(&mut g_inv);
    (g, g_inv)
}

fn symmetrize(m: &mut RMatrix) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// A family sampled on a grid at one value of `s`.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: Grid,
    pub s: f64,
    pub family: String,
    /// `A(s, ·)` per site.
    pub a: Vec<CMatrix>,
    /// `g_{J_s}` per site, `2n×2n`, θ block first.
    pub g: Vec<RMatrix>,
    /// Inverse metric per site.
    pub g_inv: Vec<RMatrix>,
}

impl MetricField {
    /// Builds a metric field directly from per-site samples of `A`.
    pub fn from_samples(grid: Grid, s: f64, family: &str, a: Vec<CMatrix>) -> Result<Self> {
        if a.len() != grid.num_sites() {
            return Err(Error::Config(format!(
                "{} samples for a grid with {} sites",
                a.len(),
                grid.num_sites()
            )));
        }
        let blocks: Vec<(RMatrix, RMatrix)> = a
            .par_iter()
            .enumerate()
            .map(|(site, a)| {
                validate_structure(a, Some(site))?;
                let (g, g_inv) = metric_blocks(a);
                let det = g.determinant();
                if (det - 1.0).abs() > LIOUVILLE_TOL * (1.0 + g.amax().powi(2 * grid.n as i32)) {
                    return Err(Error::InvalidStructure {
                        site: Some(site),
                        reason: format!("metric volume form {det} differs from the Liouville form"),
                    });
                }
                Ok((g, g_inv))
            })
            .collect::<Result<_>>()?;
        let (g, g_inv) = blocks.into_iter().unzip();
        Ok(Self { grid, s, family: family.to_string(), a, g, g_inv })
    }

    /// The `θθ` block of the metric at a site (the fiber metric).
    pub fn fiber_block(&self, site: usize) -> RMatrix {
        let n = self.grid.n;
        self.g[site].view((0, 0), (n, n)).into_owned()
    }

    /// The `xx` block of the metric at a site.
    pub fn base_block(&self, site: usize) -> RMatrix {
        let n = self.grid.n;
        self.g[site].view((n, n), (n, n)).into_owned()
    }

    /// `N_b`: the largest eigenvalue of the fiber metric over the fiber above
    /// base index `base`.
    pub fn fiber_metric_sup(&self, base: usize) -> f64 {
        (0..self.grid.fiber_sites())
            .map(|f| {
                let site = self.grid.site_from_parts(f, base);
                self.fiber_block(site)
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Samples `A(s, ·)` on `grid` and builds the metric field, validating every site.
pub fn family_at(family: &ComplexStructureFamily, s: f64, grid: &Grid) -> Result<MetricField> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("deformation parameter s must be positive, got {s}")));
    }
    if family.n != grid.n {
        return Err(Error::Config(format!("family has n = {}, grid has n = {}", family.n, grid.n)));
    }
    let a: Vec<CMatrix> = (0..grid.num_sites())
        .into_par_iter()
        .map(|site| family.evaluate(s, &grid.x(site), &grid.theta(site)))
        .collect();
    MetricField::from_samples(*grid, s, &family.name, a)
}

/// Periodic centered difference of a per-site complex field along `axis`.
fn centered(field: &[Complex64], grid: &Grid, site: usize, axis: usize) -> Complex64 {
    let dims = grid.dims();
    let strides = grid.strides();
    let (fwd, _) = grid::step(site, axis, 1, &dims, &strides);
    let (bwd, _) = grid::step(site, axis, -1, &dims, &strides);
    (field[fwd] - field[bwd]) / (2.0 * grid.spacing(axis))
}

/// Max over sites and indices of
/// `|∂A_jk/∂θ^i − ∂A_ik/∂θ^j + A_il ∂A_jk/∂x_l − A_jl ∂A_ik/∂x_l|`,
/// with periodic centered differences.
pub fn integrability_residual(family: &ComplexStructureFamily, s: f64, grid: &Grid) -> Result<f64> {
    if grid.n_theta < 8 || grid.n_x < 8 {
        return Err(Error::Resolution("integrability residual needs at least 8 points per axis".into()));
    }
    let field = family_at(family, s, grid)?;
    let n = grid.n;
    // entry (j, k) of A as a scalar field
    let entries: Vec<Vec<Complex64>> = (0..n * n)
        .map(|jk| field.a.iter().map(|a| a[(jk / n, jk % n)]).collect())
        .collect();
    let residual = (0..grid.num_sites())
        .into_par_iter()
        .map(|site| {
            let a = &field.a[site];
            // d[jk][axis]
            let d: Vec<Vec<Complex64>> = entries
                .iter()
                .map(|e| (0..2 * n).map(|axis| centered(e, grid, site, axis)).collect())
                .collect();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut r = d[j * n + k][i] - d[i * n + k][j];
                        for l in 0..n {
                            r += a[(i, l)] * d[j * n + k][n + l] - a[(j, l)] * d[i * n + k][n + l];
                        }
                        worst = worst.max(r.norm());
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiflatnessReport {
    pub is_semiflat: bool,
    pub deviation: f64,
    pub tolerance: f64,
}

pub const DEFAULT_SEMIFLAT_TOL: f64 = 1e-10;

/// Compares `Im A⁰` against its fiber average at every site.
pub fn semiflatness_check(family: &ComplexStructureFamily, grid: &Grid, tolerance: f64) -> SemiflatnessReport {
    let n = grid.n;
    let deviation = (0..grid.base_sites())
        .into_par_iter()
        .map(|base| {
            let x = grid.base_coords(base);
            let samples: Vec<RMatrix> = (0..grid.fiber_sites())
                .map(|f| {
                    let site = grid.site_from_parts(f, base);
                    family.leading_term(&x, &grid.theta(site)).map(|z| z.im)
                })
                .collect();
            let first = &samples[0];
            let mean = first + samples.iter().fold(RMatrix::zeros(n, n), |acc, m| acc + (m - first)) / samples.len() as f64;
            samples.iter().map(|m| (m - &mean).amax()).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    SemiflatnessReport { is_semiflat: deviation <= tolerance, deviation, tolerance }
}

/// Period of the action coordinates, for callers that need it as a constant.
pub const X_PERIOD: f64 = 1.0;
/// Period of the angle coordinates.
pub const THETA_PERIOD: f64 = 2.0 * PI;
