//! Experiment drivers comparing lattice spectra with the limit model.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{bs_points, torus_gap, BSPointSet, PrequantumBundle};
use crate::eigen::{lowest_eigenpairs_with, EigenOptions, SpectrumResult};
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::lattice::{assemble_bochner, sharp_from_bochner, OperatorKind, SparseHermitianOperator};
use crate::limit::{lambda_k_b, level_index_n, LimitSpectrum};
use crate::model::{family_at, semiflatness_check, ComplexStructureFamily, MetricField, SemiflatnessReport, DEFAULT_SEMIFLAT_TOL};

/// Operator solved at each `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepOperator {
    /// `Δ_∂̄ = ½Δ^♯` for integrable families.
    Dbar,
    /// `½Δ^♯` for the rest.
    HalfSharp,
}

impl SweepOperator {
    pub fn name(&self) -> &'static str {
        match self {
            SweepOperator::Dbar => "dbar",
            SweepOperator::HalfSharp => "half_sharp",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: f64,
    pub spectrum: SpectrumResult,
    /// `|λ_s^j − k·N(j)|` for `j = 1..m`.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: String,
    pub k: u32,
    pub n: usize,
    pub operator: SweepOperator,
    pub s_values: Vec<f64>,
    /// `k·N(j)` for `j = 1..m`.
    pub targets: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub semiflat: SemiflatnessReport,
    pub warnings: Vec<String>,
}

impl SweepResult {
    /// Errors of eigenvalue `j` (1-based) along the sweep.
    pub fn error_column(&self, j: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.errors[j - 1]).collect()
    }

    /// Whether the error of eigenvalue `j` strictly decreases along the sweep.
    pub fn strictly_decreasing(&self, j: usize) -> bool {
        self.error_column(j).windows(2).all(|w| w[1] < w[0])
    }

    /// Eigenvalues below `k/2` at each `s`.
    pub fn zero_cluster_counts(&self) -> Vec<usize> {
        let half = 0.5 * self.k as f64;
        self.points
            .iter()
            .map(|p| p.spectrum.eigenvalues.iter().filter(|&&l| l < half).count())
            .collect()
    }

    /// Largest `s` such that every sweep point at or below it has `kⁿ`
    /// eigenvalues under `k/2`.
    pub fn zero_cluster_threshold(&self) -> Option<f64> {
        let want = (self.k as usize).pow(self.n as u32);
        let counts = self.zero_cluster_counts();
        let mut threshold = None;
        for (i, &c) in counts.iter().enumerate().rev() {
            if c != want {
                break;
            }
            threshold = Some(self.s_values[i]);
        }
        threshold
    }
}

/// `k·N(j)` for `j = 1..m` with `#B_k = kⁿ`.
pub fn sweep_targets(k: u32, n: usize, m: usize) -> Vec<f64> {
    let bs = (k as u64).pow(n as u32);
    (1..=m as u64).map(|j| k as f64 * level_index_n(j, n, bs) as f64).collect()
}

/// The operator a sweep solves at one `s`.
pub fn sweep_operator(family: &ComplexStructureFamily, bundle: &PrequantumBundle, grid: &Grid, s: f64) -> Result<SparseHermitianOperator> {
    let metric = family_at(family, s, grid)?;
    let bochner = assemble_bochner(&metric, bundle, grid)?;
    let ops = sharp_from_bochner(&bochner, grid.n, family.claims.integrable);
    Ok(match ops.dbar {
        Some(d) => d,
        None => ops.sharp.scaled(0.5, OperatorKind::Sharp),
    })
}

pub fn sweep(
    family: &ComplexStructureFamily,
    bundle: &PrequantumBundle,
    grid: &Grid,
    s_list: &[f64],
    m: usize,
    opts: &EigenOptions,
) -> Result<SweepResult> {
    if s_list.is_empty() {
        return Err(Error::Config("empty s list".into()));
    }
    if s_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("s list must be strictly decreasing".into()));
    }
    if bundle.n != grid.n {
        return Err(Error::Config(format!("bundle has n = {}, grid has n = {}", bundle.n, grid.n)));
    }
    let semiflat = semiflatness_check(family, grid, DEFAULT_SEMIFLAT_TOL);
    let mut warnings = Vec::new();
    if !semiflat.is_semiflat {
        warnings.push(format!(
            "family {} is not semiflat (deviation {:.3e}); the limit targets need not apply",
            family.name, semiflat.deviation
        ));
    }
    let targets = sweep_targets(bundle.k, grid.n, m);
    let points = s_list
        .par_iter()
        .map(|&s| {
            let run = || -> Result<SweepPoint> {
                let op = sweep_operator(family, bundle, grid, s)?;
                let spectrum = lowest_eigenpairs_with(&op.matrix, m, opts)?;
                let errors = spectrum.eigenvalues.iter().zip(&targets).map(|(l, t)| (l - t).abs()).collect();
                Ok(SweepPoint { s, spectrum, errors })
            };
            run().map_err(|e| Error::AtParameter { s, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        family: family.name.clone(),
        k: bundle.k,
        n: grid.n,
        operator: if family.claims.integrable { SweepOperator::Dbar } else { SweepOperator::HalfSharp },
        s_values: s_list.to_vec(),
        targets,
        points,
        semiflat,
        warnings,
    })
}

/// Eigenvalues in `(a, b]`. Both edges must stay more than `tol` away from
/// every computed eigenvalue, and the computed spectrum must extend past `b`.
pub fn counting_window(spectrum: &SpectrumResult, a: f64, b: f64, tol: f64) -> Result<usize> {
    if !(a < b) {
        return Err(Error::Config(format!("empty window ({a}, {b}]")));
    }
    for &edge in &[a, b] {
        if let Some(&l) = spectrum.eigenvalues.iter().find(|&&l| (l - edge).abs() <= tol) {
            return Err(Error::IllPosedWindow { edge, eigenvalue: l, tolerance: tol });
        }
    }
    let top = spectrum.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top <= b {
        return Err(Error::InsufficientSpectrum(format!(
            "largest computed eigenvalue {top} does not exceed the window edge {b}"
        )));
    }
    Ok(spectrum.eigenvalues.iter().filter(|&&l| l > a && l <= b).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountComparison {
    pub a: f64,
    pub b: f64,
    pub expected: u128,
    /// `(s, count)` along the sweep.
    pub rows: Vec<(f64, usize)>,
    /// Largest `s` below which every count matches.
    pub threshold: Option<f64>,
}

pub fn compare_counts(sweep: &SweepResult, limit: &LimitSpectrum, a: f64, b: f64, tol: f64) -> Result<CountComparison> {
    let expected = limit.count_in(a, b);
    let rows = sweep
        .points
        .iter()
        .map(|p| counting_window(&p.spectrum, a, b, tol).map(|c| (p.s, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut threshold = None;
    for &(s, c) in rows.iter().rev() {
        if c as u128 != expected {
            break;
        }
        threshold = Some(s);
    }
    Ok(CountComparison { a, b, expected, rows, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// `g_s`-distance from every base node to the nearest Bohr-Sommerfeld point.
///
/// Paths run over the base grid including diagonal steps. A step of
/// displacement `Δ` between nodes `u, v` has length
/// `min_θ sqrt(Δᵀ ½(g_xx(θ,u) + g_xx(θ,v)) Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDistance {
    pub grid: Grid,
    pub s: f64,
    pub dist: Vec<f64>,
}

impl BaseDistance {
    pub fn new(metric: &MetricField, bs: &BSPointSet) -> Self {
        let grid = metric.grid;
        let n = grid.n;
        let h = grid.h_x();
        let base_dims = vec![grid.n_x; n];
        let nb = grid.base_sites();
        let gxx: Vec<Vec<crate::model::RMatrix>> = (0..nb)
            .map(|b| (0..grid.fiber_sites()).map(|f| metric.base_block(grid.site_from_parts(f, b))).collect())
            .collect();
        let length = |u: usize, v: usize, delta: &[f64]| -> f64 {
            let d = nalgebra::DVector::from_column_slice(delta);
            gxx[u]
                .iter()
                .zip(&gxx[v])
                .map(|(a, b)| (0.5 * (d.dot(&(a * &d)) + d.dot(&(b * &d)))).sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        let mut dist = vec![f64::INFINITY; nb];
        for (u, d) in dist.iter_mut().enumerate() {
            let x = grid.base_coords(u);
            for p in &bs.points {
                let delta: Vec<f64> = x
                    .iter()
                    .zip(&p.b)
                    .map(|(xi, bi)| {
                        let t = (xi - bi).rem_euclid(1.0);
                        if t > 0.5 { t - 1.0 } else { t }
                    })
                    .collect();
                if delta.iter().all(|t| t.abs() <= h * (1.0 + 1e-9)) {
                    *d = d.min(length(u, u, &delta));
                }
            }
        }
        let offsets: Vec<Vec<isize>> = (0..3usize.pow(n as u32))
            .map(|c| grid::unravel(c, &vec![3; n]).into_iter().map(|t| t as isize - 1).collect::<Vec<_>>())
            .filter(|o: &Vec<isize>| o.iter().any(|&t| t != 0))
            .collect();
        let strides = grid::strides_of(&base_dims);
        let mut heap: BinaryHeap<Reverse<(Dist, usize)>> =
            dist.iter().enumerate().filter(|(_, d)| d.is_finite()).map(|(u, &d)| Reverse((Dist(d), u))).collect();
        while let Some(Reverse((Dist(du), u))) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for o in &offsets {
                let mut v = u;
                for (axis, &t) in o.iter().enumerate() {
                    if t != 0 {
                        v = grid::step(v, axis, t, &base_dims, &strides).0;
                    }
                }
                let delta: Vec<f64> = o.iter().map(|&t| t as f64 * h).collect();
                let alt = du + length(u, v, &delta);
                if alt < dist[v] {
                    dist[v] = alt;
                    heap.push(Reverse((Dist(alt), v)));
                }
            }
        }
        Self { grid, s: metric.s, dist }
    }

    pub fn max(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub eigvec_id: usize,
    pub radius: f64,
    pub fraction: f64,
    pub s: f64,
    pub k: u32,
}

/// `|f|²` summed over each base node's fiber.
fn base_mass(eigvec: &[Complex64], grid: &Grid) -> Vec<f64> {
    let nb = grid.base_sites();
    let mut mass = vec![0.0; nb];
    for (site, v) in eigvec.iter().enumerate() {
        mass[site % nb] += v.norm_sqr();
    }
    mass
}

/// Fraction of `‖f‖²` over fibers whose base node lies within `c` of a
/// Bohr-Sommerfeld point.
pub fn localization_mass_with(eigvec: &[Complex64], eigvec_id: usize, k: u32, c: f64, dist: &BaseDistance) -> LocalizationReport {
    let mass = base_mass(eigvec, &dist.grid);
    let total: f64 = mass.iter().sum();
    let inside: f64 = mass.iter().zip(&dist.dist).filter(|(_, &d)| d <= c + 1e-12).map(|(m, _)| m).sum();
    LocalizationReport { eigvec_id, radius: c, fraction: if total > 0.0 { inside / total } else { 0.0 }, s: dist.s, k }
}

pub fn localization_mass(eigvec: &[Complex64], s: f64, c: f64, metric: &MetricField, bs: &BSPointSet) -> LocalizationReport {
    debug_assert_eq!(s, metric.s);
    localization_mass_with(eigvec, 0, bs.k, c, &BaseDistance::new(metric, bs))
}

/// Step of the radius grid used by [`localization_radius`].
pub const RADIUS_STEP: f64 = 1.0 / 16.0;

/// Smallest `C` on the grid `RADIUS_STEP·ℕ` whose mass fraction is at least `1 − ε`.
pub fn localization_radius(eigvec: &[Complex64], eigvec_id: usize, k: u32, epsilon: f64, dist: &BaseDistance) -> LocalizationReport {
    let mass = base_mass(eigvec, &dist.grid);
    let total: f64 = mass.iter().sum();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| dist.dist[a].total_cmp(&dist.dist[b]));
    let mut acc = 0.0;
    let mut needed = dist.max();
    for &u in &order {
        acc += mass[u];
        if acc >= (1.0 - epsilon) * total {
            needed = dist.dist[u];
            break;
        }
    }
    let c = ((needed / RADIUS_STEP - 1e-9).ceil().max(1.0)) * RADIUS_STEP;
    localization_mass_with(eigvec, eigvec_id, k, c, dist)
}

/// Base nodes with every coordinate in `[lower_i, upper_i]`.
pub fn base_region(grid: &Grid, lower: &[f64], upper: &[f64]) -> Vec<usize> {
    (0..grid.base_sites())
        .filter(|&b| {
            grid.base_coords(b)
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&x, (&lo, &hi))| x >= lo - 1e-12 && x <= hi + 1e-12)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighProbe {
    pub region: Vec<usize>,
    /// Lowest Dirichlet eigenvalue of `∇_k*∇_k + k²` on the region.
    pub floor: f64,
    /// `k² + min_b λ(k, ξ(b))/N_b` over the region.
    pub bound: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const RAYLEIGH_TOL: f64 = 0.05;

pub fn rayleigh_floor_probe(
    metric: &MetricField,
    bundle: &PrequantumBundle,
    grid: &Grid,
    region: &[usize],
    opts: &EigenOptions,
) -> Result<RayleighProbe> {
    if region.is_empty() {
        return Err(Error::Precondition("empty region".into()));
    }
    if region.windows(2).any(|w| w[1] <= w[0]) || *region.last().expect("nonempty") >= grid.base_sites() {
        return Err(Error::Precondition("region must be sorted distinct base indices".into()));
    }
    let bs = bs_points(bundle);
    let h = grid.h_x();
    for &b in region {
        let x = grid.base_coords(b);
        if let Some(p) = bs.points.iter().find(|p| torus_gap(&x, &p.b) < h * (1.0 - 1e-9)) {
            return Err(Error::Precondition(format!(
                "region node {x:?} lies within one cell of the Bohr-Sommerfeld point {:?}",
                p.b
            )));
        }
    }
    let k = bundle.k as f64;
    let bound = k * k
        + region
            .iter()
            .map(|&b| {
                let xi: Vec<f64> = grid.base_coords(b).iter().enumerate().map(|(i, &x)| bundle.xi(i, x)).collect();
                lambda_k_b(bundle.k, &xi).0 / metric.fiber_metric_sup(b)
            })
            .fold(f64::INFINITY, f64::min);
    let op = assemble_bochner(metric, bundle, grid)?;
    let keep: Vec<usize> = (0..grid.fiber_sites())
        .flat_map(|f| region.iter().map(move |&b| grid.site_from_parts(f, b)))
        .collect();
    let restricted = op.restrict(&keep).shifted(k * k, OperatorKind::Bochner);
    let spectrum = lowest_eigenpairs_with(&restricted.matrix, 1, &EigenOptions { want_vectors: false, ..*opts })?;
    let floor = spectrum.eigenvalues[0];
    Ok(RayleighProbe {
        region: region.to_vec(),
        floor,
        bound,
        tolerance: RAYLEIGH_TOL,
        passed: floor >= bound * (1.0 - RAYLEIGH_TOL),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub eigenvalues: Vec<f64>,
    pub k: u32,
    pub n: usize,
    pub kappa: f64,
    pub delta: f64,
    /// Largest eigenvalue of the low cluster (those below `k + κ`).
    pub low_edge: f64,
    /// Smallest eigenvalue above the low cluster.
    pub next: f64,
    pub gap: f64,
    /// `max |low| / δ`, or 0 when `δ = 0`.
    pub c_gap: f64,
    pub cluster_size: usize,
    pub rr_expected: usize,
    pub rr_verdict: bool,
    /// Spectrum inside `(−Cδ, Cδ) ∪ (2k + 2κ − Cδ, ∞)` up to `tolerance`.
    pub verdict: bool,
    pub tolerance: f64,
}

/// Two-interval test for a spectrum of `Δ^♯`.
pub fn gap_report(spectrum: &SpectrumResult, kind: OperatorKind, k: u32, n: usize, kappa: f64, delta: f64) -> Result<GapReport> {
    if kind != OperatorKind::Sharp {
        return Err(Error::Precondition(format!("gap report needs the sharp operator, got {}", kind.name())));
    }
    let rr_expected = (k as usize).pow(n as u32);
    let ev = &spectrum.eigenvalues;
    if ev.len() < rr_expected + 1 {
        return Err(Error::InsufficientSpectrum(format!(
            "{} eigenvalues computed, need at least {}",
            ev.len(),
            rr_expected + 1
        )));
    }
    let kf = k as f64;
    let split = kf + kappa;
    let (low, high): (Vec<f64>, Vec<f64>) = ev.iter().partition(|&&l| l < split);
    if high.is_empty() {
        return Err(Error::InsufficientSpectrum(format!("no computed eigenvalue reaches {split}")));
    }
    let next = high.iter().copied().fold(f64::INFINITY, f64::min);
    let low_edge = low.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap = if low.is_empty() { f64::NAN } else { next - low_edge };
    let low_abs = low.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let c_gap = if delta > 0.0 { low_abs / delta } else { 0.0 };
    let tolerance = 0.05 * 2.0 * kf;
    let cd = c_gap * delta;
    let verdict = !low.is_empty()
        && low.iter().all(|l| l.abs() < cd + tolerance)
        && next > 2.0 * kf + 2.0 * kappa - cd - tolerance;
    Ok(GapReport {
        eigenvalues: ev.clone(),
        k,
        n,
        kappa,
        delta,
        low_edge,
        next,
        gap,
        c_gap,
        cluster_size: low.len(),
        rr_expected,
        rr_verdict: low.len() == rr_expected,
        verdict,
        tolerance,
    })
}
