//! Ricci curvature of `g_J` on `T^{2n}` by periodic finite differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::model::{family_at, semiflatness_check, ComplexStructureFamily, MetricField, RMatrix, SemiflatnessReport, DEFAULT_SEMIFLAT_TOL};

pub const MIN_POINTS: usize = 16;

/// Ricci components of the circle-bundle metric `ĝ` on `T^{2n} × S¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleRicci {
    /// `Ric_ĝ(∂̂_j, ∂̂_k) = Ric_jk − g_jk/2` per site.
    pub horizontal: Vec<RMatrix>,
    /// `Ric_ĝ(∂̂_j, e♯)`, identically zero.
    pub mixed: Vec<f64>,
    /// `Ric_ĝ(e♯, e♯) = n/2`.
    pub vertical: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub s: f64,
    pub grid: Grid,
    pub ricci: Vec<RMatrix>,
    /// Smallest eigenvalue of `Ric` relative to `g` at each site.
    pub relative_min: Vec<f64>,
    /// Minimum of `relative_min` over the grid.
    pub kappa_hat: f64,
    /// Largest `|Ric − Ricᵀ|` before symmetrization.
    pub asymmetry: f64,
    pub circle: CircleRicci,
}

/// Fourth-order periodic derivative of a per-site field along `axis`.
fn d4<F: Fn(usize) -> f64>(f: F, site: usize, axis: usize, dims: &[usize], strides: &[usize], h: f64) -> f64 {
    let (p1, _) = grid::step(site, axis, 1, dims, strides);
    let (p2, _) = grid::step(p1, axis, 1, dims, strides);
    let (m1, _) = grid::step(site, axis, -1, dims, strides);
    let (m2, _) = grid::step(m1, axis, -1, dims, strides);
    (-f(p2) + 8.0 * f(p1) - 8.0 * f(m1) + f(m2)) / (12.0 * h)
}

pub fn ricci_field(metric: &MetricField) -> Result<CurvatureReport> {
    let grid = metric.grid;
    if grid.n_theta < MIN_POINTS || grid.n_x < MIN_POINTS {
        return Err(Error::Resolution(format!(
            "curvature needs at least {MIN_POINTS} points per axis, grid is {}x{}",
            grid.n_theta, grid.n_x
        )));
    }
    let d = grid.axes();
    let dims = grid.dims();
    let strides = grid.strides();
    let sites = grid.num_sites();
    let h: Vec<f64> = (0..d).map(|a| grid.spacing(a)).collect();
    let idx3 = |a: usize, b: usize, c: usize| (a * d + b) * d + c;

    // dg[site][idx3(c, a, b)] = ∂_c g_ab
    let dg: Vec<Vec<f64>> = (0..sites)
        .into_par_iter()
        .map(|site| {
            let mut out = vec![0.0; d * d * d];
            for c in 0..d {
                for a in 0..d {
                    for b in a..d {
                        let v = d4(|q| metric.g[q][(a, b)], site, c, &dims, &strides, h[c]);
                        out[idx3(c, a, b)] = v;
                        out[idx3(c, b, a)] = v;
                    }
                }
            }
            out
        })
        .collect();

    // gamma[site][idx3(a, b, c)] = Γ^a_bc
    let gamma: Vec<Vec<f64>> = (0..sites)
        .into_par_iter()
        .map(|site| {
            let gi = &metric.g_inv[site];
            let dgs = &dg[site];
            let mut out = vec![0.0; d * d * d];
            for a in 0..d {
                for b in 0..d {
                    for c in b..d {
                        let mut acc = 0.0;
                        for e in 0..d {
                            acc += gi[(a, e)] * (dgs[idx3(b, e, c)] + dgs[idx3(c, e, b)] - dgs[idx3(e, b, c)]);
                        }
                        out[idx3(a, b, c)] = 0.5 * acc;
                        out[idx3(a, c, b)] = 0.5 * acc;
                    }
                }
            }
            out
        })
        .collect();

    let raw: Vec<RMatrix> = (0..sites)
        .into_par_iter()
        .map(|site| {
            let gs = &gamma[site];
            let dgam = |e: usize, a: usize, b: usize, c: usize| {
                d4(|q| gamma[q][idx3(a, b, c)], site, e, &dims, &strides, h[e])
            };
            RMatrix::from_fn(d, d, |b, c| {
                let mut r = 0.0;
                for a in 0..d {
                    r += dgam(a, a, b, c) - dgam(c, a, a, b);
                    for e in 0..d {
                        r += gs[idx3(a, a, e)] * gs[idx3(e, b, c)] - gs[idx3(a, c, e)] * gs[idx3(e, a, b)];
                    }
                }
                r
            })
        })
        .collect();

    let asymmetry = raw.iter().map(|r| (r - r.transpose()).amax()).fold(0.0, f64::max);
    let ricci: Vec<RMatrix> = raw.into_iter().map(|r| (&r + r.transpose()) * 0.5).collect();
    let relative_min: Vec<f64> = ricci
        .par_iter()
        .zip(&metric.g)
        .map(|(ric, g)| relative_min_eigenvalue(ric, g))
        .collect::<Result<Vec<_>>>()?;
    let kappa_hat = relative_min.iter().copied().fold(f64::INFINITY, f64::min);
    let circle = CircleRicci {
        horizontal: ricci.iter().zip(&metric.g).map(|(r, g)| r - g * 0.5).collect(),
        mixed: vec![0.0; d],
        vertical: grid.n as f64 / 2.0,
    };
    Ok(CurvatureReport { s: metric.s, grid, ricci, relative_min, kappa_hat, asymmetry, circle })
}

/// Smallest `κ` with `Ric v = κ g v` for some `v ≠ 0`.
pub fn relative_min_eigenvalue(ric: &RMatrix, g: &RMatrix) -> Result<f64> {
    let l = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidStructure { site: None, reason: "metric is not positive definite".into() })?
        .l();
    let li = l.try_inverse().expect("Cholesky factor is invertible");
    let m = &li * ric * li.transpose();
    let m = (&m + m.transpose()) * 0.5;
    Ok(m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// The curvature form `F = −iπ*ω` as a real two-form in `(θ, x)` order.
pub fn symplectic_form(n: usize) -> RMatrix {
    let mut w = RMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        w[(n + i, i)] = 1.0;
        w[(i, n + i)] = -1.0;
    }
    w
}

/// Largest `|ω G ωᵀ − g|` over sites: `F*F = g` for a compatible metric.
pub fn fstar_f_defect(metric: &MetricField) -> f64 {
    let w = symplectic_form(metric.grid.n);
    metric
        .g
        .par_iter()
        .zip(&metric.g_inv)
        .map(|(g, gi)| (&w * gi * w.transpose() - g).amax())
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RicciVerdict {
    Bounded,
    UnboundedBelow,
}

impl RicciVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            RicciVerdict::Bounded => "bounded",
            RicciVerdict::UnboundedBelow => "unbounded-below",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciProbe {
    pub family: String,
    /// `(s, κ̂(s))` in the order given.
    pub rows: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub verdict: RicciVerdict,
    pub semiflat: SemiflatnessReport,
    pub warnings: Vec<String>,
}

pub const DEFAULT_RICCI_TOL: f64 = 0.5;

/// Bounded iff `min_s κ̂(s) ≥ κ̂(s_max) − tolerance·max(|κ̂(s_max)|, 1)`.
pub fn semiflat_ricci_bound_probe(
    family: &ComplexStructureFamily,
    s_list: &[f64],
    grid: &Grid,
    tolerance: f64,
) -> Result<RicciProbe> {
    if s_list.is_empty() {
        return Err(Error::Config("empty s list".into()));
    }
    let mut warnings = Vec::new();
    if !family.claims.integrable {
        warnings.push(format!("family {} is not integrable; the dichotomy is not claimed for it", family.name));
    }
    let rows = s_list
        .par_iter()
        .map(|&s| {
            let run = || -> Result<f64> { Ok(ricci_field(&family_at(family, s, grid)?)?.kappa_hat) };
            run().map(|kh| (s, kh)).map_err(|e| Error::AtParameter { s, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let &(_, at_max) = rows.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
    let lowest = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let verdict = if lowest >= at_max - tolerance * at_max.abs().max(1.0) {
        RicciVerdict::Bounded
    } else {
        RicciVerdict::UnboundedBelow
    };
    Ok(RicciProbe {
        family: family.name.clone(),
        rows,
        tolerance,
        verdict,
        semiflat: semiflatness_check(family, grid, DEFAULT_SEMIFLAT_TOL),
        warnings,
    })
}
