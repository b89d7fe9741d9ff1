//! Link-phase discretization of `∇_k*∇_k` and the operators derived from it.
//!
//! Sections of `L^k` are sampled at grid sites in the trivialization where
//! `∇_k = d − i k ξ_i dθ^i`. Forward covariant differences are
//! `D⁺_a ψ(p) = (U_a(p) ψ(p + e_a) − ψ(p)) / h_a` with the exact parallel
//! transport `U` of the connection along each edge. The energy
//!
//! ```text
//! E(ψ) = Σ_p vol · avg_σ (D^σ ψ)† g⁻¹(p) (D^σ ψ)
//! ```
//!
//! averages over the `2^{2n}` choices of forward/backward difference per axis,
//! which keeps the form Hermitian and positive semidefinite for any metric.
//! The operator is `W^{-1/2} K W^{-1/2}` with `K` the form matrix and `W` the
//! site volumes.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::PrequantumBundle;
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::model::{MetricField, RMatrix};
use crate::sparse::{CooBuilder, CsrMatrix};

const HERMITIAN_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    Bochner,
    Sharp,
    Dbar,
    Fiber,
    CircleReduced,
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Bochner => "bochner",
            OperatorKind::Sharp => "sharp",
            OperatorKind::Dbar => "dbar",
            OperatorKind::Fiber => "fiber",
            OperatorKind::CircleReduced => "circle_reduced",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [Self::Bochner, Self::Sharp, Self::Dbar, Self::Fiber, Self::CircleReduced]
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown operator kind `{name}`")))
    }
}

/// Link phases of `∇_k` on a grid.
#[derive(Debug, Clone)]
pub struct GaugeLattice {
    pub grid: Grid,
    pub k: u32,
    pub offsets: Vec<f64>,
    /// `U_a(p)` at `site * 2n + a`.
    links: Vec<Complex64>,
}

impl GaugeLattice {
    pub fn new(grid: &Grid, bundle: &PrequantumBundle) -> Result<Self> {
        if bundle.n != grid.n {
            return Err(Error::Config(format!("bundle has n = {}, grid has n = {}", bundle.n, grid.n)));
        }
        Ok(Self::with_level(grid, bundle.k, &bundle.offsets))
    }

    /// Trivial connection (`k = 0`).
    pub fn uncharged(grid: &Grid) -> Self {
        Self::with_level(grid, 0, &vec![0.0; grid.n])
    }

    pub fn with_level(grid: &Grid, k: u32, offsets: &[f64]) -> Self {
        let n = grid.n;
        let kf = k as f64;
        let links = (0..grid.num_sites())
            .into_par_iter()
            .flat_map_iter(|site| {
                let idx = grid.multi_index(site);
                (0..2 * n).map(move |a| {
                    if a < n {
                        let xi = idx[n + a] as f64 * grid.h_x() + offsets[a] / TAU;
                        Complex64::from_polar(1.0, -kf * xi * grid.h_theta())
                    } else if idx[a] + 1 == grid.n_x {
                        let theta = idx[a - n] as f64 * grid.h_theta();
                        Complex64::from_polar(1.0, kf * theta)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
            })
            .collect();
        Self { grid: *grid, k, offsets: offsets.to_vec(), links }
    }

    pub fn link(&self, site: usize, axis: usize) -> Complex64 {
        self.links[site * self.grid.axes() + axis]
    }

    /// Transport around the elementary square spanned by axes `a`, `b` at `site`.
    pub fn plaquette(&self, site: usize, a: usize, b: usize) -> Complex64 {
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        let (pa, _) = grid::step(site, a, 1, &dims, &strides);
        let (pb, _) = grid::step(site, b, 1, &dims, &strides);
        self.link(site, a) * self.link(pa, b) * self.link(pb, a).conj() * self.link(site, b).conj()
    }

    /// Total flux `Σ arg(plaquette)` through the `(x_i, θ^i)` plane at the origin.
    /// Links transport towards the base site, so the `(θ, x)` link loop is
    /// the holonomy of the `ω`-oriented square.
    pub fn plane_flux(&self, i: usize) -> f64 {
        self.plane_flux_between(i, self.grid.n + i)
    }

    /// Flux through the coordinate plane of axes `a`, `b` passing through the origin.
    pub fn plane_flux_between(&self, a: usize, b: usize) -> f64 {
        let dims = self.grid.dims();
        let mut idx = vec![0usize; dims.len()];
        let mut total = 0.0;
        for ia in 0..dims[a] {
            for ib in 0..dims[b] {
                idx[a] = ia;
                idx[b] = ib;
                total += self.plaquette(grid::ravel(&idx, &dims), a, b).arg();
            }
        }
        total
    }

    /// Discrete first Chern numbers, one per `(x_i, θ^i)` plane.
    pub fn chern_numbers(&self) -> Vec<f64> {
        (0..self.grid.n).map(|i| self.plane_flux(i) / TAU).collect()
    }

    /// Links after the gauge change `ψ ↦ e^{iχ}ψ`.
    pub fn gauge_transform(&self, chi: &[f64]) -> Self {
        assert_eq!(chi.len(), self.grid.num_sites());
        let dims = self.grid.dims();
        let strides = self.grid.strides();
        let axes = self.grid.axes();
        let mut out = self.clone();
        for site in 0..self.grid.num_sites() {
            for a in 0..axes {
                let (nb, _) = grid::step(site, a, 1, &dims, &strides);
                out.links[site * axes + a] *= Complex64::from_polar(1.0, chi[site] - chi[nb]);
            }
        }
        out
    }
}

/// An assembled lattice operator together with what it discretizes.
#[derive(Debug, Clone)]
pub struct SparseHermitianOperator {
    pub matrix: CsrMatrix,
    pub kind: OperatorKind,
    pub k: u32,
    pub s: Option<f64>,
    pub grid: Option<Grid>,
}

impl SparseHermitianOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply(x)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.matrix.hermitian_defect()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= HERMITIAN_TOL * self.matrix.max_abs().max(1.0)
    }

    /// `self + c·I` relabelled as `kind`.
    pub fn shifted(&self, c: f64, kind: OperatorKind) -> Self {
        Self { matrix: self.matrix.add_identity(c), kind, ..self.clone() }
    }

    pub fn scaled(&self, factor: f64, kind: OperatorKind) -> Self {
        let f = Complex64::new(factor, 0.0);
        Self { matrix: self.matrix.map_values(|_, _, v| v * f), kind, ..self.clone() }
    }

    /// Dirichlet restriction to the sites in `keep` (sorted).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self { matrix: self.matrix.principal_submatrix(keep), grid: None, ..self.clone() }
    }

    /// `D M D†` with `D = diag(e^{iχ})`.
    pub fn gauge_conjugate(&self, chi: &[f64]) -> Self {
        let m = self.matrix.map_values(|r, c, v| v * Complex64::from_polar(1.0, chi[r] - chi[c]));
        Self { matrix: m, ..self.clone() }
    }
}

/// Knobs that do not change the continuum operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Multiplies every cell volume.
    pub weight_scale: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { weight_scale: 1.0 }
    }
}

/// Everything the quadratic-form assembler needs to know about a lattice.
struct FormSpec<'a> {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    links: &'a (dyn Fn(usize, usize) -> Complex64 + Sync),
    /// Inverse metric per site; one extra trailing row/column when `vertical` is set.
    ginv: &'a (dyn Fn(usize) -> RMatrix + Sync),
    /// Charge of the vertical channel `−ik·φ`.
    vertical: Option<f64>,
    /// Cell weight of the quadratic form.
    form_weight: f64,
    /// Cell weight of the L² inner product.
    mass_weight: f64,
}

type Stencil = [(usize, Complex64); 2];

fn assemble_form(spec: &FormSpec<'_>) -> CsrMatrix {
    let axes = spec.dims.len();
    let strides = grid::strides_of(&spec.dims);
    let sites: usize = spec.dims.iter().product();
    // M = diag(mass)⁻¹K, with the ratio formed before accumulation
    let w = spec.form_weight / spec.mass_weight;
    let zero = Complex64::new(0.0, 0.0);

    let per_site: Vec<Vec<(usize, usize, Complex64)>> = (0..sites)
        .into_par_iter()
        .map(|p| {
            let ginv = (spec.ginv)(p);
            let mut plus: Vec<Stencil> = Vec::with_capacity(axes + 1);
            let mut minus: Vec<Stencil> = Vec::with_capacity(axes + 1);
            let mut central: Vec<Stencil> = Vec::with_capacity(axes + 1);
            for a in 0..axes {
                let h = spec.spacing[a];
                let (fwd, _) = grid::step(p, a, 1, &spec.dims, &strides);
                let (bwd, _) = grid::step(p, a, -1, &spec.dims, &strides);
                let u = (spec.links)(p, a);
                let u_prev = (spec.links)(bwd, a).conj();
                plus.push([(fwd, u / h), (p, Complex64::new(-1.0 / h, 0.0))]);
                minus.push([(p, Complex64::new(1.0 / h, 0.0)), (bwd, -u_prev / h)]);
                central.push([(fwd, u / (2.0 * h)), (bwd, -u_prev / (2.0 * h))]);
            }
            if let Some(k) = spec.vertical {
                let v = [(p, Complex64::new(0.0, -k)), (p, zero)];
                plus.push(v);
                minus.push(v);
                central.push(v);
            }
            let channels = plus.len();
            let mut out = Vec::with_capacity(4 * channels * channels);
            let mut term = |weight: f64, c: &Stencil, d: &Stencil| {
                for &(r, dr) in d {
                    for &(q, cq) in c {
                        let v = dr.conj() * cq * weight;
                        if v != zero {
                            out.push((r, q, v));
                        }
                    }
                }
            };
            for a in 0..channels {
                let gaa = ginv[(a, a)];
                if gaa != 0.0 {
                    term(0.5 * w * gaa, &plus[a], &plus[a]);
                    term(0.5 * w * gaa, &minus[a], &minus[a]);
                }
                for b in 0..channels {
                    if a != b && ginv[(a, b)] != 0.0 {
                        term(w * ginv[(a, b)], &central[a], &central[b]);
                    }
                }
            }
            out
        })
        .collect();

    let nnz: usize = per_site.iter().map(|v| v.len()).sum();
    let mut b = CooBuilder::with_capacity(sites, nnz);
    for entries in per_site {
        b.extend(entries);
    }
    b.build()
}

fn check_grid(metric: &MetricField, grid: &Grid) -> Result<()> {
    if metric.grid != *grid {
        return Err(Error::Config(format!(
            "metric sampled on {}x{} (n = {}) but operator requested on {}x{} (n = {})",
            metric.grid.n_theta, metric.grid.n_x, metric.grid.n, grid.n_theta, grid.n_x, grid.n
        )));
    }
    Ok(())
}

fn finish(matrix: CsrMatrix, kind: OperatorKind, k: u32, s: Option<f64>, grid: Option<Grid>) -> Result<SparseHermitianOperator> {
    let op = SparseHermitianOperator { matrix, kind, k, s, grid };
    if !op.is_hermitian() {
        return Err(Error::Assembly(format!("{} operator not Hermitian (defect {:e})", kind.name(), op.hermitian_defect())));
    }
    Ok(op)
}

/// `∇_k*∇_k` on a given gauge lattice.
pub fn assemble_bochner_on(metric: &MetricField, lattice: &GaugeLattice, opts: AssemblyOptions) -> Result<SparseHermitianOperator> {
    check_grid(metric, &lattice.grid)?;
    let grid = lattice.grid;
    let links = |p: usize, a: usize| lattice.link(p, a);
    let ginv = |p: usize| metric.g_inv[p].clone();
    let spec = FormSpec {
        dims: grid.dims(),
        spacing: (0..grid.axes()).map(|a| grid.spacing(a)).collect(),
        links: &links,
        ginv: &ginv,
        vertical: None,
        form_weight: grid.cell_volume() * opts.weight_scale,
        mass_weight: grid.cell_volume() * opts.weight_scale,
    };
    finish(assemble_form(&spec), OperatorKind::Bochner, lattice.k, Some(metric.s), Some(grid))
}

/// `∇_k*∇_k` for the bundle's connection.
pub fn assemble_bochner(metric: &MetricField, bundle: &PrequantumBundle, grid: &Grid) -> Result<SparseHermitianOperator> {
    check_grid(metric, grid)?;
    assemble_bochner_on(metric, &GaugeLattice::new(grid, bundle)?, AssemblyOptions::default())
}

/// `Δ^♯ = ∇_k*∇_k − nk` and, for integrable structures, `Δ_∂̄ = ½Δ^♯`.
#[derive(Debug, Clone)]
pub struct ShiftedOperators {
    pub sharp: SparseHermitianOperator,
    pub dbar: Option<SparseHermitianOperator>,
}

pub fn assemble_sharp(metric: &MetricField, bundle: &PrequantumBundle, grid: &Grid, integrable: bool) -> Result<ShiftedOperators> {
    let bochner = assemble_bochner(metric, bundle, grid)?;
    Ok(sharp_from_bochner(&bochner, grid.n, integrable))
}

pub fn sharp_from_bochner(bochner: &SparseHermitianOperator, n: usize, integrable: bool) -> ShiftedOperators {
    let nk = (n as u32 * bochner.k) as f64;
    let sharp = bochner.shifted(-nk, OperatorKind::Sharp);
    let dbar = integrable.then(|| sharp.scaled(0.5, OperatorKind::Dbar));
    ShiftedOperators { sharp, dbar }
}

/// Metric on the fiber `T^n` entering the fiber operator.
#[derive(Debug, Clone)]
pub enum FiberMetric {
    Euclidean,
    /// Metric (not inverse) at each fiber site, row-major over `θ^1..θ^n`.
    Samples(Vec<RMatrix>),
}

impl FiberMetric {
    /// The `θθ` block of a metric field over base point index `base`.
    pub fn from_field(metric: &MetricField, base: usize) -> Self {
        let grid = metric.grid;
        FiberMetric::Samples(
            (0..grid.fiber_sites())
                .map(|f| metric.fiber_block(grid.site_from_parts(f, base)))
                .collect(),
        )
    }
}

/// The twisted fiber Laplacian `Σ (∂_i + i k b_i)* g_b^{ij} (∂_j + i k b_j)` on `T^n`.
pub fn assemble_fiber_operator(b: &[f64], k: u32, fiber_metric: &FiberMetric, n_theta: usize) -> Result<SparseHermitianOperator> {
    let n = b.len();
    if n == 0 {
        return Err(Error::Config("fiber dimension must be positive".into()));
    }
    if n_theta < 4 {
        return Err(Error::Config(format!("fiber resolution {n_theta} below the minimum of 4")));
    }
    let sites = n_theta.pow(n as u32);
    let inverses: Vec<RMatrix> = match fiber_metric {
        FiberMetric::Euclidean => vec![RMatrix::identity(n, n)],
        FiberMetric::Samples(samples) => {
            if samples.len() != sites {
                return Err(Error::Config(format!("{} fiber metric samples for {sites} fiber sites", samples.len())));
            }
            samples
                .iter()
                .enumerate()
                .map(|(site, g)| {
                    let eig = g.clone().symmetric_eigen();
                    let lam = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                    if g.nrows() != n || lam <= crate::model::PD_FLOOR {
                        return Err(Error::InvalidStructure {
                            site: Some(site),
                            reason: format!("degenerate fiber metric (smallest eigenvalue {lam:e})"),
                        });
                    }
                    Ok(g.clone().cholesky().expect("positive definite").inverse())
                })
                .collect::<Result<_>>()?
        }
    };
    let h = TAU / n_theta as f64;
    let phases: Vec<Complex64> = b.iter().map(|&bi| Complex64::from_polar(1.0, k as f64 * bi * h)).collect();
    let links = |_: usize, a: usize| phases[a];
    let ginv = |p: usize| if inverses.len() == 1 { inverses[0].clone() } else { inverses[p].clone() };
    let spec = FormSpec {
        dims: vec![n_theta; n],
        spacing: vec![h; n],
        links: &links,
        ginv: &ginv,
        vertical: None,
        form_weight: h.powi(n as i32),
        mass_weight: h.powi(n as i32),
    };
    finish(assemble_form(&spec), OperatorKind::Fiber, k, None, None)
}

/// Inverse of `ĝ = (dt − ξ_i dθ^i)² + g` in the horizontal frame
/// `{∂_θ + ξ∂_t, ∂_x, ∂_t}`.
fn circle_inverse_adapted(g: &RMatrix, xi: &[f64]) -> RMatrix {
    let n = xi.len();
    let d = 2 * n + 1;
    let t = 2 * n;
    let mut gc = RMatrix::zeros(d, d);
    gc.view_mut((0, 0), (2 * n, 2 * n)).copy_from(g);
    for i in 0..n {
        for j in 0..n {
            gc[(i, j)] += xi[i] * xi[j];
        }
        gc[(i, t)] = -xi[i];
        gc[(t, i)] = -xi[i];
    }
    gc[(t, t)] = 1.0;
    let gc_inv = gc.cholesky().expect("circle-bundle metric positive definite").inverse();
    // covector components transform by T = [[I,0,ξ],[0,I,0],[0,0,1]]
    let mut tinv = RMatrix::identity(d, d);
    for i in 0..n {
        tinv[(i, t)] = -xi[i];
    }
    let adapted = tinv.transpose() * gc_inv * &tinv;
    (&adapted + adapted.transpose()) * 0.5
}

/// The Laplacian of `ĝ` on `T^{2n} × S^1` acting on functions `φ e^{−ikt}`.
pub fn assemble_circle_reduced(metric: &MetricField, bundle: &PrequantumBundle, grid: &Grid) -> Result<SparseHermitianOperator> {
    check_grid(metric, grid)?;
    let lattice = GaugeLattice::new(grid, bundle)?;
    circle_reduced_on(metric, &lattice)
}

pub(crate) fn circle_reduced_on(metric: &MetricField, lattice: &GaugeLattice) -> Result<SparseHermitianOperator> {
    let grid = lattice.grid;
    let n = grid.n;
    let links = |p: usize, a: usize| lattice.link(p, a);
    let ginv = |p: usize| {
        let x = grid.x(p);
        let xi: Vec<f64> = (0..n).map(|i| x[i] + lattice.offsets[i] / TAU).collect();
        circle_inverse_adapted(&metric.g[p], &xi)
    };
    let spec = FormSpec {
        dims: grid.dims(),
        spacing: (0..grid.axes()).map(|a| grid.spacing(a)).collect(),
        links: &links,
        ginv: &ginv,
        vertical: Some(lattice.k as f64),
        form_weight: grid.cell_volume(),
        mass_weight: grid.cell_volume(),
    };
    finish(assemble_form(&spec), OperatorKind::CircleReduced, lattice.k, Some(metric.s), Some(grid))
}

/// `max |A − B| / max(|A|, |B|)` over the union of stored entries.
pub fn relative_max_difference(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let mut worst: f64 = 0.0;
    for (r, c, v) in a.triplets() {
        worst = worst.max((v - b.get(r, c)).norm());
    }
    for (r, c, v) in b.triplets() {
        worst = worst.max((v - a.get(r, c)).norm());
    }
    worst / a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{family_at, Preset};

    fn flat(n: usize, s: f64, nt: usize, nx: usize) -> MetricField {
        family_at(&Preset::Flat.family(n), s, &Grid::new(n, nt, nx).unwrap()).unwrap()
    }

    #[test]
    fn links_are_unitary_and_flux_is_quantized() {
        let grid = Grid::new(1, 12, 10).unwrap();
        for k in 1..=3 {
            let bundle = PrequantumBundle::with_offsets(1, k, vec![0.7]).unwrap();
            let lat = GaugeLattice::new(&grid, &bundle).unwrap();
            for site in 0..grid.num_sites() {
                for a in 0..2 {
                    assert!((lat.link(site, a).norm() - 1.0).abs() < 1e-15);
                }
            }
            assert!((lat.plane_flux(0) - TAU * k as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_planes_carry_no_flux() {
        let grid = Grid::new(2, 6, 5).unwrap();
        let lat = GaugeLattice::new(&grid, &PrequantumBundle::new(2, 2).unwrap()).unwrap();
        let cn = lat.chern_numbers();
        assert!((cn[0] - 2.0).abs() < 1e-10 && (cn[1] - 2.0).abs() < 1e-10, "{cn:?}");
        for (a, b) in [(0, 1), (2, 3), (0, 3), (1, 2)] {
            assert!(lat.plane_flux_between(a, b).abs() < 1e-10);
        }
    }

    #[test]
    fn uncharged_flat_is_five_point_laplacian() {
        let metric = flat(1, 1.0, 8, 8);
        let op = assemble_bochner_on(&metric, &GaugeLattice::uncharged(&metric.grid), AssemblyOptions::default()).unwrap();
        let grid = metric.grid;
        let (ht, hx) = (grid.h_theta(), grid.h_x());
        let site = grid.site_of(&[3, 4]);
        assert!((op.matrix.get(site, site).re - (2.0 / (ht * ht) + 2.0 / (hx * hx))).abs() < 1e-9);
        assert!((op.matrix.get(site, grid.site_of(&[4, 4])).re + 1.0 / (ht * ht)).abs() < 1e-9);
        assert!((op.matrix.get(site, grid.site_of(&[3, 5])).re + 1.0 / (hx * hx)).abs() < 1e-9);
        let ones = vec![Complex64::new(1.0, 0.0); grid.num_sites()];
        let r = op.apply(&ones);
        assert!(r.iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn uncharged_kernel_holds_for_curved_metrics() {
        let grid = Grid::new(1, 8, 8).unwrap();
        let metric = family_at(&Preset::Heart.family(1), 0.3, &grid).unwrap();
        let op = assemble_bochner_on(&metric, &GaugeLattice::uncharged(&grid), AssemblyOptions::default()).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); grid.num_sites()];
        let scale = op.matrix.max_abs();
        assert!(op.apply(&ones).iter().all(|z| z.norm() < 1e-12 * scale));
    }

    #[test]
    fn bochner_is_hermitian_with_mixed_terms() {
        let grid = Grid::new(1, 8, 8).unwrap();
        let metric = family_at(&Preset::Heart.family(1), 0.3, &grid).unwrap();
        let op = assemble_bochner(&metric, &PrequantumBundle::new(1, 2).unwrap(), &grid).unwrap();
        assert!(op.is_hermitian());
        assert_eq!(op.hermitian_defect(), 0.0);
    }

    #[test]
    fn sharp_is_exact_shift() {
        let metric = flat(1, 0.5, 8, 8);
        let bundle = PrequantumBundle::new(1, 1).unwrap();
        let b = assemble_bochner(&metric, &bundle, &metric.grid).unwrap();
        let s = assemble_sharp(&metric, &bundle, &metric.grid, true).unwrap();
        for (r, c, v) in b.matrix.triplets() {
            let expect = if r == c { v - 1.0 } else { v };
            assert_eq!(s.sharp.matrix.get(r, c), expect);
            assert_eq!(s.dbar.as_ref().unwrap().matrix.get(r, c), expect * 0.5);
        }
    }

    #[test]
    fn grid_mismatch_is_config_error() {
        let metric = flat(1, 0.5, 8, 8);
        let other = Grid::new(1, 16, 8).unwrap();
        let err = assemble_bochner(&metric, &PrequantumBundle::new(1, 1).unwrap(), &other).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn circle_reduced_identity() {
        for (preset, k, s) in [(Preset::Flat, 1, 0.2), (Preset::SemiflatX, 3, 0.1), (Preset::Heart, 2, 0.3)] {
            let grid = Grid::new(1, 16, 16).unwrap();
            let metric = family_at(&preset.family(1), s, &grid).unwrap();
            let bundle = PrequantumBundle::with_offsets(1, k, vec![1.1]).unwrap();
            let b = assemble_bochner(&metric, &bundle, &grid).unwrap();
            let c = assemble_circle_reduced(&metric, &bundle, &grid).unwrap();
            let kk = (k * k) as f64;
            let d = relative_max_difference(&c.matrix, &b.matrix.add_identity(kk));
            assert!(d < 1e-12, "{preset:?}: {d:e}");
        }
    }

    #[test]
    fn fiber_operator_euclidean_symbol() {
        let op = assemble_fiber_operator(&[0.3], 2, &FiberMetric::Euclidean, 16).unwrap();
        let h = TAU / 16.0;
        // diagonal 2/h², neighbours −e^{±ikbh}/h²
        assert!((op.matrix.get(3, 3).re - 2.0 / (h * h)).abs() < 1e-12);
        let off = op.matrix.get(3, 4);
        assert!((off + Complex64::from_polar(1.0, 0.6 * h) / (h * h)).norm() < 1e-12);
    }

    #[test]
    fn fiber_operator_rejects_degenerate_metric() {
        let samples = vec![RMatrix::from_element(1, 1, 0.0); 8];
        let err = assemble_fiber_operator(&[0.0], 1, &FiberMetric::Samples(samples), 8).unwrap_err();
        assert!(matches!(err, Error::InvalidStructure { .. }));
    }
}
