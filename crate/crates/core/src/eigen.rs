//! Lowest eigenpairs of sparse Hermitian matrices.
//!
//! Block Lanczos with full (twice-iterated classical Gram-Schmidt)
//! reorthogonalization and thick restarts. A short unfiltered Krylov probe
//! locates the wanted part of the spectrum; the main iteration then runs on a
//! Chebyshev polynomial of `A` that damps everything above the probe's cut,
//! keeping the largest Ritz values of the filtered operator. Eigenvalues and
//! residuals always come from a final Rayleigh-Ritz step on `A` itself.
//! Reductions run in a fixed order, so results do not depend on the thread
//! count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SparseHermitianOperator;
use crate::sparse::CsrMatrix;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Largest dimension handled by the dense solver.
pub const DENSE_LIMIT: usize = 2048;

const CHUNK: usize = 4096;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type Vector = Vec<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    Lanczos,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodChoice {
    /// Dense for tiny problems, otherwise Lanczos with dense fallback.
    Auto,
    Lanczos,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub seed: u64,
    /// Block size; defaults to `min(max(m, 2), 8)`.
    pub block: Option<usize>,
    /// Largest basis before a restart; defaults to `max(3(m + p), m + 5p, 32)`.
    pub max_basis: Option<usize>,
    pub max_restarts: usize,
    pub method: MethodChoice,
    pub want_vectors: bool,
    /// Degree of the Chebyshev filter; 0 or 1 runs plain block Lanczos.
    pub filter_degree: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            block: None,
            max_basis: None,
            max_restarts: 2000,
            method: MethodChoice::Auto,
            want_vectors: true,
            filter_degree: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// `‖Mv − λv‖` for unit `v`.
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vector>>,
    pub seed: u64,
    /// Restarts for Lanczos, 1 for dense.
    pub iterations: usize,
    pub matvecs: usize,
    pub method: SolverMethod,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Builds a result from bare eigenvalues (no vectors, zero residuals).
    pub fn from_values(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let m = eigenvalues.len();
        Self {
            eigenvalues,
            residuals: vec![0.0; m],
            eigenvectors: None,
            seed: 0,
            iterations: 0,
            matvecs: 0,
            method: SolverMethod::Dense,
        }
    }
}

pub fn lowest_eigenpairs(op: &SparseHermitianOperator, m: usize, tol: f64, seed: u64) -> Result<SpectrumResult> {
    lowest_eigenpairs_with(&op.matrix, m, &EigenOptions { tol, seed, ..Default::default() })
}

pub fn lowest_eigenpairs_with(a: &CsrMatrix, m: usize, opts: &EigenOptions) -> Result<SpectrumResult> {
    let dim = a.dim();
    if m == 0 || m >= dim {
        return Err(Error::Config(format!("requested {m} eigenpairs of a {dim}-dimensional operator")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let p = opts.block.unwrap_or(m.clamp(2, 8)).max(1);
    let keep = m + p;
    match opts.method {
        MethodChoice::Dense => dense(a, m, opts),
        MethodChoice::Auto if dim <= 256 || 2 * (keep + p) >= dim => dense(a, m, opts),
        MethodChoice::Lanczos if keep + p > dim => dense(a, m, opts),
        choice => match block_lanczos(a, m, p, opts) {
            Err(Error::Convergence { .. }) if choice == MethodChoice::Auto && dim <= DENSE_LIMIT => dense(a, m, opts),
            other => other,
        },
    }
}

fn dense(a: &CsrMatrix, m: usize, opts: &EigenOptions) -> Result<SpectrumResult> {
    let dim = a.dim();
    if dim > DENSE_LIMIT {
        return Err(Error::Config(format!("dense solver limited to dimension {DENSE_LIMIT}, got {dim}")));
    }
    let d = a.to_dense();
    let h = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for &i in order.iter().take(m) {
        let lam = eig.eigenvalues[i];
        let v: Vector = eig.eigenvectors.column(i).iter().copied().collect();
        residuals.push(residual(a, &v, lam));
        values.push(lam);
        vectors.push(v);
    }
    Ok(SpectrumResult {
        eigenvalues: values,
        residuals,
        eigenvectors: opts.want_vectors.then_some(vectors),
        seed: opts.seed,
        iterations: 1,
        matvecs: 0,
        method: SolverMethod::Dense,
    })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // ⟨a, b⟩ = Σ conj(a_i) b_i, summed chunkwise in a fixed order
    let partial: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).fold(ZERO, |acc, (u, v)| acc + u.conj() * v))
        .collect();
    partial.into_iter().fold(ZERO, |acc, z| acc + z)
}

fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).re.max(0.0).sqrt()
}

fn scale(a: &mut [Complex64], c: f64) {
    a.par_iter_mut().for_each(|z| *z *= c);
}

/// `w ← w − Σ_j ⟨v_j, w⟩ v_j`, twice.
fn project_out(basis: &[Vector], w: &mut [Complex64]) {
    if basis.is_empty() {
        return;
    }
    for _ in 0..2 {
        let coef: Vec<Complex64> = basis.par_iter().map(|v| dot(v, w)).collect();
        w.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let off = ci * CHUNK;
            for (j, c) in coef.iter().enumerate() {
                let v = &basis[j][off..off + chunk.len()];
                for (z, vi) in chunk.iter_mut().zip(v) {
                    *z -= c * vi;
                }
            }
        });
    }
}

/// `Σ_j y_j v_j`.
fn combine(basis: &[Vector], y: &[Complex64]) -> Vector {
    let dim = basis[0].len();
    let mut out = vec![ZERO; dim];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
        let off = ci * CHUNK;
        for (j, c) in y.iter().enumerate() {
            let v = &basis[j][off..off + chunk.len()];
            for (z, vi) in chunk.iter_mut().zip(v) {
                *z += c * vi;
            }
        }
    });
    out
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Orthonormalizes `block` against `basis` and itself. Vectors that collapse
/// are replaced by fresh random directions.
fn orthonormalize(basis: &[Vector], block: Vec<Vector>, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let dim = block.first().map_or(0, |v| v.len());
    let mut accepted: Vec<Vector> = Vec::with_capacity(block.len());
    for mut w in block {
        let mut tries = 0;
        loop {
            let before = norm(&w);
            project_out(basis, &mut w);
            project_out(&accepted, &mut w);
            let after = norm(&w);
            if after > 1e-8 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                scale(&mut w, 1.0 / after);
                accepted.push(w);
                break;
            }
            tries += 1;
            if tries > 3 || basis.len() + accepted.len() >= dim {
                break;
            }
            w = random_vector(rng, dim);
        }
    }
    accepted
}

fn residual(a: &CsrMatrix, v: &[Complex64], lam: f64) -> f64 {
    let av = a.apply(v);
    let r: Vector = av.iter().zip(v).map(|(x, y)| x - y * lam).collect();
    norm(&r) / norm(v)
}

struct Basis {
    v: Vec<Vector>,
    bv: Vec<Vector>,
    h: DMatrix<Complex64>,
}

impl Basis {
    fn new() -> Self {
        Self { v: Vec::new(), bv: Vec::new(), h: DMatrix::zeros(0, 0) }
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    /// Appends orthonormal vectors with their images, extending `H = V* B V`.
    fn append(&mut self, block: Vec<Vector>, images: Vec<Vector>) {
        let first = self.v.len();
        self.v.extend(block);
        self.bv.extend(images);
        let b = self.v.len();
        let mut grown = DMatrix::<Complex64>::zeros(b, b);
        grown.view_mut((0, 0), (first, first)).copy_from(&self.h);
        for col in first..b {
            let entries: Vec<Complex64> = self.v.par_iter().map(|vr| dot(vr, &self.bv[col])).collect();
            for (row, e) in entries.into_iter().enumerate() {
                grown[(row, col)] = e;
                grown[(col, row)] = e.conj();
            }
            grown[(col, col)] = Complex64::new(grown[(col, col)].re, 0.0);
        }
        self.h = grown;
    }

    /// Ritz pairs ordered by `rank` (ascending values or descending values).
    fn ritz(&self, largest: bool) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let herm = (&self.h + self.h.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            let c = eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]);
            if largest {
                c.reverse()
            } else {
                c
            }
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let coords = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
        (values, coords)
    }

    /// Keeps the Ritz vectors with the given coordinates.
    fn restart(&mut self, values: &[f64], coords: &[Vec<Complex64>]) {
        let kept = coords.len();
        let v: Vec<Vector> = coords.iter().map(|y| combine(&self.v, y)).collect();
        let bv: Vec<Vector> = coords.iter().map(|y| combine(&self.bv, y)).collect();
        let mut h = DMatrix::<Complex64>::zeros(kept, kept);
        for i in 0..kept {
            h[(i, i)] = Complex64::new(values[i], 0.0);
        }
        self.v = v;
        self.bv = bv;
        self.h = h;
    }
}

/// Final Rayleigh-Ritz of `A` on the span of `x`; returns ascending values,
/// vectors and residual norms.
fn rayleigh_ritz(a: &CsrMatrix, x: &[Vector]) -> (Vec<f64>, Vec<Vector>, Vec<f64>) {
    let ax: Vec<Vector> = x.iter().map(|v| a.apply(v)).collect();
    let q = x.len();
    let mut h = DMatrix::<Complex64>::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            h[(i, j)] = dot(&x[i], &ax[j]);
        }
    }
    let herm = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(q);
    let mut vecs = Vec::with_capacity(q);
    let mut res = Vec::with_capacity(q);
    for &i in &order {
        let y: Vec<Complex64> = eig.eigenvectors.column(i).iter().copied().collect();
        let theta = eig.eigenvalues[i];
        let v = combine(x, &y);
        let av = combine(&ax, &y);
        let r: Vector = av.iter().zip(&v).map(|(u, w)| u - w * theta).collect();
        res.push(norm(&r) / norm(&v));
        values.push(theta);
        vecs.push(v);
    }
    (values, vecs, res)
}

/// Thick-restart block Lanczos for the lowest eigenpairs of `A`.
///
/// A short unfiltered pass estimates where the wanted part of the spectrum
/// ends. The main pass then runs on `T_d(L)` where `L` maps
/// `[cut, ‖A‖]` onto `[−1, 1]`: the wanted eigenvalues become the largest
/// ones and are well separated, while the eigenvectors are unchanged.
fn block_lanczos(a: &CsrMatrix, m: usize, p: usize, opts: &EigenOptions) -> Result<SpectrumResult> {
    let dim = a.dim();
    let keep = m + p;
    let max_basis = opts.max_basis.unwrap_or((3 * keep).max(keep + 4 * p).max(32)).min(dim).max(keep + p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut matvecs = 0;

    // estimate the cut with plain Krylov blocks
    let mut probe = Basis::new();
    let start: Vec<Vector> = (0..p).map(|_| random_vector(&mut rng, dim)).collect();
    let mut pending = orthonormalize(&probe.v, start, &mut rng);
    while !pending.is_empty() && probe.len() + pending.len() <= max_basis && probe.len() < keep + p {
        let images: Vec<Vector> = pending.iter().map(|x| a.apply(x)).collect();
        matvecs += images.len();
        let next = images.clone();
        probe.append(pending, images);
        pending = orthonormalize(&probe.v, next, &mut rng);
    }
    let (values, coords) = probe.ritz(false);
    let upper = a.inf_norm();
    let filter = if opts.filter_degree >= 2 && values.len() >= keep {
        Chebyshev::new(values[keep - 1], upper, opts.filter_degree)
    } else {
        None
    };
    let largest = filter.is_some();
    let apply = |x: &[Complex64]| -> Vector {
        let ax = a.apply(x);
        match &filter {
            Some(f) => f.apply(a, x, &ax),
            None => ax,
        }
    };
    let cost = filter.map_or(1, |f| f.degree);

    // main pass, started from the best probe directions
    let mut basis = Basis::new();
    let start: Vec<Vector> = coords.iter().take(p).map(|y| combine(&probe.v, y)).collect();
    drop(probe);
    pending = orthonormalize(&basis.v, start, &mut rng);
    let mut restarts = 0;
    let mut best = f64::INFINITY;
    let mut since_check = 0;
    loop {
        while !pending.is_empty() && basis.len() + pending.len() <= max_basis {
            let images: Vec<Vector> = pending.iter().map(|x| apply(x)).collect();
            matvecs += images.len() * cost;
            let next = images.clone();
            basis.append(pending, images);
            pending = orthonormalize(&basis.v, next, &mut rng);
            since_check += 1;
            if basis.len() >= keep && since_check >= 2 && basis.len() + pending.len() <= max_basis {
                break;
            }
        }
        since_check = 0;

        let (values, coords) = basis.ritz(largest);
        let b = basis.len();
        if b >= m {
            let x: Vec<Vector> = coords.iter().take(m).map(|y| combine(&basis.v, y)).collect();
            matvecs += m;
            let (lams, vecs, res) = rayleigh_ritz(a, &x);
            let worst = res.iter().copied().fold(0.0, f64::max);
            best = best.min(worst);
            if worst <= opts.tol {
                return Ok(SpectrumResult {
                    eigenvalues: lams,
                    residuals: res,
                    eigenvectors: opts.want_vectors.then_some(vecs),
                    seed: opts.seed,
                    iterations: restarts,
                    matvecs,
                    method: SolverMethod::Lanczos,
                });
            }
        }
        if pending.is_empty() && b >= dim {
            return Err(Error::Convergence { restarts, best_residual: best });
        }
        if basis.len() + pending.len() <= max_basis {
            continue;
        }
        if restarts >= opts.max_restarts {
            return Err(Error::Convergence { restarts, best_residual: best });
        }
        restarts += 1;
        let kept = keep.min(b);
        basis.restart(&values[..kept], &coords[..kept]);
        pending = orthonormalize(&basis.v, pending, &mut rng);
    }
}

/// `T_d` mapped so that `[cut, upper]` goes to `[−1, 1]`; it magnifies the
/// part of the spectrum below `cut`.
#[derive(Debug, Clone, Copy)]
struct Chebyshev {
    center: f64,
    half_width: f64,
    degree: usize,
}

impl Chebyshev {
    fn new(cut: f64, upper: f64, degree: usize) -> Option<Self> {
        let half_width = 0.5 * (upper - cut);
        (half_width > 1e-3 * upper.abs().max(1.0)).then_some(Self { center: 0.5 * (upper + cut), half_width, degree })
    }

    /// `T_d(L) x` where `ax = A x` is already known.
    fn apply(&self, a: &CsrMatrix, x: &[Complex64], ax: &[Complex64]) -> Vector {
        let (c, e) = (self.center, self.half_width);
        let mut prev: Vector = x.to_vec();
        let mut cur: Vector = ax.iter().zip(x).map(|(u, w)| (u - w * c) / e).collect();
        let mut scratch = vec![ZERO; x.len()];
        for _ in 1..self.degree {
            a.matvec(&cur, &mut scratch);
            let next: Vector = scratch
                .par_iter()
                .zip(cur.par_iter())
                .zip(prev.par_iter())
                .map(|((ay, y), yp)| (ay - y * c) * (2.0 / e) - yp)
                .collect();
            prev = std::mem::replace(&mut cur, next);
            let nrm = norm(&cur);
            if nrm > 1e100 {
                scale(&mut cur, 1.0 / nrm);
                scale(&mut prev, 1.0 / nrm);
            }
        }
        cur
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Mean of the members.
    pub value: f64,
    pub multiplicity: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub clusters: Vec<Cluster>,
    pub threshold: f64,
}

impl ClusterReport {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.multiplicity).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.value).collect()
    }
}

/// `max(0.05·k, 5·max residual)`.
pub fn default_cluster_threshold(result: &SpectrumResult, k: u32) -> f64 {
    (0.05 * k as f64).max(5.0 * result.max_residual())
}

/// Greedy gap clustering of sorted eigenvalues.
pub fn cluster(result: &SpectrumResult, gap_threshold: f64) -> ClusterReport {
    let mut clusters: Vec<Cluster> = Vec::new();
    let ev = &result.eigenvalues;
    for (i, &lam) in ev.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if lam - ev[i - 1] <= gap_threshold => c.members.push(i),
            _ => clusters.push(Cluster { value: 0.0, multiplicity: 0, members: vec![i] }),
        }
    }
    for c in &mut clusters {
        c.multiplicity = c.members.len();
        c.value = c.members.iter().map(|&i| ev[i]).sum::<f64>() / c.multiplicity as f64;
    }
    ClusterReport { clusters, threshold: gap_threshold }
}
