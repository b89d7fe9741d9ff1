//! Invariant checks run by `gqlab verify`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{base_region, counting_window, localization_mass_with, rayleigh_floor_probe, sweep, BaseDistance, gap_report};
use crate::bundle::{bs_points, fiber_holonomy, holonomy_trivial, PrequantumBundle};
use crate::curvature::{fstar_f_defect, ricci_field};
use crate::eigen::{lowest_eigenpairs_with, EigenOptions, MethodChoice, SpectrumResult};
use crate::error::Result;
use crate::grid::Grid;
use crate::lattice::{
    assemble_bochner, assemble_bochner_on, assemble_fiber_operator, sharp_from_bochner, AssemblyOptions, FiberMetric,
    GaugeLattice,
};
use crate::limit::{binomial, lambda_k_b, level_index_n};
use crate::model::{
    family_at, integrability_residual, semiflatness_check, CMatrix, Claims, ComplexStructureFamily, Preset,
    DEFAULT_SEMIFLAT_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub module: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Family used by the operator-level checks.
    pub preset: Preset,
    pub k: u32,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { preset: Preset::Flat, k: 1, seed: crate::eigen::DEFAULT_SEED }
    }
}

type Check = fn(&SuiteOptions) -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, Check)] = &[
    ("model", "metric_spd_unit_det", metric_spd_unit_det),
    ("model", "block_diagonal_without_real_part", block_diagonal),
    ("model", "linear_homogeneity", linear_homogeneity),
    ("model", "integrability_refinement", integrability_refinement),
    ("model", "semiflat_claims", semiflat_claims),
    ("bundle", "bs_count_with_offsets", bs_count),
    ("bundle", "level_monotonicity", level_monotonicity),
    ("bundle", "holonomy_cross_check", holonomy_cross_check),
    ("lattice", "hermiticity", hermiticity),
    ("lattice", "positive_semidefinite", positive_semidefinite),
    ("lattice", "gauge_invariance", gauge_invariance),
    ("lattice", "measure_scaling", measure_scaling),
    ("lattice", "chern_exact", chern_exact),
    ("lattice", "h_refinement", h_refinement),
    ("eigen", "residual_certificates", residual_certificates),
    ("eigen", "dense_agreement", dense_agreement),
    ("eigen", "seed_reproducibility", seed_reproducibility),
    ("limit", "cumulative_identity", cumulative_identity),
    ("limit", "lambda_zero_iff_bs", lambda_zero_iff_bs),
    ("limit", "level_index_inverse", level_index_inverse),
    ("limit", "fiber_operator_oracle", fiber_operator_oracle),
    ("analysis", "zero_cluster_count", zero_cluster_count),
    ("analysis", "counting_monotone_additive", counting_monotone_additive),
    ("analysis", "localization_monotone", localization_monotone),
    ("analysis", "rayleigh_floor", rayleigh_floor),
    ("analysis", "riemann_roch_count", riemann_roch_count),
    ("curvature", "fstar_f_equals_g", fstar_f),
    ("curvature", "circle_components", circle_components),
    ("curvature", "flat_ricci_vanishes", flat_ricci),
];

pub fn check_names() -> Vec<String> {
    CHECKS.iter().map(|(m, n, _)| format!("{m}.{n}")).collect()
}

/// Runs every check in a fixed order.
pub fn run_suite(opts: &SuiteOptions) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(module, name, check)| {
            let (passed, detail) = match check(opts) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome { module: module.to_string(), name: name.to_string(), passed, detail }
        })
        .collect()
}

fn rng(opts: &SuiteOptions, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(opts.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn dense_opts(m_method: MethodChoice) -> EigenOptions {
    EigenOptions { method: m_method, tol: 1e-9, want_vectors: false, ..Default::default() }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn metric_spd_unit_det(_: &SuiteOptions) -> Result<(bool, String)> {
    let mut worst_det: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for n in 1..=2 {
        let grid = if n == 1 { Grid::new(1, 16, 16)? } else { Grid::new(2, 4, 6)? };
        for p in Preset::ALL {
            for s in [1.0, 0.05] {
                let m = family_at(&p.family(n), s, &grid)?;
                for g in &m.g {
                    worst_det = worst_det.max((g.determinant() - 1.0).abs());
                    min_eig = min_eig.min(g.clone().symmetric_eigen().eigenvalues.min());
                }
            }
        }
    }
    Ok((worst_det <= 1e-10 && min_eig > 1e-12, format!("max |det g − 1| = {worst_det:.3e}, min eigenvalue {min_eig:.3e}")))
}

fn block_diagonal(_: &SuiteOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for p in [Preset::Flat, Preset::SemiflatX, Preset::NonSemiflatTheta, Preset::Hessian] {
        for n in 1..=2 {
            let grid = Grid::new(n, 4, 4)?;
            let m = family_at(&p.family(n), 0.3, &grid)?;
            for g in &m.g {
                worst = worst.max(g.view((0, n), (n, n)).amax());
            }
        }
    }
    Ok((worst == 0.0, format!("largest off-diagonal block entry {worst:e}")))
}

fn linear_homogeneity(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 1);
    let mut worst: f64 = 0.0;
    for p in Preset::ALL {
        let fam = p.family(2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| r.gen::<f64>()).collect();
            let th: Vec<f64> = (0..2).map(|_| r.gen::<f64>() * TAU).collect();
            let s: f64 = r.gen_range(0.01..2.0);
            let q = fam.evaluate(s, &x, &th).map(|z| z.im);
            let q0 = fam.leading_term(&x, &th).map(|z| z.im) * s;
            worst = worst.max((q - q0).amax());
        }
    }
    Ok((worst == 0.0, format!("max |Q(s) − s·Q⁰| = {worst:e}")))
}

/// `A = i·Hess_θ(|θ|²/2 + ε cos θ¹ cos 2θ²)`, integrable with a nonzero
/// discrete residual.
fn theta_hessian_family() -> ComplexStructureFamily {
    let i = Complex64::i();
    ComplexStructureFamily::linear("theta-hessian", 2, Claims { integrable: true, ..Claims::default() }, move |_, th| {
        let (c1, s1, c2, s2) = (th[0].cos(), th[0].sin(), (2.0 * th[1]).cos(), (2.0 * th[1]).sin());
        let e = 0.1;
        let off = i * (2.0 * e * s1 * s2);
        CMatrix::from_row_slice(2, 2, &[i * (1.0 - e * c1 * c2), off, off, i * (1.0 - 4.0 * e * c1 * c2)])
    })
}

fn integrability_refinement(_: &SuiteOptions) -> Result<(bool, String)> {
    let fam = theta_hessian_family();
    let coarse = integrability_residual(&fam, 1.0, &Grid::new(2, 8, 8)?)?;
    let fine = integrability_residual(&fam, 1.0, &Grid::new(2, 16, 8)?)?;
    let mut presets = 0.0f64;
    for p in [Preset::Flat, Preset::SemiflatX, Preset::NonSemiflatTheta, Preset::Hessian] {
        presets = presets.max(integrability_residual(&p.family(2), 1.0, &Grid::new(2, 8, 8)?)?);
    }
    Ok((
        coarse / fine >= 3.0 && presets <= 1e-12,
        format!("refinement ratio {:.3}, integrable presets {presets:.3e}", coarse / fine),
    ))
}

fn random_offsets(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen::<f64>() * TAU).collect()
}

fn bs_count(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 2);
    let mut bad = Vec::new();
    for n in 1..=2 {
        for k in 1..=4u32 {
            for trial in 0..3 {
                let offsets = if trial == 0 { vec![0.0; n] } else { random_offsets(&mut r, n) };
                let b = PrequantumBundle::with_offsets(n, k, offsets)?;
                let set = bs_points(&b);
                let trivial = set.points.iter().all(|p| holonomy_trivial(&fiber_holonomy(&b, &p.b), 1e-9));
                if set.len() != (k as usize).pow(n as u32) || !trivial {
                    bad.push(format!("n={n} k={k}"));
                }
            }
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "all counts equal kⁿ".into() } else { bad.join("; ") }))
}

fn level_monotonicity(_: &SuiteOptions) -> Result<(bool, String)> {
    let mut bad = Vec::new();
    for n in 1..=2 {
        for k in 1..=6u32 {
            let big = bs_points(&PrequantumBundle::new(n, k)?);
            for d in (1..=k).filter(|d| k % d == 0) {
                for p in bs_points(&PrequantumBundle::new(n, d)?).points {
                    if !big.contains(&p.b) {
                        bad.push(format!("{:?} in B_{d} but not B_{k}", p.b));
                    }
                }
            }
            for p in &big.points {
                let l = p.strict_level;
                let minimal = (1..l).all(|d| !bs_points(&PrequantumBundle::new(n, d).expect("positive level")).contains(&p.b));
                let member = bs_points(&PrequantumBundle::new(n, l)?).contains(&p.b);
                if k % l != 0 || !minimal || !member {
                    bad.push(format!("strict level {l} of {:?} at k={k}", p.b));
                }
            }
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "divisor inclusion and strict levels hold".into() } else { bad.join("; ") }))
}

fn holonomy_cross_check(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 3);
    let mut mismatches = 0;
    for t in 0..100 {
        let n = 1 + t % 2;
        let k = r.gen_range(1..=4u32);
        let b = PrequantumBundle::with_offsets(n, k, random_offsets(&mut r, n))?;
        let set = bs_points(&b);
        let point: Vec<f64> = if t % 3 == 0 {
            set.points[r.gen_range(0..set.len())].b.clone()
        } else {
            (0..n).map(|_| r.gen::<f64>()).collect()
        };
        if holonomy_trivial(&fiber_holonomy(&b, &point), 1e-9) != set.contains(&point) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 100 points")))
}

fn small_grid() -> Result<Grid> {
    Grid::new(1, 16, 16)
}

fn hermiticity(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = small_grid()?;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for p in Preset::ALL {
        let m = family_at(&p.family(1), 0.5, &grid)?;
        let op = assemble_bochner(&m, &PrequantumBundle::new(1, opts.k)?, &grid)?;
        ok &= op.is_hermitian();
        worst = worst.max(op.hermitian_defect());
    }
    Ok((ok, format!("max |M − M†| = {worst:.3e}")))
}

fn positive_semidefinite(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = small_grid()?;
    let mut lowest = f64::INFINITY;
    for p in Preset::ALL {
        for k in [0, opts.k] {
            let m = family_at(&p.family(1), 0.5, &grid)?;
            let lat = GaugeLattice::with_level(&grid, k, &[0.0]);
            let op = assemble_bochner_on(&m, &lat, AssemblyOptions::default())?;
            let spec = lowest_eigenpairs_with(&op.matrix, 1, &dense_opts(MethodChoice::Dense))?;
            lowest = lowest.min(spec.eigenvalues[0]);
        }
    }
    Ok((lowest >= -1e-10, format!("smallest Bochner eigenvalue {lowest:.3e}")))
}

fn preset_bochner(opts: &SuiteOptions, grid: &Grid, assembly: AssemblyOptions, lattice: Option<&GaugeLattice>) -> Result<SpectrumResult> {
    let m = family_at(&opts.preset.family(1), 0.5, grid)?;
    let own;
    let lat = match lattice {
        Some(l) => l,
        None => {
            own = GaugeLattice::new(grid, &PrequantumBundle::new(1, opts.k)?)?;
            &own
        }
    };
    let op = assemble_bochner_on(&m, lat, assembly)?;
    lowest_eigenpairs_with(&op.matrix, 8, &dense_opts(MethodChoice::Dense))
}

fn gauge_invariance(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = small_grid()?;
    let mut r = rng(opts, 4);
    let base = GaugeLattice::new(&grid, &PrequantumBundle::new(1, opts.k)?)?;
    let chi: Vec<f64> = (0..grid.num_sites()).map(|_| r.gen::<f64>() * TAU).collect();
    let a = preset_bochner(opts, &grid, AssemblyOptions::default(), Some(&base))?;
    let b = preset_bochner(opts, &grid, AssemblyOptions::default(), Some(&base.gauge_transform(&chi)))?;
    let d = max_gap(&a.eigenvalues, &b.eigenvalues);
    Ok((d <= 1e-10, format!("max eigenvalue change {d:.3e}")))
}

fn measure_scaling(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = small_grid()?;
    let a = preset_bochner(opts, &grid, AssemblyOptions::default(), None)?;
    let b = preset_bochner(opts, &grid, AssemblyOptions { weight_scale: 7.0 }, None)?;
    let d = a
        .eigenvalues
        .iter()
        .zip(&b.eigenvalues)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok((d <= 1e-12, format!("max relative change {d:.3e}")))
}

fn chern_exact(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 5);
    let mut worst: f64 = 0.0;
    for n in 1..=2 {
        for k in 1..=4u32 {
            let grid = Grid::new(n, 6, 5)?;
            let lat = GaugeLattice::new(&grid, &PrequantumBundle::with_offsets(n, k, random_offsets(&mut r, n))?)?;
            for c in lat.chern_numbers() {
                worst = worst.max((c - k as f64).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max |c₁ − k| = {worst:.3e}")))
}

/// Errors of the lowest `2k` eigenvalues of the flat `Δ_∂̄` against `{0, k}`.
fn flat_error(k: u32, nodes: usize) -> Result<f64> {
    let grid = Grid::new(1, nodes, nodes)?;
    let m = family_at(&Preset::Flat.family(1), 1.0 / TAU, &grid)?;
    let b = assemble_bochner(&m, &PrequantumBundle::new(1, k)?, &grid)?;
    let dbar = sharp_from_bochner(&b, 1, true).dbar.expect("integrable");
    let kk = k as usize;
    let spec = lowest_eigenpairs_with(&dbar.matrix, 2 * kk, &EigenOptions { tol: 1e-9, want_vectors: false, ..Default::default() })?;
    Ok(spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, l)| (l - if j < kk { 0.0 } else { k as f64 }).abs())
        .fold(0.0, f64::max))
}

fn h_refinement(opts: &SuiteOptions) -> Result<(bool, String)> {
    let coarse = flat_error(opts.k, 16)?;
    let fine = flat_error(opts.k, 32)?;
    Ok((coarse / fine >= 3.0, format!("error {coarse:.3e} -> {fine:.3e}, ratio {:.3}", coarse / fine)))
}

fn solver_problem(opts: &SuiteOptions) -> Result<crate::sparse::CsrMatrix> {
    let grid = Grid::new(1, 24, 24)?;
    let m = family_at(&Preset::Heart.family(1), 0.5, &grid)?;
    Ok(assemble_bochner(&m, &PrequantumBundle::new(1, opts.k)?, &grid)?.matrix)
}

fn residual_certificates(opts: &SuiteOptions) -> Result<(bool, String)> {
    let a = solver_problem(opts)?;
    let eo = EigenOptions { method: MethodChoice::Lanczos, seed: opts.seed, ..Default::default() };
    let spec = lowest_eigenpairs_with(&a, 6, &eo)?;
    let vecs = spec.eigenvectors.as_ref().expect("vectors requested");
    let mut worst: f64 = 0.0;
    for (v, &l) in vecs.iter().zip(&spec.eigenvalues) {
        let av = a.apply(v);
        let r: f64 = av.iter().zip(v).map(|(x, y)| (x - y * l).norm_sqr()).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(r / nv);
    }
    Ok((worst <= eo.tol, format!("max recomputed residual {worst:.3e} (tol {:e})", eo.tol)))
}

fn dense_agreement(opts: &SuiteOptions) -> Result<(bool, String)> {
    let a = solver_problem(opts)?;
    let eo = EigenOptions { method: MethodChoice::Lanczos, seed: opts.seed, tol: 1e-7, want_vectors: false, ..Default::default() };
    let l = lowest_eigenpairs_with(&a, 6, &eo)?;
    let d = lowest_eigenpairs_with(&a, 6, &dense_opts(MethodChoice::Dense))?;
    let gap = max_gap(&l.eigenvalues, &d.eigenvalues);
    Ok((gap <= 1e-8, format!("max |Lanczos − dense| = {gap:.3e}")))
}

fn seed_reproducibility(opts: &SuiteOptions) -> Result<(bool, String)> {
    let a = solver_problem(opts)?;
    let run = |seed| {
        lowest_eigenpairs_with(&a, 6, &EigenOptions { method: MethodChoice::Lanczos, seed, tol: 1e-7, want_vectors: false, ..Default::default() })
    };
    let x = run(opts.seed)?;
    let y = run(opts.seed)?;
    let z = run(opts.seed.wrapping_add(1))?;
    let same = max_gap(&x.eigenvalues, &y.eigenvalues);
    let other = max_gap(&x.eigenvalues, &z.eigenvalues);
    Ok((same <= 1e-10 && other <= 1e-8, format!("same seed {same:.3e}, other seed {other:.3e}")))
}

fn cumulative_identity(_: &SuiteOptions) -> Result<(bool, String)> {
    let ok = (1..=4u64).all(|n| {
        (0..=20u64).all(|big| (0..=big).map(|p| binomial(p + n - 1, n - 1)).sum::<u128>() == binomial(big + n, n))
    });
    Ok((ok, "N ≤ 20, n ≤ 4".into()))
}

fn lambda_zero_iff_bs(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 6);
    let mut mismatches = 0;
    for t in 0..200 {
        let n = 1 + t % 2;
        let k = r.gen_range(1..=4u32);
        let set = bs_points(&PrequantumBundle::new(n, k)?);
        let b: Vec<f64> = if t % 2 == 0 {
            set.points[r.gen_range(0..set.len())].b.clone()
        } else {
            (0..n).map(|_| r.gen::<f64>()).collect()
        };
        if (lambda_k_b(k, &b).0 <= 1e-18) != set.contains(&b) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 200 points")))
}

fn level_index_inverse(_: &SuiteOptions) -> Result<(bool, String)> {
    let ok = (1..=3usize).all(|n| {
        (1..=4u64).all(|bs| {
            (0..=10u64).all(|big| {
                let j = (bs as u128 * binomial(big + n as u64, n as u64)) as u64;
                level_index_n(j, n, bs) == big && level_index_n(j + 1, n, bs) == big + 1
            })
        })
    });
    Ok((ok, "N ≤ 10, n ≤ 3, #B ≤ 4".into()))
}

fn fiber_operator_oracle(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut r = rng(opts, 7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let k = r.gen_range(1..=3u32);
        let b = [r.gen::<f64>()];
        let op = assemble_fiber_operator(&b, k, &FiberMetric::Euclidean, 256)?;
        let spec = lowest_eigenpairs_with(&op.matrix, 1, &dense_opts(MethodChoice::Auto))?;
        worst = worst.max((spec.eigenvalues[0] - lambda_k_b(k, &b).0).abs());
    }
    Ok((worst <= 1e-3, format!("max deviation {worst:.3e}")))
}

fn zero_cluster_count(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = Grid::new(1, 32, 32)?;
    let mut details = Vec::new();
    let mut ok = true;
    for p in [Preset::Flat, Preset::SemiflatX, Preset::Hessian] {
        for k in 1..=2u32 {
            let bundle = PrequantumBundle::new(1, k)?;
            let eo = EigenOptions { want_vectors: false, seed: opts.seed, ..Default::default() };
            let sw = sweep(&p.family(1), &bundle, &grid, &[0.4, 0.2, 0.1], k as usize + 1, &eo)?;
            let t = sw.zero_cluster_threshold();
            ok &= t.is_some();
            details.push(format!("{} k={k}: threshold {t:?}", p.name()));
        }
    }
    Ok((ok, details.join("; ")))
}

fn counting_monotone_additive(opts: &SuiteOptions) -> Result<(bool, String)> {
    let k = opts.k.max(1);
    let grid = Grid::new(1, 32, 32)?;
    let bundle = PrequantumBundle::new(1, k)?;
    let m = family_at(&Preset::Flat.family(1), 1.0 / TAU, &grid)?;
    let dbar = sharp_from_bochner(&assemble_bochner(&m, &bundle, &grid)?, 1, true).dbar.expect("integrable");
    let kk = k as usize;
    let spec = lowest_eigenpairs_with(&dbar.matrix, 3 * kk + 1, &EigenOptions { want_vectors: false, ..Default::default() })?;
    let kf = k as f64;
    let tol = 0.05 * kf;
    let edges = [-0.5 * kf, 0.5 * kf, 1.5 * kf];
    let c01 = counting_window(&spec, edges[0], edges[1], tol)?;
    let c12 = counting_window(&spec, edges[1], edges[2], tol)?;
    let c02 = counting_window(&spec, edges[0], edges[2], tol)?;
    let ok = c02 == c01 + c12 && c02 >= c01 && c02 >= c12 && c01 == kk;
    Ok((ok, format!("counts {c01} + {c12} = {c02}")))
}

fn localization_monotone(opts: &SuiteOptions) -> Result<(bool, String)> {
    // fine in x so the distance staircase stays below the tolerance, and s
    // small enough that the balls do not wrap around the base
    let grid = Grid::new(1, 8, 256)?;
    let bundle = PrequantumBundle::new(1, 1)?;
    let bs = bs_points(&bundle);
    let radii: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
    let mut table = Vec::new();
    let mut ok = true;
    for s in [0.05, 0.025, 0.0125] {
        let m = family_at(&Preset::Flat.family(1), s, &grid)?;
        let b = assemble_bochner(&m, &bundle, &grid)?;
        let eo = EigenOptions { seed: opts.seed, ..Default::default() };
        let spec = lowest_eigenpairs_with(&b.matrix, 1, &eo)?;
        let v = &spec.eigenvectors.as_ref().expect("vectors requested")[0];
        let dist = BaseDistance::new(&m, &bs);
        let row: Vec<f64> = radii.iter().map(|&c| localization_mass_with(v, 0, 1, c, &dist).fraction).collect();
        ok &= row.windows(2).all(|w| w[1] >= w[0]);
        table.push(row);
    }
    let mut worst_drop: f64 = 0.0;
    for w in table.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            worst_drop = worst_drop.max(a - b);
        }
    }
    ok &= worst_drop <= 0.02;
    Ok((ok, format!("largest decrease as s halves {worst_drop:.3e}")))
}

fn rayleigh_floor(opts: &SuiteOptions) -> Result<(bool, String)> {
    let grid = Grid::new(1, 64, 64)?;
    let region = base_region(&grid, &[0.15], &[0.35]);
    let mut details = Vec::new();
    let mut ok = true;
    for p in Preset::ALL {
        for k in 1..=2u32 {
            let m = family_at(&p.family(1), 0.5, &grid)?;
            let eo = EigenOptions { seed: opts.seed, want_vectors: false, ..Default::default() };
            let r = rayleigh_floor_probe(&m, &PrequantumBundle::new(1, k)?, &grid, &region, &eo)?;
            if !r.passed {
                ok = false;
                details.push(format!("{} k={k}: floor {:.4} < bound {:.4}", p.name(), r.floor, r.bound));
            }
        }
    }
    Ok((ok, if ok { "all presets above k² + K within 5%".into() } else { details.join("; ") }))
}

fn riemann_roch_count(opts: &SuiteOptions) -> Result<(bool, String)> {
    let mut details = Vec::new();
    let mut ok = true;
    for (n, k, nodes) in [(1, 1, 32), (1, 2, 32), (1, 3, 32), (2, 1, 8)] {
        let grid = Grid::new(n, nodes, nodes)?;
        let m = family_at(&Preset::Flat.family(n), 1.0 / TAU, &grid)?;
        let b = assemble_bochner(&m, &PrequantumBundle::new(n, k)?, &grid)?;
        let sharp = sharp_from_bochner(&b, n, true).sharp;
        let want = (k as usize).pow(n as u32);
        let eo = EigenOptions { seed: opts.seed, want_vectors: false, ..Default::default() };
        let spec = lowest_eigenpairs_with(&sharp.matrix, want + 1, &eo)?;
        let r = gap_report(&spec, sharp.kind, k, n, 0.0, 0.0)?;
        ok &= r.rr_verdict;
        details.push(format!("n={n} k={k}: {}/{}", r.cluster_size, r.rr_expected));
    }
    Ok((ok, details.join("; ")))
}

fn fstar_f(_: &SuiteOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in 1..=2 {
        let grid = Grid::new(n, 4, 4)?;
        for p in Preset::ALL {
            worst = worst.max(fstar_f_defect(&family_at(&p.family(n), 0.3, &grid)?));
        }
    }
    Ok((worst <= 1e-12, format!("max |F*F − g| = {worst:.3e}")))
}

fn circle_components(_: &SuiteOptions) -> Result<(bool, String)> {
    let grid = Grid::new(1, 16, 16)?;
    let m = family_at(&Preset::SemiflatX.family(1), 0.2, &grid)?;
    let r = ricci_field(&m)?;
    let exact = r.circle.mixed.iter().all(|&v| v == 0.0)
        && r.circle.vertical == 0.5
        && r.circle.horizontal.iter().zip(&r.ricci).zip(&m.g).all(|((h, ric), g)| *h == ric - g * 0.5);
    Ok((exact, format!("vertical {}, mixed {:?}", r.circle.vertical, r.circle.mixed)))
}

fn flat_ricci(_: &SuiteOptions) -> Result<(bool, String)> {
    let grid = Grid::new(1, 64, 64)?;
    let r = ricci_field(&family_at(&Preset::Flat.family(1), 0.2, &grid)?)?;
    let worst = r.ricci.iter().map(|m| m.amax()).fold(0.0, f64::max);
    Ok((worst <= 1e-8, format!("max |Ric| = {worst:.3e}")))
}

fn semiflat_claims(_: &SuiteOptions) -> Result<(bool, String)> {
    let grid = small_grid()?;
    let bad: Vec<&str> = Preset::ALL
        .iter()
        .filter(|p| {
            let fam = p.family(1);
            semiflatness_check(&fam, &grid, DEFAULT_SEMIFLAT_TOL).is_semiflat != fam.claims.semiflat
        })
        .map(|p| p.name())
        .collect();
    Ok((bad.is_empty(), if bad.is_empty() { "claims match samples".into() } else { bad.join(", ") }))
}
