use gqlab::analysis::{counting_window, localization_mass, sweep};
use gqlab::curvature::ricci_field;
use gqlab::eigen::{cluster, lowest_eigenpairs, lowest_eigenpairs_with, EigenOptions};
use gqlab::lattice::{assemble_bochner, assemble_fiber_operator, assemble_sharp, FiberMetric};
use gqlab::model::family_at;
use gqlab::{bs_points, Grid, Preset, PrequantumBundle};

const S0: f64 = 0.159154943091895;

fn flat_dbar(n: usize, k: u32, side: usize, m: usize) -> Vec<f64> {
    let grid = Grid::new(n, side, side).unwrap();
    let metric = family_at(&Preset::Flat.family(n), S0, &grid).unwrap();
    let op = assemble_sharp(&metric, &PrequantumBundle::new(n, k).unwrap(), &grid, true).unwrap().dbar.unwrap();
    lowest_eigenpairs(&op, m, 1e-8, 42).unwrap().eigenvalues
}

#[test]
fn bochner_ground_level_is_k() {
    let grid = Grid::new(1, 64, 64).unwrap();
    let metric = family_at(&Preset::Flat.family(1), S0, &grid).unwrap();
    let op = assemble_bochner(&metric, &PrequantumBundle::new(1, 1).unwrap(), &grid).unwrap();
    let l = lowest_eigenpairs(&op, 1, 1e-8, 42).unwrap().eigenvalues[0];
    assert!((l - 1.0).abs() < 0.02, "{l}");
}

#[test]
fn flat_dbar_levels_k2() {
    let got = flat_dbar(1, 2, 64, 6);
    for (l, t) in got.iter().zip([0.0, 0.0, 2.0, 2.0, 4.0, 4.0]) {
        let allowed = if t == 0.0 { 0.05 } else { 0.02 * t };
        assert!((l - t).abs() <= allowed, "{got:?}");
    }
}

#[test]
fn flat_dbar_clusters_k3() {
    let grid = Grid::new(1, 64, 64).unwrap();
    let metric = family_at(&Preset::Flat.family(1), S0, &grid).unwrap();
    let op = assemble_sharp(&metric, &PrequantumBundle::new(1, 3).unwrap(), &grid, true).unwrap().dbar.unwrap();
    let spec = lowest_eigenpairs(&op, 9, 1e-8, 42).unwrap();
    let rep = cluster(&spec, 1.5);
    assert_eq!(rep.multiplicities(), vec![3, 3, 3]);
    for (v, t) in rep.values().iter().zip([0.0, 3.0, 6.0]) {
        assert!((v - t).abs() < 0.06, "{v}");
    }
}

#[test]
fn flat_dbar_n2_ground_state() {
    let got = flat_dbar(2, 1, 16, 2);
    assert!(got[0].abs() < 0.1, "{got:?}");
}

#[test]
fn fiber_operator_examples() {
    let low = |k: u32, b: f64, nt: usize, m: usize| {
        let op = assemble_fiber_operator(&[b], k, &FiberMetric::Euclidean, nt).unwrap();
        lowest_eigenpairs(&op, m, 1e-10, 42).unwrap().eigenvalues
    };
    assert!(low(1, 0.0, 64, 1)[0].abs() < 1e-10);
    assert!((low(2, 0.3, 256, 1)[0] - 0.16).abs() < 1e-3);
    let half = low(1, 0.5, 256, 2);
    assert!((half[0] - 0.25).abs() < 1e-3 && (half[1] - 0.25).abs() < 1e-3, "{half:?}");
}

#[test]
fn flat_sweep_is_s_independent() {
    let grid = Grid::new(1, 64, 64).unwrap();
    let bundle = PrequantumBundle::new(1, 2).unwrap();
    let opts = EigenOptions { tol: 1e-8, want_vectors: false, ..Default::default() };
    let r = sweep(&Preset::Flat.family(1), &bundle, &grid, &[0.4, 0.2, 0.1], 6, &opts).unwrap();
    assert_eq!(r.targets, vec![0.0, 0.0, 2.0, 2.0, 4.0, 4.0]);
    for p in &r.points {
        for (e, t) in p.errors.iter().zip(&r.targets) {
            assert!(*e <= if *t == 0.0 { 0.05 } else { 0.02 * t }, "s={} {:?}", p.s, p.errors);
        }
    }
    assert!(r.warnings.is_empty());
}

#[test]
fn counting_windows_flat_k2() {
    let grid = Grid::new(1, 64, 64).unwrap();
    let metric = family_at(&Preset::Flat.family(1), S0, &grid).unwrap();
    let op = assemble_sharp(&metric, &PrequantumBundle::new(1, 2).unwrap(), &grid, true).unwrap().dbar.unwrap();
    let spec = lowest_eigenpairs(&op, 6, 1e-8, 42).unwrap();
    assert_eq!(counting_window(&spec, -0.5, 0.5, 1e-3).unwrap(), 2);
    assert_eq!(counting_window(&spec, 1.0, 3.0, 1e-3).unwrap(), 2);
    assert_eq!(counting_window(&spec, 0.5, 0.9, 1e-3).unwrap(), 0);
}

#[test]
fn ground_state_concentrates_near_bs_fiber() {
    let grid = Grid::new(1, 64, 64).unwrap();
    let bundle = PrequantumBundle::new(1, 1).unwrap();
    let metric = family_at(&Preset::Flat.family(1), 0.05, &grid).unwrap();
    let sharp = assemble_sharp(&metric, &bundle, &grid, false).unwrap().sharp;
    let spec = lowest_eigenpairs_with(&sharp.matrix, 1, &EigenOptions { tol: 1e-8, ..Default::default() }).unwrap();
    let v = &spec.eigenvectors.unwrap()[0];
    let r = localization_mass(v, 0.05, 3.0, &metric, &bs_points(&bundle));
    assert!(r.fraction >= 0.9, "{}", r.fraction);
}

#[test]
fn theta_dependent_curvature_is_unbounded() {
    let fam = Preset::NonSemiflatTheta.family(1);
    let grid = Grid::new(1, 64, 64).unwrap();
    let k = |s: f64| ricci_field(&family_at(&fam, s, &grid).unwrap()).unwrap().kappa_hat;
    let (coarse, fine, finest) = (k(0.2), k(0.05), k(0.0125));
    assert!(fine < coarse);
    assert!(finest < -10.0, "{finest}");
}
