use std::f64::consts::TAU;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use gqlab::analysis::{counting_window, localization_mass_with, BaseDistance};
use gqlab::bundle::holonomy_trivial;
use gqlab::curvature::{relative_min_eigenvalue, ricci_field};
use gqlab::eigen::{cluster, lowest_eigenpairs, SpectrumResult};
use gqlab::lattice::{assemble_bochner, assemble_sharp, GaugeLattice};
use gqlab::limit::{binomial, gaussian_spectrum, lambda_k_b, level_index_n, Poly};
use gqlab::model::{family_at, metric_from_a, CMatrix};
use gqlab::{bs_points, fiber_holonomy, Grid, Preset, PrequantumBundle};

fn spd(n: usize, entries: &[f64], diag: &[f64]) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |i, j| if i > j { entries[i * n + j] } else if i == j { diag[i] } else { 0.0 });
    &l * l.transpose()
}

fn structure(n: usize) -> impl Strategy<Value = CMatrix> {
    (
        prop::collection::vec(-1.0..1.0f64, n * n),
        prop::collection::vec(-1.0..1.0f64, n * n),
        prop::collection::vec(0.3..2.0f64, n),
    )
        .prop_map(move |(p, l, d)| {
            let q = spd(n, &l, &d);
            CMatrix::from_fn(n, n, |i, j| Complex64::new(0.5 * (p[i * n + j] + p[j * n + i]), q[(i, j)]))
        })
}

fn dense_spectrum(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_is_spd_with_unit_determinant(a in (1usize..=3).prop_flat_map(structure)) {
        let n = a.nrows();
        let g = metric_from_a(&a).unwrap();
        prop_assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        let eig = g.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > 1e-12));
        prop_assert!((g.determinant() - 1.0).abs() < 1e-10);
        let p = a.map(|z| z.re);
        let q = a.map(|z| z.im);
        let qi = q.clone().try_inverse().unwrap();
        let mut inv = DMatrix::zeros(2 * n, 2 * n);
        inv.view_mut((0, 0), (n, n)).copy_from(&qi);
        inv.view_mut((0, n), (n, n)).copy_from(&(&qi * &p));
        inv.view_mut((n, 0), (n, n)).copy_from(&(&p * &qi));
        inv.view_mut((n, n), (n, n)).copy_from(&(&q + &p * &qi * &p));
        prop_assert!((&g * inv - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-9);
    }

    #[test]
    fn purely_imaginary_structure_is_block_diagonal(a in (1usize..=3).prop_flat_map(structure)) {
        let n = a.nrows();
        let q = a.map(|z| z.im);
        let g = metric_from_a(&a.map(|z| Complex64::new(0.0, z.im))).unwrap();
        prop_assert!((g.view((0, 0), (n, n)) - &q).amax() < 1e-12);
        prop_assert!((g.view((n, n), (n, n)) - q.try_inverse().unwrap()).amax() < 1e-9);
        prop_assert!(g.view((0, n), (n, n)).amax() == 0.0);
    }

    #[test]
    fn linear_presets_are_homogeneous(idx in 0usize..5, s in 0.01..2.0f64, x in 0.0..1.0f64, t in 0.0..TAU) {
        let fam = Preset::ALL[idx].family(1);
        let want = fam.leading_term(&[x], &[t]) * Complex64::new(s, 0.0);
        prop_assert!((fam.evaluate(s, &[x], &[t]) - want).camax() == 0.0);
    }

    #[test]
    fn bs_count_and_holonomy(n in 1usize..=2, k in 1u32..=5, off in prop::collection::vec(0.0..TAU, 2), probe in prop::collection::vec(0.0..1.0f64, 2)) {
        let bundle = PrequantumBundle::with_offsets(n, k, off[..n].to_vec()).unwrap();
        let set = bs_points(&bundle);
        prop_assert_eq!(set.len(), (k as usize).pow(n as u32));
        for (i, p) in set.points.iter().enumerate() {
            prop_assert_eq!(k % p.strict_level, 0);
            prop_assert!(holonomy_trivial(&fiber_holonomy(&bundle, &p.b), 1e-9));
            for q in &set.points[i + 1..] {
                prop_assert!(gqlab::bundle::torus_gap(&p.b, &q.b) > 1e-9);
            }
        }
        let b = &probe[..n];
        prop_assert_eq!(holonomy_trivial(&fiber_holonomy(&bundle, b), 1e-9), set.contains(b));
    }

    #[test]
    fn bs_levels_grow_along_multiples(k in 1u32..=4, mult in 1u32..=4) {
        let small = bs_points(&PrequantumBundle::new(1, k).unwrap());
        let big = bs_points(&PrequantumBundle::new(1, k * mult).unwrap());
        for p in &small.points {
            prop_assert!(big.contains(&p.b));
        }
    }

    #[test]
    fn lambda_vanishes_exactly_on_bs_points(k in 1u32..=5, j in 0u32..5, eps in 1e-3..0.5f64) {
        let b = (j % k) as f64 / k as f64;
        prop_assert!(lambda_k_b(k, &[b]).0 < 1e-24);
        let off = b + eps / k as f64;
        let bundle = PrequantumBundle::new(1, k).unwrap();
        prop_assert_eq!(lambda_k_b(k, &[off]).0 < 1e-20, bs_points(&bundle).contains(&[off]));
    }

    #[test]
    fn cumulative_identity_and_level_index(n in 1usize..=4, bs in 1u64..=9, level in 0u64..=20) {
        let spec = gaussian_spectrum(2, n, bs, 20).unwrap();
        let row = &spec.levels[level as usize];
        let sum: u128 = (0..=level).map(|p| binomial(p + n as u64 - 1, n as u64 - 1)).sum();
        prop_assert_eq!(sum, binomial(level + n as u64, n as u64));
        prop_assert_eq!(row.cumulative, bs as u128 * sum);
        let j = row.cumulative as u64;
        prop_assert_eq!(level_index_n(j, n, bs), level);
        prop_assert_eq!(level_index_n(j + 1, n, bs), level + 1);
    }

    #[test]
    fn hermite_degree_and_leading_coefficient(j in 1u32..=6, d in 0usize..=8) {
        let p = Poly::hermite(j as f64, d);
        prop_assert_eq!(p.degree(), d);
        let want = (-2.0 * j as f64).powi(d as i32);
        prop_assert!((p.leading() - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn counting_is_monotone_and_additive(mut vals in prop::collection::vec(0.0..10.0f64, 4..30), cuts in prop::collection::vec(-1.0..9.0f64, 3)) {
        vals.push(20.0);
        let spec = SpectrumResult::from_values(vals);
        let mut c = cuts.clone();
        c.sort_by(f64::total_cmp);
        let (a, m, b) = (c[0], c[1], c[2]);
        let tol = 1e-9;
        if let (Ok(whole), Ok(left), Ok(right)) =
            (counting_window(&spec, a, b, tol), counting_window(&spec, a, m, tol), counting_window(&spec, m, b, tol))
        {
            if m > a && b > m {
                prop_assert_eq!(whole, left + right);
                prop_assert!(left <= whole && right <= whole);
            }
        }
    }

    #[test]
    fn clusters_partition_the_spectrum(vals in prop::collection::vec(0.0..10.0f64, 1..30), thr in 0.01..1.0f64) {
        let spec = SpectrumResult::from_values(vals);
        let rep = cluster(&spec, thr);
        prop_assert_eq!(rep.multiplicities().iter().sum::<usize>(), spec.len());
        for c in &rep.clusters {
            let v: Vec<f64> = c.members.iter().map(|&i| spec.eigenvalues[i]).collect();
            for w in v.windows(2) {
                prop_assert!(w[1] - w[0] < thr);
            }
        }
        for w in rep.clusters.windows(2) {
            let last = spec.eigenvalues[*w[0].members.last().unwrap()];
            let first = spec.eigenvalues[w[1].members[0]];
            prop_assert!(first - last >= thr);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lattice_operator_is_hermitian_psd_and_gauge_invariant(
        idx in 0usize..5,
        k in 1u32..=3,
        nt in 4usize..=7,
        nx in 4usize..=7,
        s in 0.1..1.0f64,
        phases in prop::collection::vec(0.0..TAU, 49),
    ) {
        let grid = Grid::new(1, nt, nx).unwrap();
        let bundle = PrequantumBundle::new(1, k).unwrap();
        let metric = family_at(&Preset::ALL[idx].family(1), s, &grid).unwrap();
        let op = assemble_bochner(&metric, &bundle, &grid).unwrap();
        let dense = op.matrix.to_dense();
        prop_assert!((&dense - dense.adjoint()).camax() <= 1e-13 * dense.camax());
        let spec = dense_spectrum(&dense);
        prop_assert!(spec[0] >= -1e-10);
        let chi = &phases[..grid.num_sites()];
        let gauged = dense_spectrum(&op.gauge_conjugate(chi).matrix.to_dense());
        for (a, b) in spec.iter().zip(&gauged) {
            prop_assert!((a - b).abs() <= 1e-10 * spec.last().unwrap().max(1.0));
        }
        let lattice = GaugeLattice::new(&grid, &bundle).unwrap();
        prop_assert!(lattice.chern_numbers().iter().all(|&c| (c - k as f64).abs() <= 1e-10));
    }

    #[test]
    fn ricci_minimum_bounds_every_site(s in 0.05..0.5f64, idx in 0usize..3) {
        let presets = [Preset::Flat, Preset::SemiflatX, Preset::NonSemiflatTheta];
        let grid = Grid::new(1, 16, 16).unwrap();
        let metric = family_at(&presets[idx].family(1), s, &grid).unwrap();
        let r = ricci_field(&metric).unwrap();
        for site in 0..grid.num_sites() {
            let ric = &r.ricci[site];
            prop_assert!((ric - ric.transpose()).amax() <= 1e-12 * ric.amax().max(1.0));
            prop_assert!(r.kappa_hat <= relative_min_eigenvalue(ric, &metric.g[site]).unwrap() + 1e-12);
        }
    }
}

fn ground_state() -> &'static (BaseDistance, Vec<Complex64>) {
    static CELL: OnceLock<(BaseDistance, Vec<Complex64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = Grid::new(1, 16, 64).unwrap();
        let bundle = PrequantumBundle::new(1, 1).unwrap();
        let metric = family_at(&Preset::SemiflatX.family(1), 0.1, &grid).unwrap();
        let sharp = assemble_sharp(&metric, &bundle, &grid, false).unwrap().sharp;
        let spec = lowest_eigenpairs(&sharp, 1, 1e-8, 42).unwrap();
        (BaseDistance::new(&metric, &bs_points(&bundle)), spec.eigenvectors.unwrap().remove(0))
    })
}

proptest! {
    #[test]
    fn localization_mass_is_a_monotone_fraction(c1 in 0.0..3.0f64, c2 in 0.0..3.0f64) {
        let (dist, v) = ground_state();
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let a = localization_mass_with(v, 0, 1, lo, dist).fraction;
        let b = localization_mass_with(v, 0, 1, hi, dist).fraction;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a) && (0.0..=1.0 + 1e-12).contains(&b));
        prop_assert!(a <= b);
    }
}
