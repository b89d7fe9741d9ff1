//! Prequantum line bundle over the model torus and its Bohr-Sommerfeld points.
//!
//! In the trivialization used throughout, `∇ = d − i ξ_i dθ^i` with
//! `ξ_i = x_i + a_i/2π`, where `a_i` is the holonomy offset along the i-th
//! fiber generator over the origin.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrequantumBundle {
    pub n: usize,
    pub k: u32,
    /// Holonomy offsets in `[0, 2π)`.
    pub offsets: Vec<f64>,
}

impl PrequantumBundle {
    pub fn new(n: usize, k: u32) -> Result<Self> {
        Self::with_offsets(n, k, vec![0.0; n])
    }

    pub fn with_offsets(n: usize, k: u32, offsets: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if k == 0 {
            return Err(Error::Config("level k must be at least 1".into()));
        }
        if offsets.len() != n {
            return Err(Error::Config(format!("{} holonomy offsets for n = {n}", offsets.len())));
        }
        if offsets.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("holonomy offsets must be finite".into()));
        }
        let offsets = offsets.into_iter().map(|a| a.rem_euclid(TAU)).collect();
        Ok(Self { n, k, offsets })
    }

    /// Same bundle data at another level; `k = 0` is allowed here and gives
    /// the trivial connection used by the uncharged Laplacian.
    pub(crate) fn level(&self) -> f64 {
        self.k as f64
    }

    /// Shifted action coordinate `ξ_i = x_i + a_i/2π`.
    pub fn xi(&self, i: usize, x: f64) -> f64 {
        x + self.offsets[i] / TAU
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSPoint {
    pub b: Vec<f64>,
    pub strict_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSPointSet {
    pub k: u32,
    pub points: Vec<BSPoint>,
}

impl BSPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether `b` coincides with a listed point modulo `Z^n` (to 1e-9).
    pub fn contains(&self, b: &[f64]) -> bool {
        self.points.iter().any(|p| torus_gap(&p.b, b) < 1e-9)
    }
}

/// Sup-norm distance on `R^n/Z^n`.
pub fn torus_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| {
            let d = (u - v).rem_euclid(1.0);
            d.min(1.0 - d)
        })
        .fold(0.0, f64::max)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn canonical(v: f64) -> f64 {
    let mut v = v.rem_euclid(1.0);
    let r = v.round();
    if (v - r).abs() < SNAP {
        v = r;
    }
    if v >= 1.0 {
        v -= 1.0;
    }
    v
}

/// All level-k Bohr-Sommerfeld points in `[0,1)^n`, lexicographically ordered.
pub fn bs_points(bundle: &PrequantumBundle) -> BSPointSet {
    let k = bundle.k as u64;
    let n = bundle.n;
    let count = (bundle.k as usize).pow(n as u32);
    let mut points = Vec::with_capacity(count);
    let mut idx = vec![0u64; n];
    for _ in 0..count {
        let b: Vec<f64> = (0..n)
            .map(|i| canonical(idx[i] as f64 / k as f64 - bundle.offsets[i] / TAU))
            .collect();
        // k'·j/k ∈ Z for all i  ⇔  (k / gcd(j, k)) | k'
        let strict = idx.iter().fold(1u64, |acc, &j| {
            let need = k / gcd(j, k);
            acc / gcd(acc, need) * need
        });
        points.push(BSPoint { b, strict_level: strict as u32 });
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < k {
                break;
            }
            idx[i] = 0;
        }
    }
    points.sort_by(|p, q| p.b.partial_cmp(&q.b).expect("finite coordinates"));
    BSPointSet { k: bundle.k, points }
}

/// Holonomy of `(L^k, ∇_k)` around the fiber generators over `b`:
/// `exp(−i k (2π b_i + a_i))`.
pub fn fiber_holonomy(bundle: &PrequantumBundle, b: &[f64]) -> Vec<Complex64> {
    let k = bundle.level();
    b.iter()
        .zip(&bundle.offsets)
        .map(|(&bi, &ai)| Complex64::from_polar(1.0, -k * (TAU * bi + ai)))
        .collect()
}

/// Whether every holonomy phase equals 1 within `tol`.
pub fn holonomy_trivial(phases: &[Complex64], tol: f64) -> bool {
    phases.iter().all(|z| (z - 1.0).norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels(set: &BSPointSet) -> Vec<u32> {
        set.points.iter().map(|p| p.strict_level).collect()
    }

    #[test]
    fn enumeration_examples() {
        let set = bs_points(&PrequantumBundle::new(1, 3).unwrap());
        let bs: Vec<f64> = set.points.iter().map(|p| p.b[0]).collect();
        assert_eq!(bs, vec![0.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(levels(&set), vec![1, 3, 3]);

        let set = bs_points(&PrequantumBundle::new(1, 1).unwrap());
        assert_eq!(set.points, vec![BSPoint { b: vec![0.0], strict_level: 1 }]);

        let set = bs_points(&PrequantumBundle::new(2, 2).unwrap());
        let bs: Vec<Vec<f64>> = set.points.iter().map(|p| p.b.clone()).collect();
        assert_eq!(bs, vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.5, 0.0], vec![0.5, 0.5]]);
        assert_eq!(levels(&set), vec![1, 2, 2, 2]);
    }

    #[test]
    fn strict_level_with_mixed_denominators() {
        let set = bs_points(&PrequantumBundle::new(2, 6).unwrap());
        let p = set.points.iter().find(|p| torus_gap(&p.b, &[0.5, 1.0 / 3.0]) < 1e-12).unwrap();
        assert_eq!(p.strict_level, 6);
        let p = set.points.iter().find(|p| torus_gap(&p.b, &[0.5, 0.0]) < 1e-12).unwrap();
        assert_eq!(p.strict_level, 2);
    }

    #[test]
    fn offsets_shift_the_lattice() {
        let bundle = PrequantumBundle::with_offsets(1, 2, vec![TAU * 0.1]).unwrap();
        let set = bs_points(&bundle);
        assert!((set.points[0].b[0] - 0.4).abs() < 1e-12);
        assert!((set.points[1].b[0] - 0.9).abs() < 1e-12);
        for p in &set.points {
            assert!(holonomy_trivial(&fiber_holonomy(&bundle, &p.b), 1e-9));
        }
    }

    #[test]
    fn seam_points_snap_to_zero() {
        let bundle = PrequantumBundle::with_offsets(1, 1, vec![TAU * (1.0 - 1e-14)]).unwrap();
        let set = bs_points(&bundle);
        assert_eq!(set.points[0].b[0], 0.0);
    }

    #[test]
    fn holonomy_examples() {
        let bundle = PrequantumBundle::new(1, 2).unwrap();
        assert!((fiber_holonomy(&bundle, &[0.5])[0] - 1.0).norm() < 1e-12);
        assert!((fiber_holonomy(&bundle, &[0.25])[0] + 1.0).norm() < 1e-12);
        let bundle = PrequantumBundle::new(1, 1).unwrap();
        assert_eq!(fiber_holonomy(&bundle, &[0.0])[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_bad_bundles() {
        assert!(PrequantumBundle::new(1, 0).is_err());
        assert!(PrequantumBundle::with_offsets(2, 1, vec![0.0]).is_err());
    }
}
