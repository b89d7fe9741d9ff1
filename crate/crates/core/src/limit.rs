//! The Gaussian limit model.
//!
//! Eigenvalues are reported in the half convention: the limit operator is
//! `½Δ^k` on `(R^n, e^{−k|y|²}dy)`, with eigenvalues `k·N` and multiplicity
//! `#B_k·C(N+n−1, n−1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C(n, r)` exactly.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLevel {
    #[serde(rename = "N")]
    pub level: u64,
    pub eigenvalue: f64,
    pub multiplicity: u128,
    /// Number of eigenvalues `≤ eigenvalue`, with multiplicity.
    pub cumulative: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSpectrum {
    pub k: u32,
    pub n: usize,
    pub bs_count: u64,
    pub levels: Vec<LimitLevel>,
}

impl LimitSpectrum {
    /// Eigenvalues in `(a, b]`, with multiplicity. Levels beyond `N_max` are
    /// not counted.
    pub fn count_in(&self, a: f64, b: f64) -> u128 {
        self.levels
            .iter()
            .filter(|l| l.eigenvalue > a && l.eigenvalue <= b)
            .map(|l| l.multiplicity)
            .sum()
    }

    /// The first `m` eigenvalues, repeated by multiplicity.
    pub fn expanded(&self, m: usize) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.eigenvalue, l.multiplicity.min(m as u128) as usize))
            .take(m)
            .collect()
    }
}

pub fn gaussian_spectrum(k: u32, n: usize, bs_count: u64, n_max: u64) -> Result<LimitSpectrum> {
    if k == 0 || n == 0 || bs_count == 0 {
        return Err(Error::Config("k, n and bs_count must be positive".into()));
    }
    let nn = n as u64;
    let levels = (0..=n_max)
        .map(|level| LimitLevel {
            level,
            eigenvalue: k as f64 * level as f64,
            multiplicity: bs_count as u128 * binomial(level + nn - 1, nn - 1),
            cumulative: bs_count as u128 * binomial(level + nn, nn),
        })
        .collect();
    Ok(LimitSpectrum { k, n, bs_count, levels })
}

/// The unique `N` with `bs·C(N−1+n, n) < j ≤ bs·C(N+n, n)`.
pub fn level_index_n(j: u64, n: usize, bs_count: u64) -> u64 {
    assert!(j >= 1, "eigenvalue index starts at 1");
    let nn = n as u64;
    let mut level = 0;
    while (j as u128) > bs_count as u128 * binomial(level + nn, nn) {
        level += 1;
    }
    level
}

/// `λ(k, b) = min_m Σ (m_i + k b_i)²` and a minimizing `m`.
pub fn lambda_k_b(k: u32, b: &[f64]) -> (f64, Vec<i64>) {
    let k = k as f64;
    let mut total = 0.0;
    let mut arg = Vec::with_capacity(b.len());
    for &bi in b {
        let t = -k * bi;
        let (lo, hi) = (t.floor() as i64 - 1, t.ceil() as i64 + 1);
        let (best_m, best) = (lo..=hi)
            .map(|m| (m, (m as f64 + k * bi).powi(2)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty range");
        total += best;
        arg.push(best_m);
    }
    (total, arg)
}

/// One-variable polynomial, ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn leading(&self) -> f64 {
        self.0[self.degree()]
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect::<Vec<_>>().max_len1())
    }

    /// `p_N` with `(d/dy)^N e^{−j y²} = p_N(y) e^{−j y²}`.
    pub fn hermite(j: f64, degree: usize) -> Poly {
        let mut p = Poly(vec![1.0]);
        for _ in 0..degree {
            // p' − 2jy·p
            let d = p.derivative();
            let mut next = vec![0.0; p.0.len() + 1];
            for (i, &c) in d.0.iter().enumerate() {
                next[i] += c;
            }
            for (i, &c) in p.0.iter().enumerate() {
                next[i + 1] -= 2.0 * j * c;
            }
            p = Poly(next);
        }
        p
    }
}

trait MaxLen1 {
    fn max_len1(self) -> Self;
}

impl MaxLen1 for Vec<f64> {
    fn max_len1(mut self) -> Self {
        if self.is_empty() {
            self.push(0.0);
        }
        self
    }
}

/// `φ_N(y) = e^{j|y|²}(∂/∂y)^N e^{−j|y|²}` as a product of one-variable
/// polynomials, with `j = k·l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEigenfunction {
    pub k: u32,
    pub l: u32,
    pub multi_index: Vec<usize>,
    pub factors: Vec<Poly>,
}

impl LimitEigenfunction {
    pub fn new(k: u32, l: u32, multi_index: &[usize]) -> Self {
        let j = (k * l) as f64;
        let factors = multi_index.iter().map(|&d| Poly::hermite(j, d)).collect();
        Self { k, l, multi_index: multi_index.to_vec(), factors }
    }

    pub fn j(&self) -> f64 {
        (self.k * self.l) as f64
    }

    /// Total degree `d = |N|`.
    pub fn d(&self) -> usize {
        self.multi_index.iter().sum()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.factors.iter().zip(y).map(|(p, &yi)| p.eval(yi)).product()
    }

    /// Expanded coefficients keyed by exponent vectors.
    pub fn expand(&self) -> MultiPoly {
        let n = self.factors.len();
        let mut out = MultiPoly::constant(n, 1.0);
        for (i, p) in self.factors.iter().enumerate() {
            out = out.mul_univariate(i, p);
        }
        out
    }
}

/// Sparse multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPoly {
    pub n: usize,
    pub terms: BTreeMap<Vec<usize>, f64>,
}

impl MultiPoly {
    pub fn constant(n: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; n], c);
        Self { n, terms }
    }

    fn add_term(&mut self, exp: Vec<usize>, c: f64) {
        *self.terms.entry(exp).or_insert(0.0) += c;
    }

    pub fn mul_univariate(&self, var: usize, p: &Poly) -> Self {
        let mut out = Self { n: self.n, terms: BTreeMap::new() };
        for (exp, &c) in &self.terms {
            for (d, &pc) in p.0.iter().enumerate() {
                if pc != 0.0 {
                    let mut e = exp.clone();
                    e[var] += d;
                    out.add_term(e, c * pc);
                }
            }
        }
        out
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self { n: self.n, terms: BTreeMap::new() };
        for (exp, &c) in &self.terms {
            if exp[var] > 0 {
                let mut e = exp.clone();
                e[var] -= 1;
                out.add_term(e, c * exp[var] as f64);
            }
        }
        out
    }

    /// `y_var · self`.
    pub fn times_var(&self, var: usize) -> Self {
        let mut out = Self { n: self.n, terms: BTreeMap::new() };
        for (exp, &c) in &self.terms {
            let mut e = exp.clone();
            e[var] += 1;
            out.add_term(e, c);
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (exp, &c) in &other.terms {
            self.add_term(exp.clone(), a * c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

/// `Δ^k φ = Σ_i (−∂²φ/∂y_i² + 2k y_i ∂φ/∂y_i)` in coefficient arithmetic.
pub fn gaussian_laplacian(k: f64, p: &MultiPoly) -> MultiPoly {
    let mut out = MultiPoly { n: p.n, terms: BTreeMap::new() };
    for i in 0..p.n {
        let d1 = p.partial(i);
        out.axpy(-1.0, &d1.partial(i));
        out.axpy(2.0 * k, &d1.times_var(i));
    }
    out
}

/// All multi-indices in `n` variables with total degree `≤ d_max`.
pub fn multi_indices(n: usize, d_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                let used: usize = prefix.iter().sum();
                (0..=d_max - used).map(move |d| {
                    let mut v = prefix.clone();
                    v.push(d);
                    v
                })
            })
            .collect();
    }
    out
}

/// Max over `|N| ≤ d_max` of the largest coefficient of `Δ^k φ_N − 2k|N|φ_N`,
/// relative to the largest coefficient of `φ_N`.
pub fn verify_hermite_eigen(k: u32, n: usize, d_max: usize) -> f64 {
    multi_indices(n, d_max)
        .into_iter()
        .map(|idx| {
            let phi = LimitEigenfunction::new(k, 1, &idx);
            let p = phi.expand();
            let mut r = gaussian_laplacian(k as f64, &p);
            r.axpy(-2.0 * k as f64 * phi.d() as f64, &p);
            r.max_abs() / p.max_abs()
        })
        .fold(0.0, f64::max)
}

/// Truncated box `[−R, R]^n` sampled with `points` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub half_width: f64,
    pub points: usize,
}

impl BoxGrid {
    /// `R = 7/√j` with 512 nodes per axis for `n = 1`, 320 for `n = 2`.
    pub fn default_for(j: f64, n: usize) -> Self {
        Self { half_width: 7.0 / j.sqrt(), points: if n == 1 { 512 } else { 320 } }
    }
}

/// Applies `−Σ∂² + j²(1 + |y|²) − j²` by centered differences to
/// `f = e^{−j|y|²/2} φ_N(y)` and returns the largest interior residual
/// `|Lf − (jn + 2j|N|) f|` relative to `max |(jn + 2j|N|) f|`.
pub fn verify_limit_metric_eigenfunction(k: u32, l: u32, multi_index: &[usize], grid: BoxGrid) -> Result<f64> {
    let n = multi_index.len();
    if n == 0 || k == 0 || l == 0 {
        return Err(Error::Config("k, l and the multi-index length must be positive".into()));
    }
    if grid.points < 16 {
        return Err(Error::Resolution(format!("{} nodes per axis", grid.points)));
    }
    let phi = LimitEigenfunction::new(k, l, multi_index);
    let j = phi.j();
    if grid.half_width < 4.0 / j.sqrt() {
        return Err(Error::Truncation(format!(
            "box half-width {} below 4/√j = {}",
            grid.half_width,
            4.0 / j.sqrt()
        )));
    }
    let p = grid.points;
    let h = 2.0 * grid.half_width / (p - 1) as f64;
    let total = p.pow(n as u32);
    let coord = |i: usize| -grid.half_width + i as f64 * h;
    let unravel = |mut site: usize| {
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = site % p;
            site /= p;
        }
        idx
    };
    let f: Vec<f64> = (0..total)
        .map(|site| {
            let y: Vec<f64> = unravel(site).into_iter().map(coord).collect();
            let r2: f64 = y.iter().map(|v| v * v).sum();
            (-0.5 * j * r2).exp() * phi.eval(&y)
        })
        .collect();
    let fmax = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let boundary = (0..total)
        .filter(|&site| unravel(site).iter().any(|&i| i == 0 || i == p - 1))
        .map(|site| f[site].abs())
        .fold(0.0, f64::max);
    if boundary > 1e-6 * fmax {
        return Err(Error::Truncation(format!(
            "profile is {:.3e} of its maximum on the box boundary",
            boundary / fmax
        )));
    }
    let lambda = j * n as f64 + 2.0 * j * phi.d() as f64;
    let strides: Vec<usize> = (0..n).map(|a| p.pow((n - 1 - a) as u32)).collect();
    let mut worst: f64 = 0.0;
    for site in 0..total {
        let idx = unravel(site);
        if idx.iter().any(|&i| i == 0 || i == p - 1) {
            continue;
        }
        let y: Vec<f64> = idx.iter().map(|&i| coord(i)).collect();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let mut lf = (j * j * (1.0 + r2) - j * j) * f[site];
        for s in &strides {
            lf -= (f[site + s] - 2.0 * f[site] + f[site - s]) / (h * h);
        }
        worst = worst.max((lf - lambda * f[site]).abs());
    }
    Ok(worst / (lambda * fmax))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_examples() {
        let s = gaussian_spectrum(1, 1, 1, 3).unwrap();
        let rows: Vec<(f64, u128, u128)> = s.levels.iter().map(|l| (l.eigenvalue, l.multiplicity, l.cumulative)).collect();
        assert_eq!(rows, vec![(0.0, 1, 1), (1.0, 1, 2), (2.0, 1, 3), (3.0, 1, 4)]);
        let s = gaussian_spectrum(2, 2, 4, 1).unwrap();
        assert_eq!(s.levels[1].eigenvalue, 2.0);
        assert_eq!(s.levels[1].multiplicity, 8);
        for n in 1..=4 {
            assert_eq!(gaussian_spectrum(3, n, 7, 0).unwrap().levels[0].multiplicity, 7);
        }
    }

    #[test]
    fn level_index_examples() {
        let got: Vec<u64> = (1..=4).map(|j| level_index_n(j, 1, 2)).collect();
        assert_eq!(got, vec![0, 0, 1, 1]);
        for n in 1..4 {
            for bs in 1..5 {
                assert_eq!(level_index_n(1, n, bs), 0);
            }
        }
        assert_eq!(level_index_n(2, 2, 1), 1);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_k_b(2, &[0.5]), (0.0, vec![-1]));
        let (v, m) = lambda_k_b(2, &[0.3]);
        assert!((v - 0.16).abs() < 1e-15);
        assert_eq!(m, vec![-1]);
        let (v, _) = lambda_k_b(1, &[0.4, 0.5]);
        assert!((v - 0.16 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hermite_polynomials() {
        let k = 3.0;
        let p2 = Poly::hermite(k, 2);
        // 4k²y² − 2k
        assert_eq!(p2.0, vec![-2.0 * k, 0.0, 4.0 * k * k]);
        let phi = LimitEigenfunction::new(2, 1, &[3, 1]);
        assert_eq!(phi.d(), 4);
        for (f, &d) in phi.factors.iter().zip(&phi.multi_index) {
            assert_eq!(f.degree(), d);
            assert_eq!(f.leading(), (-4.0f64).powi(d as i32));
        }
    }

    #[test]
    fn hermite_eigen_examples() {
        let one = MultiPoly::constant(1, 1.0);
        assert_eq!(gaussian_laplacian(2.0, &one).max_abs(), 0.0);
        let y = one.times_var(0);
        let ly = gaussian_laplacian(2.0, &y);
        assert_eq!(ly.terms.get(&vec![1]), Some(&4.0));
        assert_eq!(verify_hermite_eigen(1, 1, 2), 0.0);
        assert!(verify_hermite_eigen(3, 2, 6) <= 1e-14);
    }

    #[test]
    fn limit_metric_examples() {
        let r = verify_limit_metric_eigenfunction(1, 1, &[0], BoxGrid::default_for(1.0, 1)).unwrap();
        assert!(r <= 1e-3, "{r}");
        let r = verify_limit_metric_eigenfunction(2, 1, &[1], BoxGrid::default_for(2.0, 1)).unwrap();
        assert!(r <= 1e-3, "{r}");
        let small = BoxGrid { half_width: 3.0, points: 128 };
        assert!(matches!(verify_limit_metric_eigenfunction(1, 1, &[0], small), Err(Error::Truncation(_))));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(24, 4), 10626);
        assert_eq!(binomial(3, 4), 0);
    }
}
