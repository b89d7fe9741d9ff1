//! Uniform periodic tensor-product grids on the model torus.
//!
//! Axes are ordered `θ^1..θ^n, x_1..x_n`; site indices are row-major with the
//! last axis fastest. Angle axes have period 2π, action axes period 1.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    /// Half-dimension of the torus.
    pub n: usize,
    /// Points per angle axis.
    pub n_theta: usize,
    /// Points per action axis.
    pub n_x: usize,
}

impl Grid {
    pub fn new(n: usize, n_theta: usize, n_x: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("torus half-dimension n must be at least 1".into()));
        }
        if n_theta < 4 || n_x < 4 {
            return Err(Error::Config(format!(
                "grid resolution {n_theta}x{n_x} below the minimum of 4 points per axis"
            )));
        }
        let sites = (n_theta as u128 * n_x as u128).pow(n as u32);
        if sites > 1 << 26 {
            return Err(Error::Config(format!("grid with {sites} sites is too large")));
        }
        Ok(Self { n, n_theta, n_x })
    }

    /// Number of axes (2n).
    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn num_sites(&self) -> usize {
        (self.n_theta * self.n_x).pow(self.n as u32)
    }

    pub fn base_sites(&self) -> usize {
        self.n_x.pow(self.n as u32)
    }

    pub fn fiber_sites(&self) -> usize {
        self.n_theta.pow(self.n as u32)
    }

    pub fn h_theta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    pub fn h_x(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (self.h_theta() * self.h_x()).powi(self.n as i32)
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        if axis < self.n {
            self.n_theta
        } else {
            self.n_x
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        if axis < self.n {
            self.h_theta()
        } else {
            self.h_x()
        }
    }

    pub fn is_theta_axis(&self, axis: usize) -> bool {
        axis < self.n
    }

    pub fn dims(&self) -> Vec<usize> {
        (0..self.axes()).map(|a| self.axis_len(a)).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims())
    }

    /// Multi-index of a site (`θ` indices then `x` indices).
    pub fn multi_index(&self, site: usize) -> Vec<usize> {
        unravel(site, &self.dims())
    }

    pub fn site_of(&self, idx: &[usize]) -> usize {
        ravel(idx, &self.dims())
    }

    /// Angle coordinates of a site.
    pub fn theta(&self, site: usize) -> Vec<f64> {
        let idx = self.multi_index(site);
        idx[..self.n].iter().map(|&j| j as f64 * self.h_theta()).collect()
    }

    /// Action coordinates of a site.
    pub fn x(&self, site: usize) -> Vec<f64> {
        let idx = self.multi_index(site);
        idx[self.n..].iter().map(|&i| i as f64 * self.h_x()).collect()
    }

    /// Index of the base point (x part) of a site in the base grid.
    pub fn base_index(&self, site: usize) -> usize {
        site % self.base_sites()
    }

    /// Index of the fiber point (θ part) of a site in the fiber grid.
    pub fn fiber_index(&self, site: usize) -> usize {
        site / self.base_sites()
    }

    pub fn site_from_parts(&self, fiber: usize, base: usize) -> usize {
        fiber * self.base_sites() + base
    }

    /// Base-grid coordinates of a base index.
    pub fn base_coords(&self, base: usize) -> Vec<f64> {
        unravel(base, &vec![self.n_x; self.n])
            .into_iter()
            .map(|i| i as f64 * self.h_x())
            .collect()
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    strides
}

pub(crate) fn unravel(mut site: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        idx[a] = site % dims[a];
        site /= dims[a];
    }
    idx
}

pub(crate) fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Periodic neighbour of `site` one step along `axis` in direction `dir` (±1).
/// Returns the neighbour and whether the step crossed the seam.
pub(crate) fn step(site: usize, axis: usize, dir: isize, dims: &[usize], strides: &[usize]) -> (usize, bool) {
    let len = dims[axis];
    let i = (site / strides[axis]) % len;
    if dir > 0 {
        if i + 1 == len {
            (site - i * strides[axis], true)
        } else {
            (site + strides[axis], false)
        }
    } else if i == 0 {
        (site + (len - 1) * strides[axis], true)
    } else {
        (site - strides[axis], false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ravel_roundtrip_and_parts() {
        let g = Grid::new(2, 4, 6).unwrap();
        assert_eq!(g.num_sites(), 16 * 36);
        for site in [0, 1, 37, 500, g.num_sites() - 1] {
            assert_eq!(g.site_of(&g.multi_index(site)), site);
            let (f, b) = (g.fiber_index(site), g.base_index(site));
            assert_eq!(g.site_from_parts(f, b), site);
        }
    }

    #[test]
    fn step_wraps() {
        let dims = [4, 5];
        let strides = strides_of(&dims);
        assert_eq!(step(3, 1, 1, &dims, &strides), (4, false));
        assert_eq!(step(9, 1, 1, &dims, &strides), (5, true));
        assert_eq!(step(5, 1, -1, &dims, &strides), (9, true));
        assert_eq!(step(15, 0, 1, &dims, &strides), (0, true));
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(Grid::new(1, 3, 8).is_err());
        assert!(Grid::new(0, 8, 8).is_err());
    }
}
