//! Compressed sparse row storage for complex Hermitian matrices.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Triplet accumulator. Duplicate entries are summed in insertion order.
#[derive(Debug, Clone, Default)]
pub struct CooBuilder {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl CooBuilder {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        Self { dim, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: Vec<(usize, usize, Complex64)>) {
        self.entries.extend(other);
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable, so merged sums do not depend on anything but push order
        self.entries.par_sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("merged entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { dim: self.dim, row_ptr, cols, vals }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => self.vals[span.start + i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `y = A x`, parallel over rows. Each row is summed sequentially, so the
    /// result does not depend on the thread count.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_iter_mut().with_min_len(256).enumerate().for_each(|(r, out)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *out = acc;
        });
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.matvec(x, &mut y);
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Max-row-sum norm, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |A − A†|` over stored entries.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.dim)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| (v - self.get(c, r).conj()).norm()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    pub fn map_values<F: Fn(usize, usize, Complex64) -> Complex64>(&self, f: F) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.dim {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[i] = f(r, self.cols[i], self.vals[i]);
            }
        }
        out
    }

    /// `self + shift·I`.
    pub fn add_identity(&self, shift: f64) -> CsrMatrix {
        let mut b = CooBuilder::with_capacity(self.dim, self.nnz() + self.dim);
        for (r, c, v) in self.triplets() {
            b.push(r, c, v);
        }
        for r in 0..self.dim {
            b.push(r, r, Complex64::new(shift, 0.0));
        }
        b.build()
    }

    /// Principal submatrix on `keep` (sorted, distinct indices).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut b = CooBuilder::new(keep.len());
        for (new_r, &r) in keep.iter().enumerate() {
            for (c, v) in self.row(r) {
                if map[c] != usize::MAX {
                    b.push(new_r, map[c], v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Coordinate-list text: `dim nnz`, then `row col re im` per entry, 0-indexed.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.dim, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(reader: R) -> Result<CsrMatrix> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
        let header = header?;
        let mut it = header.split_whitespace().map(|t| t.parse::<usize>());
        let (Some(Ok(dim)), Some(Ok(nnz)), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse { line: 1, message: "header must be `dim nnz`".into() });
        };
        let mut b = CooBuilder::with_capacity(dim, nnz);
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| Error::Parse { line: no + 1, message: m };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", f.len())));
            }
            let r: usize = f[0].parse().map_err(|e| bad(format!("{e}")))?;
            let c: usize = f[1].parse().map_err(|e| bad(format!("{e}")))?;
            let re: f64 = f[2].parse().map_err(|e| bad(format!("{e}")))?;
            let im: f64 = f[3].parse().map_err(|e| bad(format!("{e}")))?;
            if r >= dim || c >= dim {
                return Err(bad(format!("entry ({r}, {c}) outside dimension {dim}")));
            }
            b.push(r, c, Complex64::new(re, im));
        }
        Ok(b.build())
    }
}
