//! Small sparse and banded linear algebra kernels used by the PDE systems.
//!
//! The interior-node operators are symmetric with a 5-point pattern, so a
//! compressed-row matrix with sorted column indices covers every splitting
//! (Jacobi, forward Gauss–Seidel sweeps, quasi-CG products), and a banded
//! Cholesky factorization covers exact solves.

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the stored values; the pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Index into `values` of the diagonal entry of each row, if stored.
    pub fn diagonal_positions(&self) -> Vec<Option<usize>> {
        (0..self.nrows)
            .map(|i| {
                let range = self.row_ptr[i]..self.row_ptr[i + 1];
                self.col_idx[range.clone()]
                    .binary_search(&i)
                    .ok()
                    .map(|p| range.start + p)
            })
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `rhs - self * x`.
    pub fn residual(&self, rhs: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = self.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Largest entrywise asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite banded matrix.
///
/// Row `i` of `L` is stored densely over columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // (n, bw + 1) row-major; entry (i, k) is L[i, i - bw + k]
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            for j in jlo..=i {
                // L[i, j] = (A[i, j] - sum_{k<j} L[i,k] L[j,k]) / L[j, j]
                let klo = jlo.max(j.saturating_sub(bw));
                let li = &band[i * w + (klo + bw - i)..i * w + (j + bw - i)];
                let lj = &band[j * w + (klo + bw - j)..j * w + bw];
                let s = band[i * w + (j + bw - i)] - dot_unrolled(li, lj);
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSystem { row: i });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        // forward: L z = b
        for i in 0..n {
            let klo = i.saturating_sub(bw);
            let row = &self.band[i * w + (klo + bw - i)..i * w + bw];
            x[i] = (x[i] - dot_unrolled(row, &x[klo..i])) / self.band[i * w + bw];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let s = x[i] / self.band[i * w + bw];
            x[i] = s;
            let klo = i.saturating_sub(bw);
            let row = &self.band[i * w + (klo + bw - i)..i * w + bw];
            for (xk, l) in x[klo..i].iter_mut().zip(row) {
                *xk -= l * s;
            }
        }
    }
}

// Four independent accumulators so the loop pipelines.
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
