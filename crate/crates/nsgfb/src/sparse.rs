//! Compressed sparse row matrices with deterministic arithmetic.
//!
//! All accumulations run in ascending column order so that repeated runs
//! (and the two execution modes of the distributed solver) produce
//! bit-identical floating point results.

use nalgebra::DMatrix;

/// Square or rectangular sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for (r, c, v) in merged {
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            vals.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// y = A x, accumulating each row in ascending column order.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c as usize];
            }
            y[i] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Transposed copy (CSR of A^T).
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut row_ptr = counts.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, v) = self.row(i);
            for (c, val) in cols.iter().zip(v) {
                let dst = row_ptr[*c as usize];
                col_idx[dst] = i as u32;
                vals[dst] = *val;
                row_ptr[*c as usize] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            vals,
        }
    }

    /// C = A B with rows accumulated via a dense scratch column buffer;
    /// output columns ascending.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let n = other.ncols;
        let mut scratch = vec![0.0f64; n];
        let mut mask = vec![false; n];
        let mut touched: Vec<u32> = Vec::new();

        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();

        for i in 0..self.nrows {
            touched.clear();
            let (a_cols, a_vals) = self.row(i);
            for (k, av) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(*k as usize);
                for (j, bv) in b_cols.iter().zip(b_vals) {
                    let j = *j as usize;
                    if !mask[j] {
                        mask[j] = true;
                        touched.push(j as u32);
                        scratch[j] = 0.0;
                    }
                    scratch[j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                vals.push(scratch[j as usize]);
                mask[j as usize] = false;
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// C = A + B.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ac.len() || q < bc.len() {
                let ca = ac.get(p).copied().unwrap_or(u32::MAX);
                let cb = bc.get(q).copied().unwrap_or(u32::MAX);
                if ca < cb {
                    col_idx.push(ca);
                    vals.push(av[p]);
                    p += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    vals.push(bv[q]);
                    q += 1;
                } else {
                    col_idx.push(ca);
                    vals.push(av[p] + bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.vals {
            *v *= factor;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c as usize)] = *v;
            }
        }
        m
    }

    /// sup_{i,j} |a(i,j)|.
    pub fn max_abs_entry(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max_i sum_j |a(i,j)|, the operator norm on l-infinity.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    }

    /// max_j sum_i |a(i,j)|, the operator norm on l-1.
    pub fn max_abs_col_sum(&self) -> f64 {
        let mut sums = vec![0.0f64; self.ncols];
        for (c, v) in self.col_idx.iter().zip(&self.vals) {
            sums[*c as usize] += v.abs();
        }
        sums.into_iter().fold(0.0f64, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if (v - self.get(*c as usize, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Dense principal submatrix on `ids` (ascending vertex ids).
    pub fn dense_submatrix(&self, ids: &[u32]) -> DMatrix<f64> {
        let m = ids.len();
        let mut out = DMatrix::zeros(m, m);
        for (a, &i) in ids.iter().enumerate() {
            let (cols, vals) = self.row(i as usize);
            for (c, v) in cols.iter().zip(vals) {
                if let Ok(b) = ids.binary_search(c) {
                    out[(a, b)] = *v;
                }
            }
        }
        out
    }
}

/// Cholesky factorization storing only the lower triangle, for the many
/// small per-agent factors of the distributed solver.
#[derive(Debug, Clone)]
pub struct PackedCholesky {
    n: usize,
    /// Row-major lower triangle: l[i*(i+1)/2 + j] for j <= i.
    l: Vec<f64>,
}

impl PackedCholesky {
    pub fn factor(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut l = vec![0.0f64; n * (n + 1) / 2];
        for i in 0..n {
            let row_i = i * (i + 1) / 2;
            for j in 0..=i {
                let row_j = j * (j + 1) / 2;
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[row_i + k] * l[row_j + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[row_i + j] = s.sqrt();
                } else {
                    l[row_i + j] = s / l[row_j + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b in place: forward then backward substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = i * (i + 1) / 2;
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[row + k] * b[k];
            }
            b[i] = s / self.l[row + i];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..self.n {
                s -= self.l[k * (k + 1) / 2 + i] * b[k];
            }
            b[i] = s / self.l[i * (i + 1) / 2 + i];
        }
    }

    pub fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        self.solve_in_place(&mut b);
        b
    }
}
