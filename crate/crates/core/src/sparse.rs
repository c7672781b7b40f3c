//! Compressed sparse rows and a banded LU factorization with partial
//! pivoting, sized for Jacobians of 5- and 9-point stencils on grids up to a
//! few hundred nodes per side.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail_arg, Error, Result};

/// Row-major sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// each row is sorted by column.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                bail_arg!("triplet ({r}, {c}) outside a {n}x{n} matrix");
            }
            rows[r].push((c, v));
        }
        Ok(Self::from_rows(rows))
    }

    /// Build from per-row entry lists.
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in row.iter() {
                if c == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

/// `P A = L U` for a banded matrix with lower bandwidth `kl` and upper
/// bandwidth `ku`. Row `r` of the working array stores columns
/// `r − kl ..= r + ku + kl`, leaving room for fill from row interchanges.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    u: Vec<f64>,
    l: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut u = vec![0.0; n * width];
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for (c, v) in a.row(i) {
                u[i * width + c + kl - i] += v;
            }
        }
        let mut l = vec![0.0; n * kl.max(1)];
        let mut pivots = vec![0; n];
        let idx = |r: usize, c: usize| r * width + c + kl - r;

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = u[idx(k, k)].abs();
            for r in k + 1..=last_row {
                let val = u[idx(r, k)].abs();
                if val > best {
                    best = val;
                    p = r;
                }
            }
            if !(best > 1e-300) || best <= 1e-15 * scale {
                return Err(Error::SingularMatrix { pivot: k, value: best });
            }
            pivots[k] = p;
            if p != k {
                for c in k..=last_col {
                    u.swap(idx(k, c), idx(p, c));
                }
            }
            let piv = u[idx(k, k)];
            for r in k + 1..=last_row {
                let m = u[idx(r, k)] / piv;
                l[k * kl + (r - k - 1)] = m;
                u[idx(r, k)] = 0.0;
                if m != 0.0 {
                    for c in k + 1..=last_col {
                        u[idx(r, c)] -= m * u[idx(k, c)];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, width, u, l, pivots })
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    b[r] -= self.l[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        let ku_eff = width - kl - 1;
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + ku_eff).min(n - 1) {
                s -= self.u[k * width + c + kl - k] * b[c];
            }
            b[k] = s / self.u[k * width + kl];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
