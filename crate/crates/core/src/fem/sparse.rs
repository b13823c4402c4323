use crate::error::{check_len, Error, Result};

/// Square sparse matrix in compressed-row layout.
///
/// Column indices within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    symmetric: bool,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds an `n x n` operator from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        symmetric: bool,
    ) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(Error::invalid(format!("entry ({r}, {c}) outside {n}x{n}")));
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r];
            cols[slot] = c;
            vals[slot] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            symmetric,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            symmetric: true,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Same sparsity pattern as `self`, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>, symmetric: bool) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            n: self.n,
            symmetric,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
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

    /// Position of entry `(row, col)` in the value array.
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
        cols.binary_search(&col).ok().map(|k| self.row_ptr[row] + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot(row, col).map_or(0.0, |k| self.values[k])
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (r, &xr) in x.iter().enumerate().take(self.n) {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += xr * row;
        }
        acc
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .sum()
            })
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// `a * A` on the same pattern.
    pub fn scaled(&self, a: f64) -> Self {
        self.with_values(self.values.iter().map(|v| a * v).collect(), self.symmetric)
    }

    /// `a * A + b * B`
    pub fn linear_combination(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Result<Self> {
        check_len(lhs.n, rhs.n)?;
        let entries: Vec<_> = lhs
            .triplets()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(rhs.triplets().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        Self::from_triplets(lhs.n, &entries, lhs.symmetric && rhs.symmetric)
    }

    /// Assembles the `2n x 2n` operator `[[a11, a12], [a21, a22]]`.
    pub fn block2x2(a11: &Self, a12: &Self, a21: &Self, a22: &Self) -> Result<Self> {
        let n = a11.n;
        for b in [a12, a21, a22] {
            check_len(n, b.n)?;
        }
        let mut entries = Vec::with_capacity(a11.nnz() + a12.nnz() + a21.nnz() + a22.nnz());
        for (blk, dr, dc) in [(a11, 0, 0), (a12, 0, n), (a21, n, 0), (a22, n, n)] {
            entries.extend(blk.triplets().map(|(r, c, v)| (r + dr, c + dc, v)));
        }
        Self::from_triplets(2 * n, &entries, false)
    }

    /// Exact transpose-symmetry check of stored values.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_faer(&self) -> Result<faer::sparse::SparseColMat<usize, f64>> {
        let entries: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.n, self.n, &entries)
            .map_err(|e| Error::solver(format!("sparse conversion failed: {e:?}")))
    }
}
