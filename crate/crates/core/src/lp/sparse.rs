use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, col_ptr: vec![0; n_cols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    /// Duplicate entries are summed; explicit zeros are dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::DimensionMismatch(format!(
                "entry ({r}, {c}) outside {n_rows}x{n_cols} matrix"
            )));
        }
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut m = Self::zeros(n_rows, n_cols);
        let mut col = 0;
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            while col < c {
                col += 1;
                m.col_ptr[col] = m.row_idx.len();
            }
            if last == Some((r, c)) {
                *m.values.last_mut().unwrap() += v;
            } else {
                m.row_idx.push(r);
                m.values.push(v);
                last = Some((r, c));
            }
        }
        while col < n_cols {
            col += 1;
            m.col_ptr[col] = m.row_idx.len();
        }
        m.drop_zeros();
        Ok(m)
    }

    pub fn from_dense_rows(rows: &[Vec<T>], n_cols: usize) -> Result<Self> {
        let mut t = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch(format!("row {r} has {} entries, expected {n_cols}", row.len())));
            }
            t.extend(row.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(c, &v)| (r, c, v)));
        }
        Self::from_triplets(rows.len(), n_cols, t)
    }

    fn drop_zeros(&mut self) {
        let mut out = 0;
        let mut start = 0;
        for c in 0..self.n_cols {
            let end = self.col_ptr[c + 1];
            for k in start..end {
                if self.values[k] != T::zero() {
                    self.row_idx[out] = self.row_idx[k];
                    self.values[out] = self.values[k];
                    out += 1;
                }
            }
            start = end;
            self.col_ptr[c + 1] = out;
        }
        self.row_idx.truncate(out);
        self.values.truncate(out);
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn column(&self, c: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (rows, vals) = self.column(c);
        rows.iter().position(|&x| x == r).map_or(T::zero(), |k| vals[k])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_rows];
        for (c, &xc) in x.iter().enumerate().take(self.n_cols) {
            if xc == T::zero() {
                continue;
            }
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                out[r] += v * xc;
            }
        }
        out
    }

    /// `y^T A`, one entry per column.
    pub fn transpose_mul_vec(&self, y: &[T]) -> Vec<T> {
        (0..self.n_cols)
            .map(|c| {
                let (rows, vals) = self.column(c);
                rows.iter().zip(vals).map(|(&r, &v)| y[r] * v).sum()
            })
            .collect()
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for c in 0..self.n_cols {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                d[r][c] = v;
            }
        }
        d
    }
}
