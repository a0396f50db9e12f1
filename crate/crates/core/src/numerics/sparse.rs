use std::collections::BTreeMap;

use crate::error::{GemiError, Result};
use crate::numerics::DenseMatrix;
use crate::real::Real;

/// Square sparse matrix in compressed-row form. Not necessarily symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds from `(row, col, value)` triples; rejects duplicates and
    /// out-of-range indices.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut sorted: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(GemiError::Validation(format!(
                    "entry ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(GemiError::Numeric(format!("non-finite weight at ({i}, {j})")));
            }
            if sorted.insert((i, j), w).is_some() {
                return Err(GemiError::Validation(format!("duplicate entry ({i}, {j})")));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for (&(i, j), &w) in &sorted {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(w);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// All entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map(|(_, w)| w).unwrap_or_else(T::zero)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.entries() {
            m.set(i, j, w);
        }
        m
    }

    /// `self · x`.
    pub fn spmm(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.rows() != self.n {
            return Err(GemiError::shape("spmm", format!("{} rows", self.n), x.rows()));
        }
        let cols = x.cols();
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for (j, w) in self.row(i) {
                for (o, &v) in out_row.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn spmm_transpose(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.rows() != self.n {
            return Err(GemiError::shape("spmm_transpose", format!("{} rows", self.n), x.rows()));
        }
        let cols = x.cols();
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let src = x.row(i);
            for (j, w) in self.row(i) {
                for (o, &v) in out.row_mut(j).iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|(i, j, w)| self.row(j).any(|(c, v)| c == i && v == w))
    }
}

/// Symmetric, non-negative weighted adjacency over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency<T>(SparseMatrix<T>);

impl<T: Real> SparseAdjacency<T> {
    /// Validates symmetry and non-negativity of the given entries.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let m = SparseMatrix::from_triplets(n, entries)?;
        if let Some((i, j, w)) = m.entries().find(|&(_, _, w)| w < T::zero()) {
            return Err(GemiError::Validation(format!("negative weight {w} at ({i}, {j})")));
        }
        if !m.is_symmetric() {
            return Err(GemiError::Validation("adjacency is not symmetric".into()));
        }
        Ok(Self(m))
    }

    /// Builds from undirected edges `(i, j, w)`, inserting both directions.
    /// A pair with `i == j` becomes a single diagonal entry.
    pub fn from_undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut all = Vec::new();
        for (i, j, w) in edges {
            all.push((i, j, w));
            if i != j {
                all.push((j, i, w));
            }
        }
        Self::from_entries(n, all)
    }

    pub fn empty(n: usize) -> Self {
        Self(SparseMatrix::from_triplets(n, std::iter::empty()).expect("empty matrix is valid"))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn as_matrix(&self) -> &SparseMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> SparseMatrix<T> {
        self.0
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.0.entries()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0.get(i, j)
    }

    pub fn nnz(&self) -> usize {
        self.0.nnz()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        self.0.to_dense()
    }

    pub fn spmm(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.0.spmm(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_adjacency_annihilates() {
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let a = SparseAdjacency::<f64>::empty(3);
        assert_eq!(a.spmm(&x).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn self_loops_are_identity() {
        let x = DenseMatrix::from_fn(4, 3, |i, j| i as f64 * 1.5 - j as f64);
        let a = SparseAdjacency::from_entries(4, (0..4).map(|i| (i, i, 1.0))).unwrap();
        assert_eq!(a.spmm(&x).unwrap(), x);
    }

    #[test]
    fn rejects_asymmetric_duplicate_and_negative() {
        assert!(SparseAdjacency::from_entries(2, [(0, 1, 1.0)]).is_err());
        assert!(SparseAdjacency::from_entries(2, [(0, 1, 1.0), (0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(SparseAdjacency::from_undirected(2, [(0, 1, -1.0)]).is_err());
        assert!(SparseAdjacency::from_undirected(2, [(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn transpose_product_matches_dense() {
        let m = SparseMatrix::from_triplets(3, [(0, 1, 2.0), (2, 0, -1.0), (1, 1, 0.5)]).unwrap();
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 + 1.0);
        let dense_t = m.to_dense().transpose();
        assert_eq!(m.spmm_transpose(&x).unwrap(), dense_t.matmul(&x).unwrap());
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let a = SparseAdjacency::<f64>::empty(3);
        assert!(a.spmm(&DenseMatrix::zeros(2, 2)).is_err());
    }
}
