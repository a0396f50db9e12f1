//! Dense/sparse linear algebra, row normalisation, cosine similarity and the
//! central-difference gradient oracle.

mod dense;
pub mod rng;
mod sparse;

pub use dense::DenseMatrix;
pub(crate) use dense::{dot, norm2};
pub use rng::SeededRng;
pub use sparse::{SparseAdjacency, SparseMatrix};

use crate::error::{GemiError, Result};
use crate::real::Real;

/// Default guard added to row norms before dividing.
pub const NORMALIZE_EPS: f64 = 1e-12;

pub fn matmul<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    a.matmul(b)
}

pub fn spmm<T: Real>(adj: &SparseAdjacency<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    adj.spmm(x)
}

/// Divides every row by `max(‖row‖₂, eps)`.
pub fn l2_normalize_rows<T: Real>(x: &DenseMatrix<T>, eps: T) -> DenseMatrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let d = norm2(row).max(eps);
        row.iter_mut().for_each(|v| *v /= d);
    }
    out
}

/// Scales a single vector like [`l2_normalize_rows`].
pub fn l2_normalize<T: Real>(v: &[T], eps: T) -> Vec<T> {
    let d = norm2(v).max(eps);
    v.iter().map(|&x| x / d).collect()
}

/// Pairwise cosine similarities of the rows of `x`, after eps-guarded
/// normalisation. Symmetric by construction.
pub fn cosine_similarity_matrix<T: Real>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    let xn = l2_normalize_rows(x, T::lit(NORMALIZE_EPS));
    let n = xn.rows();
    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(xn.row(i), xn.row(j));
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    s
}

/// Cosine similarity of two vectors with an eps-guarded denominator.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    dot(a, b) / (norm2(a) * norm2(b)).max(T::lit(NORMALIZE_EPS))
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate.
pub fn finite_difference_gradient<T: Real>(
    mut f: impl FnMut(&[T]) -> T,
    x: &[T],
    h: T,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(GemiError::InvalidArgument("finite-difference step must be > 0".into()));
    }
    let mut probe = x.to_vec();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(GemiError::Numeric(format!(
                "non-finite function value around coordinate {i}"
            )));
        }
        grad.push((up - down) / two_h);
    }
    Ok(grad)
}
