//! Small dense helpers shared by the evidence kernels and the regressions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative diagonal jitter tried, in order, before a Gram matrix is declared
/// singular.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Cholesky factor of a symmetric positive-definite matrix, retrying with
/// growing diagonal jitter. Returns `None` once the ladder is exhausted.
pub(crate) fn spd_cholesky(gram: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = gram.nrows();
    let scale = (0..n).map(|i| gram[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
    if !scale.is_finite() {
        return None;
    }
    for rel in JITTER_LADDER {
        let mut g = gram.clone();
        if rel > 0.0 {
            for i in 0..n {
                g[(i, i)] += rel * scale;
            }
        }
        if let Some(chol) = Cholesky::new(g) {
            let l = chol.l_dirty();
            if (0..n).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Some(chol);
            }
        }
    }
    None
}

/// `ln det` of the matrix factored by `chol`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Columns of `m` picked by `cols`, in that order.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Rows of `m` picked by `rows`, in that order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `Dᵀ diag(w) D`.
pub(crate) fn weighted_gram(design: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = design.clone();
    for mut col in scaled.column_iter_mut() {
        col.component_mul_assign(weights);
    }
    design.transpose() * scaled
}

/// `Dᵀ diag(w) y`.
pub(crate) fn weighted_rhs(
    design: &DMatrix<f64>,
    weights: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    design.transpose() * y.component_mul(weights)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
