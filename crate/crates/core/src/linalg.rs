use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};

use crate::C64;

pub(crate) fn conj_transpose(a: ArrayView2<'_, C64>) -> Array2<C64> {
    a.t().mapv(|v| v.conj())
}

pub(crate) fn fro_norm_sq(a: ArrayView2<'_, C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// Sum of the 2-norms of the rows of `x`.
pub(crate) fn row_norm_sum(x: ArrayView2<'_, C64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .sum()
}

/// Index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(a: ArrayView2<'_, C64>) -> Option<usize> {
    a.iter().position(|v| !(v.re.is_finite() && v.im.is_finite()))
}

/// `base + alpha * a b`, accumulated in place of `base`.
pub(crate) fn gemm_onto(mut base: Array2<C64>, alpha: f64, a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> Array2<C64> {
    general_mat_mul(C64::new(alpha, 0.0), &a, &b, C64::new(1.0, 0.0), &mut base);
    base
}
