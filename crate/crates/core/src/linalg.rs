//! Small dense kernels on row-major square matrices.

/// In-place Cholesky factorization `A = L Lᵀ` of a row-major `n x n` matrix,
/// writing `L` into the lower triangle. Stops at the first non-positive pivot
/// and returns the number of leading rows that were factored; the leading
/// principal block of that size is then positive definite. A pivot counts as
/// non-positive when it falls below `rel_tol` times the original diagonal entry.
pub(crate) fn cholesky_prefix(a: &mut [f64], n: usize, rel_tol: f64) -> usize {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let original = a[j * n + j];
        let mut diag = original;
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > rel_tol * original.abs() && diag > 0.0 && diag.is_finite()) {
            return j;
        }
        let pivot = diag.sqrt();
        a[j * n + j] = pivot;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / pivot;
        }
    }
    n
}

/// Solves `L x = b` for the leading `n x n` lower factor stored with stride `stride`.
pub(crate) fn forward_solve(l: &[f64], stride: usize, n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * stride..i * stride + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * stride + i];
    }
}

/// Solves `Lᵀ x = b` for the leading `n x n` lower factor stored with stride `stride`.
pub(crate) fn backward_solve(l: &[f64], stride: usize, n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * stride + i] * b[k];
        }
        b[i] = s / l[i * stride + i];
    }
}
