//! Small dense helpers over column-major `nalgebra` matrices.

use nalgebra::{DMatrix, DVector};

/// `sum_i w_i z_i z_i^T` for a column-major `n x q` design.
pub(crate) fn weighted_gram(z: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let (n, q) = z.shape();
    let data = z.as_slice();
    let weights = &weights[..n];
    let mut g = DMatrix::zeros(q, q);
    let mut scaled = vec![0.0; n];
    for a in 0..q {
        let ca = &data[a * n..(a + 1) * n];
        for ((s, wi), zi) in scaled.iter_mut().zip(weights).zip(ca) {
            *s = wi * zi;
        }
        for b in 0..=a {
            let cb = &data[b * n..(b + 1) * n];
            let v: f64 = scaled.iter().zip(cb).map(|(x, y)| x * y).sum();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// `sum_i v_i z_i` for a column-major `n x q` design.
pub(crate) fn weighted_colsum(z: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    let (n, q) = z.shape();
    let data = z.as_slice();
    DVector::from_iterator(
        q,
        (0..q).map(|a| {
            let ca = &data[a * n..(a + 1) * n];
            ca.iter().zip(v).map(|(zi, vi)| zi * vi).sum()
        }),
    )
}

/// `Z beta` as a plain vector.
pub(crate) fn mul_vec(z: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let (n, q) = z.shape();
    let data = z.as_slice();
    let mut out = vec![0.0; n];
    for a in 0..q {
        let b = beta[a];
        if b == 0.0 {
            continue;
        }
        for (o, zi) in out.iter_mut().zip(&data[a * n..(a + 1) * n]) {
            *o += zi * b;
        }
    }
    out
}

/// Solve a symmetric positive (semi)definite system. When the Cholesky
/// factorisation fails or is badly conditioned and `ridge` is positive,
/// retries with `ridge * max(1, mean diagonal) * I` added. Returns the
/// solution and whether the ridge was needed.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Option<(DVector<f64>, bool)> {
    if let Some(ch) = a.clone().cholesky() {
        let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if max_diag > 0.0 && min_pivot > 1e-13 * max_diag {
            let x = ch.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Some((x, false));
            }
        }
    }
    if ridge <= 0.0 {
        return None;
    }
    let q = a.nrows();
    let scale = (a.trace() / q as f64).max(1.0);
    let reg = a + DMatrix::identity(q, q) * (ridge * scale);
    let x = reg.cholesky()?.solve(b);
    x.iter().all(|v| v.is_finite()).then_some((x, true))
}

/// Ordinary least squares via the normal equations with ridge fallback.
pub(crate) fn least_squares(z: &DMatrix<f64>, y: &[f64], ridge: f64) -> Option<(Vec<f64>, bool)> {
    let ones = vec![1.0; y.len()];
    let g = weighted_gram(z, &ones);
    let rhs = weighted_colsum(z, y);
    solve_spd(&g, &rhs, ridge).map(|(x, r)| (x.iter().copied().collect(), r))
}

/// Invert a symmetric matrix with a relative ridge `ridge * trace / q`.
pub(crate) fn ridge_inverse(a: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let q = a.nrows();
    let reg = a + DMatrix::identity(q, q) * (ridge * a.trace().abs() / q as f64);
    reg.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| reg.try_inverse())
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_line() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let (beta, ridge) = least_squares(&z, &[2.0, 5.0, 8.0], 1e-8).unwrap();
        assert!(!ridge);
        assert!((beta[0] - 2.0).abs() < 1e-10);
        assert!((beta[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let (_, ridge) = least_squares(&z, &[1.0, 2.0, 3.0], 1e-8).unwrap();
        assert!(ridge);
        assert!(least_squares(&z, &[1.0, 2.0, 3.0], 0.0).is_none());
    }
}
