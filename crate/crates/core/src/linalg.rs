//! Small dense complex helpers shared by the optimizers and the radar pipeline.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{IsacError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Conditioning bound above which Hermitian solves are regularized.
pub const MAX_CONDITION: f64 = 1e12;
pub const JITTER: f64 = 1e-12;

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real part of the Frobenius inner product, `Re tr(a^H b)`.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol * scale)
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// When the factorization fails or the diagonal of the factor indicates a
/// condition number above [`MAX_CONDITION`], a diagonal jitter of
/// `JITTER * (tr(A)/n)` is added (and grown if needed). The returned flag
/// reports whether jitter was applied.
pub fn hpd_cholesky(a: &CMat) -> Result<(Cholesky<C64, Dyn>, bool)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(IsacError::Dimension(format!(
            "expected square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let h = hermitize(a);
    if let Some(ch) = Cholesky::new(h.clone()) {
        if cond_proxy(&ch) <= MAX_CONDITION {
            return Ok((ch, false));
        }
    }
    let scale = (h.trace().re / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut eps = JITTER * scale;
    for _ in 0..30 {
        let mut reg = h.clone();
        for i in 0..n {
            reg[(i, i)] += eps;
        }
        if let Some(ch) = Cholesky::new(reg) {
            return Ok((ch, true));
        }
        eps *= 10.0;
    }
    Err(IsacError::Numerical(
        "matrix is not positive definite even after regularization".into(),
    ))
}

fn cond_proxy(ch: &Cholesky<C64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].re.abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

/// `ln det(A)` for Hermitian positive-definite `A`.
pub fn hpd_logdet(a: &CMat) -> Result<f64> {
    let (ch, _) = hpd_cholesky(a)?;
    let l = ch.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hpd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let (ch, _) = hpd_cholesky(a)?;
    Ok(ch.solve(b))
}

pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    let (ch, _) = hpd_cholesky(a)?;
    Ok(hermitize(&ch.inverse()))
}

/// Unit-modulus phase of `z`; `None` when `z` is exactly zero (any phase is optimal).
pub fn unit_phase(z: C64) -> Option<C64> {
    let r = z.norm();
    if r > 0.0 {
        Some(z / r)
    } else {
        None
    }
}

/// Left singular vectors sorted by decreasing singular value, plus the singular values.
pub fn sorted_left_singular(m: &CMat) -> (CMat, Vec<f64>) {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let cols: Vec<CVec> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let values = order.iter().map(|&i| s[i]).collect();
    (CMat::from_columns(&cols), values)
}

/// Right singular vectors (columns) sorted by decreasing singular value.
pub fn sorted_right_singular(m: &CMat) -> (CMat, Vec<f64>) {
    let (u, s) = sorted_left_singular(&m.adjoint());
    (u, s)
}
