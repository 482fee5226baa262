//! Small dense complex linear-algebra helpers shared by the rate, surrogate
//! and conic modules. Matrices here are tiny (a few antennas), so everything
//! is dense `nalgebra` storage.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Squared Frobenius norm.
pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re Tr(A^H V)`, i.e. the real Frobenius inner product.
pub fn re_inner(a: &CMat, v: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), v.shape());
    a.iter().zip(v.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Real trace of a (nominally Hermitian) matrix.
pub fn re_trace(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Column-major interleaving of real and imaginary parts.
pub fn realify(m: &CMat) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

fn jitter_scale(m: &CMat) -> f64 {
    let n = m.nrows().max(1) as f64;
    (re_trace(m).abs() / n).max(f64::MIN_POSITIVE)
}

/// Cholesky factor of a Hermitian positive definite matrix. On failure a
/// diagonal jitter of `1e-12 * scale` is added and escalated by 10x up to
/// `1e-9 * scale`.
pub fn cholesky_jittered(m: &CMat) -> Result<CMat> {
    let h = hermitian_part(m);
    if let Some(c) = h.clone().cholesky() {
        return Ok(c.unpack());
    }
    let scale = jitter_scale(&h);
    let mut jitter = 1e-12 * scale;
    while jitter <= 1e-9 * scale * 1.0001 {
        let shifted = &h + identity(h.nrows()).scale(jitter);
        if let Some(c) = shifted.cholesky() {
            return Ok(c.unpack());
        }
        jitter *= 10.0;
    }
    Err(Error::Numeric("matrix is not positive definite".into()))
}

/// Inverse of a Hermitian positive definite matrix, symmetrized.
pub fn hpd_inverse(m: &CMat) -> Result<CMat> {
    let h = hermitian_part(m);
    let inv = match h.clone().cholesky() {
        Some(c) => c.inverse(),
        None => {
            let l = cholesky_jittered(&h)?;
            let id = identity(h.nrows());
            let y = l.solve_lower_triangular(&id).ok_or_else(|| Error::Numeric("singular factor".into()))?;
            y.adjoint() * y
        }
    };
    Ok(hermitian_part(&inv))
}

/// `ln det` of a Hermitian positive definite matrix.
pub fn logdet_hpd(m: &CMat) -> Result<f64> {
    let l = cholesky_jittered(m)?;
    Ok(2.0 * l.diagonal().iter().map(|z| z.re.ln()).sum::<f64>())
}

/// Factor a Hermitian PSD matrix as `L L^H`. Cholesky with jitter escalation
/// is tried first; if the matrix is PSD only up to rounding and Cholesky still
/// fails, negative eigenvalues are clamped to zero.
pub fn psd_factor(m: &CMat) -> CMat {
    let h = hermitian_part(m);
    if let Ok(l) = cholesky_jittered(&h) {
        return l;
    }
    let eig = h.symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..l.nrows() {
            l[(i, j)] *= s;
        }
    }
    l
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest deviation from Hermitian symmetry, `max |m - m^H|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Top `count` right singular vectors of `h` as the columns of an
/// `ncols(h) x count` matrix. Missing directions (rank deficiency or
/// `count > ncols`) are zero columns.
pub fn top_right_singular(h: &CMat, count: usize) -> CMat {
    let gram = hermitian_part(&(h.adjoint() * h));
    top_eigenvectors(&gram, count)
}

/// Top `count` eigenvectors of a Hermitian matrix, ordered by decreasing
/// eigenvalue.
pub fn top_eigenvectors(m: &CMat, count: usize) -> CMat {
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = CMat::zeros(n, count);
    for (col, &idx) in order.iter().take(count).enumerate() {
        out.set_column(col, &eig.eigenvectors.column(idx));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inverse_and_logdet_of_known_matrix() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let inv = hpd_inverse(&m).unwrap();
        let prod = &m * &inv;
        assert!((prod - identity(2)).norm() < 1e-12);
        // det = 4 - 1 = 3
        assert!((logdet_hpd(&m).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn psd_factor_handles_rank_deficient() {
        let v = CMat::from_column_slice(2, 1, &[c(1.0, 1.0), c(0.5, -2.0)]);
        let b = &v * v.adjoint();
        let l = psd_factor(&b);
        assert!((&l * l.adjoint() - &b).norm() < 1e-6 * b.norm());
    }

    #[test]
    fn inner_product_matches_trace() {
        let a = CMat::from_row_slice(2, 1, &[c(1.0, 2.0), c(-0.5, 0.25)]);
        let v = CMat::from_row_slice(2, 1, &[c(0.3, -1.0), c(2.0, 1.0)]);
        let tr = (a.adjoint() * &v)[(0, 0)].re;
        assert!((re_inner(&a, &v) - tr).abs() < 1e-14);
    }
}
