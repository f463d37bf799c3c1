//! Small dense helpers shared by the solver and projection modules.

use nalgebra::{DMatrix, DVector};

use crate::{CMatrix, Error, Result, C64};

/// Reciprocal 2-norm condition number estimate from singular values.
pub(crate) fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

pub(crate) fn require_invertible(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} must be square")));
    }
    let rc = rcond(m);
    if rc < 1e-14 {
        return Err(Error::Singular(format!("{what} (rcond {rc:.2e})")));
    }
    Ok(rc)
}

/// Numerical rank with relative threshold `tol`.
pub(crate) fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Thin orthonormal basis via Householder QR on unit-scaled columns;
/// rejects rank-deficient input.
pub(crate) fn orthonormalize(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = v.shape();
    if r > n {
        return Err(Error::dim(format!("cannot orthonormalize {r} columns in R^{n}")));
    }
    let mut scaled = v.clone();
    for mut c in scaled.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c /= nrm;
        }
    }
    let qr = scaled.qr();
    let rr = qr.r();
    let dmax = (0..r).map(|i| rr[(i, i)].abs()).fold(0.0, f64::max);
    let dmin = (0..r).map(|i| rr[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if r > 0 && (dmax == 0.0 || dmin <= 1e-12 * dmax) {
        return Err(Error::Singular(format!(
            "basis is numerically rank deficient (|R_ii| ratio {:.2e})",
            if dmax == 0.0 { 0.0 } else { dmin / dmax }
        )));
    }
    Ok(qr.q())
}

/// Normwise relative residual `‖res‖ / (‖rhs‖ + ‖op‖‖x‖)`, zero when both
/// scales vanish.
pub(crate) fn relative_residual(res: f64, rhs: f64, op: f64, x: f64) -> f64 {
    let denom = rhs + op * x;
    if denom == 0.0 {
        if res == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        res / denom
    }
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub(crate) fn to_complex_vec(v: &DVector<f64>) -> DVector<C64> {
    v.map(|x| C64::new(x, 0.0))
}

/// Smallest over largest LU pivot magnitude; `0` flags an exactly singular
/// factorization.
pub(crate) fn pivot_ratio(lu: &nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    if n == 0 {
        return 1.0;
    }
    let mut max: f64 = 0.0;
    let mut min = f64::INFINITY;
    for i in 0..n {
        let d = u[(i, i)].norm();
        max = max.max(d);
        min = min.min(d);
    }
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Total order used for every eigenvalue list: real part, then imaginary.
pub(crate) fn cmp_eig(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Eigenvalues of the pencil `(A, E)`, sorted by [`cmp_eig`].
pub(crate) fn pencil_eigenvalues(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Vec<C64>> {
    let lu = e.clone().lu();
    let m = lu
        .solve(a)
        .ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let mut ev: Vec<C64> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(cmp_eig);
    Ok(ev)
}

pub(crate) fn spectral_abscissa(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    Ok(pencil_eigenvalues(e, a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Sine of the largest principal angle between the column spans of `a` and
/// `b` (both with orthonormal columns).
pub fn max_principal_angle_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = b - a * (a.transpose() * b);
    let s1 = proj.singular_values().max();
    let proj = a - b * (b.transpose() * a);
    s1.max(proj.singular_values().max()).min(1.0)
}
