//! QB Gramians and H2-type norms.
//!
//! For a pencil with mass matrix `E` the equations read
//!
//! ```text
//! A P Eᵀ + E P Aᵀ + BBᵀ + H(P₁⊗P₁)Hᵀ + Σ N_k P₁ N_kᵀ = 0
//! Aᵀ Q E + Eᵀ Q A + CᵀC + H⁽²⁾(Q₁⊗P₁)H⁽²⁾ᵀ + Σ N_kᵀ Q₁ N_k = 0
//! ```
//!
//! where `P₁`, `Q₁` are the linear Gramians and the mode-2 term pairs `Q₁`
//! with the output index of `H`. Both traces `tr(C P Cᵀ)` and `tr(Bᵀ Q B)`
//! give the squared truncated H2 norm.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dense_solvers::solve_lyapunov;
use crate::system_model::{QbOdeSystem, ReducedQbSystem};
use crate::tensor_kron::HessianTensor;
use crate::{Error, Result};

const DUAL_TOL: f64 = 1e-8;
const DIVERGENCE_GROWTH: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramianKind {
    Linear,
    Truncated,
    FullFixedPoint,
}

#[derive(Debug, Clone)]
pub struct GramianPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub kind: GramianKind,
    /// Largest relative residual of the equations solved last.
    pub residual: f64,
    /// Fixed-point sweeps (1 for the direct kinds).
    pub iterations: usize,
    pub converged: bool,
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `Σ N_k X N_kᵀ` (or `Σ N_kᵀ X N_k` when `transpose`).
fn bilinear_term(n: &[DMatrix<f64>], x: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for nk in n {
        if transpose {
            out += nk.tr_mul(x) * nk;
        } else {
            out += nk * x * nk.transpose();
        }
    }
    out
}

fn controllability(sys: &QbOdeSystem, rhs: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let s = solve_lyapunov(&sys.a, &sys.e, &symmetric(rhs.clone()))?;
    Ok((symmetric(s.p), s.residual))
}

fn observability(sys: &QbOdeSystem, rhs: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let s = solve_lyapunov(&sys.a.transpose(), &sys.e.transpose(), &symmetric(rhs.clone()))?;
    Ok((symmetric(s.p), s.residual))
}

/// Gramians of the linear part.
pub fn linear_gramians(sys: &QbOdeSystem) -> Result<GramianPair> {
    let (p, rp) = controllability(sys, &(&sys.b * sys.b.transpose()))?;
    let (q, rq) = observability(sys, &sys.c.tr_mul(&sys.c))?;
    Ok(GramianPair {
        p,
        q,
        kind: GramianKind::Linear,
        residual: rp.max(rq),
        iterations: 1,
        converged: true,
    })
}

/// Truncated Gramians from two cascaded Lyapunov solves each.
pub fn truncated_gramians(sys: &QbOdeSystem) -> Result<GramianPair> {
    let lin = linear_gramians(sys)?;
    let (p1, q1) = (&lin.p, &lin.q);
    let mut rhs_p = &sys.b * sys.b.transpose() + bilinear_term(&sys.n, p1, false);
    let mut rhs_q = sys.c.tr_mul(&sys.c) + bilinear_term(&sys.n, q1, true);
    if !sys.h.is_zero() {
        rhs_p += sys.h.gram(1, p1, p1)?;
        rhs_q += sys.h.gram(2, q1, p1)?;
    }
    let (p, rp) = controllability(sys, &rhs_p)?;
    let (q, rq) = observability(sys, &rhs_q)?;
    Ok(GramianPair {
        p,
        q,
        kind: GramianKind::Truncated,
        residual: lin.residual.max(rp).max(rq),
        iterations: 1,
        converged: true,
    })
}

/// Relative residual of the full quadratic controllability equation.
fn full_residual_p(sys: &QbOdeSystem, p: &DMatrix<f64>) -> Result<f64> {
    let lin = &sys.a * p * sys.e.transpose();
    let quad = sys.h.gram(1, p, p)? + bilinear_term(&sys.n, p, false);
    let bb = &sys.b * sys.b.transpose();
    let res = (&lin + lin.transpose() + &bb + &quad).norm();
    let scale = 2.0 * lin.norm() + bb.norm() + quad.norm();
    Ok(if scale == 0.0 { res } else { res / scale })
}

fn full_residual_q(sys: &QbOdeSystem, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    let lin = sys.a.tr_mul(q) * &sys.e;
    let quad = sys.h.gram(2, q, p)? + bilinear_term(&sys.n, q, true);
    let cc = sys.c.tr_mul(&sys.c);
    let res = (&lin + lin.transpose() + &cc + &quad).norm();
    let scale = 2.0 * lin.norm() + cc.norm() + quad.norm();
    Ok(if scale == 0.0 { res } else { res / scale })
}

/// Runs `X ← L⁻¹(rhs(X))` from `x0` until the relative update drops below
/// `tol`. Returns the iterate, the number of sweeps and whether it converged.
fn fixed_point<F>(x0: DMatrix<f64>, max_iters: usize, tol: f64, mut step: F) -> Result<(DMatrix<f64>, usize, bool)>
where
    F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let base = x0.norm().max(f64::MIN_POSITIVE);
    let mut x = x0;
    for it in 1..=max_iters {
        let next = step(&x)?;
        let grown = next.norm() / base;
        if !grown.is_finite() || grown > DIVERGENCE_GROWTH {
            return Err(Error::Diverged { iterations: it });
        }
        let change = (&next - &x).norm();
        let scale = x.norm();
        x = next;
        if change <= tol * scale {
            return Ok((x, it, true));
        }
    }
    Ok((x, max_iters, false))
}

/// Full QB Gramians by freezing the quadratic and bilinear terms at the
/// previous iterate, starting from the linear Gramians. `Q` is iterated with
/// the final `P`.
pub fn full_gramians_fixed_point(sys: &QbOdeSystem, max_iters: usize, tol: f64) -> Result<GramianPair> {
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::Argument("need max_iters > 0 and tol > 0".into()));
    }
    let lin = linear_gramians(sys)?;
    let bb = &sys.b * sys.b.transpose();
    let (p, ip, cp) = fixed_point(lin.p.clone(), max_iters, tol, |x| {
        let rhs = &bb + sys.h.gram(1, x, x)? + bilinear_term(&sys.n, x, false);
        Ok(controllability(sys, &rhs)?.0)
    })?;
    let cc = sys.c.tr_mul(&sys.c);
    let (q, iq, cq) = fixed_point(lin.q.clone(), max_iters, tol, |x| {
        let rhs = &cc + sys.h.gram(2, x, &p)? + bilinear_term(&sys.n, x, true);
        Ok(observability(sys, &rhs)?.0)
    })?;
    let residual = full_residual_p(sys, &p)?.max(full_residual_q(sys, &p, &q)?);
    Ok(GramianPair {
        p,
        q,
        kind: GramianKind::FullFixedPoint,
        residual,
        iterations: ip.max(iq),
        converged: cp && cq,
    })
}

fn trace_pair(sys: &QbOdeSystem, g: &GramianPair) -> Result<f64> {
    let primal = (&sys.c * &g.p * sys.c.transpose()).trace();
    let dual = (sys.b.tr_mul(&g.q) * &sys.b).trace();
    // the traces may cancel (error systems), so allow for roundoff in the
    // unreduced products
    let floor = f64::EPSILON * 1e3 * (sys.c.norm_squared() * g.p.norm() + sys.b.norm_squared() * g.q.norm());
    let scale = primal.abs().max(dual.abs());
    if (primal - dual).abs() > DUAL_TOL * scale + floor {
        return Err(Error::GramianInconsistency { primal, dual });
    }
    Ok(primal.max(0.0).sqrt())
}

/// `sqrt(tr(C P_𝒯 Cᵀ))`, checked against `sqrt(tr(Bᵀ Q_𝒯 B))`.
pub fn truncated_h2_norm(sys: &QbOdeSystem) -> Result<f64> {
    trace_pair(sys, &truncated_gramians(sys)?)
}

/// H2 norm of the linear part.
pub fn linear_h2_norm(sys: &QbOdeSystem) -> Result<f64> {
    trace_pair(sys, &linear_gramians(sys)?)
}

/// Truncated H2 norm of `Σ − Σ̂`, realized as the block-diagonal QB system
/// with output `[C, −Ĉ]`. Output corrections of `red` are not included.
pub fn error_system_norm(full: &QbOdeSystem, red: &ReducedQbSystem) -> Result<f64> {
    red.check()?;
    if red.inputs() != full.inputs() || red.outputs() != full.outputs() {
        return Err(Error::dim(format!(
            "full model has {} inputs / {} outputs, reduced has {} / {}",
            full.inputs(),
            full.outputs(),
            red.inputs(),
            red.outputs()
        )));
    }
    let (n, r) = (full.order(), red.order());
    let t = n + r;
    let blkdiag = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(t, t);
        m.view_mut((0, 0), (n, n)).copy_from(x);
        m.view_mut((n, n), (r, r)).copy_from(y);
        m
    };
    let hr = HessianTensor::from_dense_mode1(&red.h)?;
    let mut entries: Vec<_> = full.h.entries().collect();
    entries.extend(hr.entries().map(|(i, j, k, v)| (i + n, j + n, k + n, v)));
    let h = HessianTensor::from_entries(t, entries)?;
    let nb = full.n.len().max(red.n.len());
    let nlist = (0..nb)
        .map(|k| {
            let zf = DMatrix::zeros(n, n);
            let zr = DMatrix::zeros(r, r);
            blkdiag(full.n.get(k).unwrap_or(&zf), red.n.get(k).unwrap_or(&zr))
        })
        .collect();
    let mut b = DMatrix::zeros(t, full.inputs());
    b.rows_mut(0, n).copy_from(&full.b);
    b.rows_mut(n, r).copy_from(&red.b);
    let mut c = DMatrix::zeros(full.outputs(), t);
    c.columns_mut(0, n).copy_from(&full.c);
    c.columns_mut(n, r).copy_from(&(-&red.c));
    let aug = QbOdeSystem::new(
        Some(blkdiag(&full.e, &red.e)),
        blkdiag(&full.a, &red.a),
        h,
        nlist,
        b,
        c,
    )?;
    truncated_h2_norm(&aug)
}
