//! Dense solver backends.
//!
//! Everything that involves an interpolation shift runs in complex
//! arithmetic. Shifted systems decouple per shift because the shift matrix is
//! diagonal, so a Sylvester equation with `r` shifts is `r` independent
//! `n × n` (or saddle-point `(n_v + n_p)`) solves.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::linalg::{
    cmp_eig, pivot_ratio, rcond, relative_residual, to_complex, to_complex_vec,
};
use crate::par::map_indexed;
use crate::tensor_kron::kron;
use crate::{CMatrix, CVector, Error, Result, C64};

const SINGULAR_PIVOT_RATIO: f64 = 1e-14;
/// Normwise backward-error bound of a pencil eigendecomposition.
const PENCIL_RESIDUAL_TOL: f64 = 1e-10;
/// Eigenvector condition number beyond which a pencil counts as defective.
const PENCIL_COND_MAX: f64 = 1e13;

/// Eigendecomposition `X Â Y = Λ`, `X Ê Y = I` of a reduced pencil.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    pub x: CMatrix,
    pub y: CMatrix,
    /// Diagonal of `Λ`, sorted by (real, imaginary). Eigenvalues of a real
    /// pencil come in exactly conjugate pairs.
    pub eigenvalues: Vec<C64>,
    /// For each eigenvalue, the index of its conjugate partner (itself when
    /// real).
    pub partner: Vec<usize>,
}

impl SpectralFactorization {
    pub fn lambda(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(self.eigenvalues.clone()))
    }

    /// `‖X Â Y − Λ‖_F / ‖Â‖_F` and `‖X Ê Y − I‖_F`.
    pub fn residuals(&self, e: &DMatrix<f64>, a: &DMatrix<f64>) -> (f64, f64) {
        let r = self.eigenvalues.len();
        let ra = (&self.x * to_complex(a) * &self.y - self.lambda()).norm();
        let re = (&self.x * to_complex(e) * &self.y - CMatrix::identity(r, r)).norm();
        let an = a.norm();
        (if an == 0.0 { ra } else { ra / an }, re)
    }
}

/// Generalized eigendecomposition of the pencil `λÊ − Â`.
///
/// Eigenvectors come from a complex Schur form of `Ê⁻¹Â`. Conjugate pairs are
/// made exactly conjugate and eigenvectors of real eigenvalues exactly real,
/// which is what lets the reduction keep real bases.
pub fn pencil_eig(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<SpectralFactorization> {
    let r = e.nrows();
    if !e.is_square() || a.shape() != e.shape() {
        return Err(Error::dim("pencil_eig: E and A must be square and equal size"));
    }
    if rcond(e) < 1e-14 {
        return Err(Error::Singular("reduced mass matrix singular".into()));
    }
    let m = e
        .clone()
        .lu()
        .solve(a)
        .ok_or_else(|| Error::Singular("reduced mass matrix singular".into()))?;
    let mnorm = m.norm();
    let schur = nalgebra::Schur::try_new(to_complex(&m), 1e-15, 100 * r.max(10))
        .ok_or_else(|| Error::Argument("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    let raw: Vec<C64> = (0..r).map(|i| t[(i, i)]).collect();
    let small = f64::EPSILON * mnorm.max(f64::MIN_POSITIVE);
    let eigvec = |k: usize| -> CVector {
        let mut x = CVector::zeros(r);
        x[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * x[j];
            }
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            x[i] = -s / d;
        }
        let y = &q * x;
        let nrm = y.norm();
        y / C64::new(nrm, 0.0)
    };

    let real_tol = 1e3 * f64::EPSILON * mnorm.max(1.0);
    let mut values = vec![C64::new(0.0, 0.0); r];
    let mut vectors: Vec<Option<CVector>> = vec![None; r];
    let mut partner = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for k in 0..r {
        if used[k] || raw[k].im.abs() > real_tol {
            continue;
        }
        used[k] = true;
        partner[k] = k;
        values[k] = C64::new(raw[k].re, 0.0);
        let y = eigvec(k);
        // rotate so the largest entry is real, then drop the imaginary part
        let (imax, _) = y
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        let phase = y[imax] / C64::new(y[imax].norm(), 0.0);
        let y = y.map(|z| C64::new((z / phase).re, 0.0));
        let nrm = y.norm();
        vectors[k] = Some(y / C64::new(nrm, 0.0));
    }
    for k in 0..r {
        if used[k] || raw[k].im <= 0.0 {
            continue;
        }
        let target = raw[k].conj();
        let mate = (0..r)
            .filter(|&j| !used[j] && j != k && raw[j].im < 0.0)
            .min_by(|&i, &j| (raw[i] - target).norm().total_cmp(&(raw[j] - target).norm()))
            .ok_or_else(|| {
                Error::Argument("pencil spectrum is not closed under conjugation".into())
            })?;
        used[k] = true;
        used[mate] = true;
        partner[k] = mate;
        partner[mate] = k;
        values[k] = raw[k];
        values[mate] = raw[k].conj();
        let y = eigvec(k);
        vectors[mate] = Some(y.map(|z| z.conj()));
        vectors[k] = Some(y);
    }
    if used.iter().any(|u| !u) {
        return Err(Error::Argument(
            "pencil spectrum is not closed under conjugation".into(),
        ));
    }

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| cmp_eig(&values[i], &values[j]));
    let mut inv = vec![0; r];
    for (pos, &k) in order.iter().enumerate() {
        inv[k] = pos;
    }
    let mut y = CMatrix::zeros(r, r);
    for (pos, &k) in order.iter().enumerate() {
        y.set_column(pos, vectors[k].as_ref().expect("every eigenvalue assigned"));
    }
    let eigenvalues: Vec<C64> = order.iter().map(|&k| values[k]).collect();
    let partner: Vec<usize> = order.iter().map(|&k| inv[partner[k]]).collect();

    let ey = to_complex(e) * &y;
    let x = ey
        .clone()
        .try_inverse()
        .ok_or(Error::Residual {
            what: "pencil_eig: defective pencil (eigenvector matrix singular)",
            residual: f64::INFINITY,
            tol: PENCIL_RESIDUAL_TOL,
        })?;
    let fac = SpectralFactorization {
        x,
        y,
        eigenvalues,
        partner,
    };
    // Backward error relative to ‖X‖‖·‖‖Y‖: the absolute residuals grow with
    // the eigenvector condition number even when the pencil is diagonalizable.
    let xn = fac.x.norm();
    let yn = fac.y.norm();
    let cond = xn * ey.norm();
    let ra = (&fac.x * to_complex(a) * &fac.y - fac.lambda()).norm();
    let re = (&fac.x * &ey - CMatrix::identity(r, r)).norm();
    let worst = (ra / (xn * a.norm().max(f64::MIN_POSITIVE) * yn)).max(re / (xn * e.norm() * yn));
    if !(cond <= PENCIL_COND_MAX) || !(worst <= PENCIL_RESIDUAL_TOL) {
        return Err(Error::Residual {
            what: "pencil_eig: defective or ill-conditioned pencil",
            residual: worst.max(cond * f64::EPSILON),
            tol: PENCIL_RESIDUAL_TOL,
        });
    }
    Ok(fac)
}

/// Factorization of `−σE − A` (and optionally of its transpose) for repeated
/// shifted solves.
pub struct ShiftedSolver {
    sigma: C64,
    op: CMatrix,
    op_norm: f64,
    lu: LU<C64, Dyn, Dyn>,
    lu_t: Option<LU<C64, Dyn, Dyn>>,
}

impl ShiftedSolver {
    pub fn new(e: &DMatrix<f64>, a: &DMatrix<f64>, sigma: C64, with_transpose: bool) -> Result<Self> {
        if !e.is_square() || a.shape() != e.shape() {
            return Err(Error::dim("shifted solve: E and A must be square and equal size"));
        }
        let op = to_complex(e) * (-sigma) - to_complex(a);
        let lu = op.clone().lu();
        if pivot_ratio(&lu) < SINGULAR_PIVOT_RATIO {
            return Err(Error::ShiftCollision {
                re: sigma.re,
                im: sigma.im,
            });
        }
        let lu_t = with_transpose.then(|| op.transpose().lu());
        Ok(Self {
            sigma,
            op_norm: op.norm(),
            op,
            lu,
            lu_t,
        })
    }

    pub fn sigma(&self) -> C64 {
        self.sigma
    }

    /// Solves `(−σE − A) z = rhs`; returns the solution and its relative
    /// residual.
    pub fn solve(&self, rhs: &CVector) -> Result<(CVector, f64)> {
        let z = self.lu.solve(rhs).ok_or(Error::ShiftCollision {
            re: self.sigma.re,
            im: self.sigma.im,
        })?;
        let res = (&self.op * &z - rhs).norm();
        let rel = relative_residual(res, rhs.norm(), self.op_norm, z.norm());
        Ok((z, rel))
    }

    /// Solves `(−σE − A)^T z = rhs` (plain transpose).
    pub fn solve_transpose(&self, rhs: &CVector) -> Result<(CVector, f64)> {
        let lu_t = self
            .lu_t
            .as_ref()
            .ok_or_else(|| Error::Argument("transpose factorization not requested".into()))?;
        let z = lu_t.solve(rhs).ok_or(Error::ShiftCollision {
            re: self.sigma.re,
            im: self.sigma.im,
        })?;
        let res = (self.op.tr_mul(&z) - rhs).norm();
        let rel = relative_residual(res, rhs.norm(), self.op_norm, z.norm());
        Ok((z, rel))
    }
}

/// Solves `(−σE − A) Z = RHS` for a block of right-hand sides.
pub fn solve_shifted(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma: C64,
    rhs: &CMatrix,
) -> Result<CMatrix> {
    let solver = ShiftedSolver::new(e, a, sigma, false)?;
    let mut z = CMatrix::zeros(e.nrows(), rhs.ncols());
    for j in 0..rhs.ncols() {
        let (col, _) = solver.solve(&rhs.column(j).into_owned())?;
        z.set_column(j, &col);
    }
    Ok(z)
}

/// Solves `−E V Λ − A V = RHS` for diagonal `Λ = diag(shifts)`, one shifted
/// solve per column. Returns `V` and the largest per-column relative residual.
pub fn solve_sylvester(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    shifts: &[C64],
    rhs: &CMatrix,
) -> Result<(CMatrix, f64)> {
    if rhs.ncols() != shifts.len() || rhs.nrows() != e.nrows() {
        return Err(Error::dim(format!(
            "solve_sylvester: rhs is {}x{}, expected {}x{}",
            rhs.nrows(),
            rhs.ncols(),
            e.nrows(),
            shifts.len()
        )));
    }
    let cols = map_indexed(shifts.len(), |i| -> Result<(CVector, f64)> {
        let solver = ShiftedSolver::new(e, a, shifts[i], false).map_err(|err| err.at_column(i))?;
        solver
            .solve(&rhs.column(i).into_owned())
            .map_err(|err| err.at_column(i))
    });
    let mut v = CMatrix::zeros(e.nrows(), shifts.len());
    let mut worst: f64 = 0.0;
    for (i, c) in cols.into_iter().enumerate() {
        let (col, res) = c?;
        worst = worst.max(res);
        v.set_column(i, &col);
    }
    Ok((v, worst))
}

/// Solution of a generalized Lyapunov equation with its relative residual.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    pub residual: f64,
}

/// Size at or below which the Kronecker-vectorized solve is used.
pub const LYAPUNOV_KRONECKER_MAX: usize = 20;

/// Solves `A P Eᵀ + E P Aᵀ + RHS = 0` for symmetric `RHS` and a stable
/// pencil `(A, E)`.
pub fn solve_lyapunov(
    a: &DMatrix<f64>,
    e: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<LyapunovSolution> {
    let n = a.nrows();
    if !a.is_square() || e.shape() != a.shape() || rhs.shape() != a.shape() {
        return Err(Error::dim("solve_lyapunov: A, E and RHS must be n x n"));
    }
    if n == 0 {
        return Ok(LyapunovSolution {
            p: DMatrix::zeros(0, 0),
            residual: 0.0,
        });
    }
    let e_lu = e.clone().lu();
    let m = e_lu
        .solve(a)
        .ok_or_else(|| Error::Singular("Lyapunov mass matrix".into()))?;

    let p = if n <= LYAPUNOV_KRONECKER_MAX {
        let abscissa = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if abscissa >= 0.0 {
            return Err(Error::Unstable(format!(
                "Lyapunov pencil has spectral abscissa {abscissa:.3e}"
            )));
        }
        let op = kron(e, a) + kron(a, e);
        let b = -crate::tensor_kron::vec(rhs);
        let x = op
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("Kronecker Lyapunov operator".into()))?;
        crate::tensor_kron::unvec(&x, n, n)
    } else {
        // M P + P Mᵀ = F with M = E⁻¹A, F = −E⁻¹ RHS E⁻ᵀ; complex Schur M = Q T Qᴴ
        let f1 = e_lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("Lyapunov mass matrix".into()))?;
        let f = -e_lu
            .solve(&f1.transpose())
            .ok_or_else(|| Error::Singular("Lyapunov mass matrix".into()))?
            .transpose();
        let schur = nalgebra::Schur::try_new(to_complex(&m), 1e-15, 100 * n)
            .ok_or_else(|| Error::Argument("Schur iteration did not converge".into()))?;
        let (q, t) = schur.unpack();
        let abscissa = (0..n).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
        if abscissa >= 0.0 {
            return Err(Error::Unstable(format!(
                "Lyapunov pencil has spectral abscissa {abscissa:.3e}"
            )));
        }
        let g = q.adjoint() * to_complex(&f) * &q;
        // T X + X Tᴴ = G, columns from last to first
        let mut x = CMatrix::zeros(n, n);
        for j in (0..n).rev() {
            let mut col: CVector = g.column(j).into_owned();
            for k in j + 1..n {
                let c = t[(j, k)].conj();
                if c != C64::new(0.0, 0.0) {
                    col -= x.column(k) * c;
                }
            }
            let shift = t[(j, j)].conj();
            for i in (0..n).rev() {
                let mut s = col[i];
                for l in i + 1..n {
                    s -= t[(i, l)] * col[l];
                }
                col[i] = s / (t[(i, i)] + shift);
            }
            x.set_column(j, &col);
        }
        (&q * x * q.adjoint()).map(|z| z.re)
    };
    let p = (&p + p.transpose()) * 0.5;
    let res = (a * &p * e.transpose() + e * &p * a.transpose() + rhs).norm();
    let residual = relative_residual(res, rhs.norm(), 2.0 * a.norm() * e.norm(), p.norm());
    if !(residual <= 1e-9) {
        return Err(Error::Residual {
            what: "solve_lyapunov",
            residual,
            tol: 1e-9,
        });
    }
    Ok(LyapunovSolution { p, residual })
}

/// Factorization of the single-shift saddle matrix
/// `K(σ) = [−σE₁₁ − A₁₁, A₁₂; A₂₁, 0]`; the adjoint system is `K(σ)ᵀ`.
pub struct SaddleSolver {
    sigma: C64,
    nv: usize,
    np: usize,
    k: CMatrix,
    k_norm: f64,
    lu: LU<C64, Dyn, Dyn>,
    lu_t: Option<LU<C64, Dyn, Dyn>>,
}

/// Solution of one saddle-point solve.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub v: CVector,
    pub xi: CVector,
    pub residual: f64,
}

impl SaddleSolver {
    pub fn new(
        e11: &DMatrix<f64>,
        a11: &DMatrix<f64>,
        a12: &DMatrix<f64>,
        a21: &DMatrix<f64>,
        sigma: C64,
        with_transpose: bool,
    ) -> Result<Self> {
        let nv = e11.nrows();
        let np = a12.ncols();
        if a11.shape() != (nv, nv) || a12.nrows() != nv || a21.shape() != (np, nv) {
            return Err(Error::dim("saddle blocks have inconsistent shapes"));
        }
        let mut k = CMatrix::zeros(nv + np, nv + np);
        let t = to_complex(e11) * (-sigma) - to_complex(a11);
        k.view_mut((0, 0), (nv, nv)).copy_from(&t);
        k.view_mut((0, nv), (nv, np)).copy_from(&to_complex(a12));
        k.view_mut((nv, 0), (np, nv)).copy_from(&to_complex(a21));
        let lu = k.clone().lu();
        if pivot_ratio(&lu) < SINGULAR_PIVOT_RATIO {
            return Err(Error::SingularSaddle {
                re: sigma.re,
                im: sigma.im,
            });
        }
        let lu_t = with_transpose.then(|| k.transpose().lu());
        Ok(Self {
            sigma,
            nv,
            np,
            k_norm: k.norm(),
            k,
            lu,
            lu_t,
        })
    }

    pub fn sigma(&self) -> C64 {
        self.sigma
    }

    fn finish(&self, rhs: &CVector, z: CVector, transpose: bool) -> SaddleSolution {
        let mut full = CVector::zeros(self.nv + self.np);
        full.rows_mut(0, self.nv).copy_from(rhs);
        let kz = if transpose {
            self.k.tr_mul(&z)
        } else {
            &self.k * &z
        };
        let res = (kz - &full).norm();
        SaddleSolution {
            residual: relative_residual(res, rhs.norm(), self.k_norm, z.norm()),
            v: z.rows(0, self.nv).into_owned(),
            xi: z.rows(self.nv, self.np).into_owned(),
        }
    }

    /// `[−σE₁₁ − A₁₁, A₁₂; A₂₁, 0] [v; ξ] = [f; 0]`.
    pub fn solve(&self, f: &CVector) -> Result<SaddleSolution> {
        if f.len() != self.nv {
            return Err(Error::dim("saddle rhs must have n_v entries"));
        }
        let mut full = CVector::zeros(self.nv + self.np);
        full.rows_mut(0, self.nv).copy_from(f);
        let z = self.lu.solve(&full).ok_or(Error::SingularSaddle {
            re: self.sigma.re,
            im: self.sigma.im,
        })?;
        Ok(self.finish(f, z, false))
    }

    /// `[(−σE₁₁ − A₁₁)ᵀ, A₂₁ᵀ; A₁₂ᵀ, 0] [w; ξ] = [g; 0]`.
    pub fn solve_adjoint(&self, g: &CVector) -> Result<SaddleSolution> {
        if g.len() != self.nv {
            return Err(Error::dim("saddle rhs must have n_v entries"));
        }
        let lu_t = self
            .lu_t
            .as_ref()
            .ok_or_else(|| Error::Argument("transpose factorization not requested".into()))?;
        let mut full = CVector::zeros(self.nv + self.np);
        full.rows_mut(0, self.nv).copy_from(g);
        let z = lu_t.solve(&full).ok_or(Error::SingularSaddle {
            re: self.sigma.re,
            im: self.sigma.im,
        })?;
        Ok(self.finish(g, z, true))
    }
}

/// One-shot saddle solve; see [`SaddleSolver::solve`].
pub fn solve_saddle(
    e11: &DMatrix<f64>,
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    sigma: C64,
    f: &CVector,
) -> Result<SaddleSolution> {
    SaddleSolver::new(e11, a11, a12, a21, sigma, false)?.solve(f)
}

/// One-shot adjoint saddle solve; see [`SaddleSolver::solve_adjoint`].
pub fn solve_saddle_adjoint(
    e11: &DMatrix<f64>,
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    sigma: C64,
    g: &CVector,
) -> Result<SaddleSolution> {
    SaddleSolver::new(e11, a11, a12, a21, sigma, true)?.solve_adjoint(g)
}

/// Real-valued convenience for [`SaddleSolver::solve`] with a real shift.
pub fn solve_saddle_real(
    e11: &DMatrix<f64>,
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    sigma: f64,
    f: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let s = solve_saddle(e11, a11, a12, a21, C64::new(sigma, 0.0), &to_complex_vec(f))?;
    Ok((s.v.map(|z| z.re), s.xi.map(|z| z.re)))
}
