//! Full and reduced QB realizations and Petrov-Galerkin projection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dae_transform::OutputRealization;
use crate::linalg::{rank, rcond, require_invertible, spectral_abscissa};
use crate::tensor_kron::{dense_symmetrize, quadratic_congruence, HessianTensor};
use crate::{Error, Result};

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dim(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_bilinear(n_list: &[DMatrix<f64>], n: usize, m: usize) -> Result<()> {
    if n_list.len() > m {
        return Err(Error::dim(format!(
            "{} bilinear matrices for {m} inputs",
            n_list.len()
        )));
    }
    for (k, nk) in n_list.iter().enumerate() {
        check_shape(&format!("N_{}", k + 1), nk, n, n)?;
    }
    Ok(())
}

/// QB ODE `E x' = A x + H (x ⊗ x) + Σ_k N_k x u_k + B u`, `y = C x`.
///
/// `n` may hold fewer than `m` bilinear matrices; missing trailing ones are
/// zero. The Hessian is symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QbOdeSystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub h: HessianTensor,
    pub n: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Diagnostics returned by [`QbOdeSystem::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub mass_rcond: f64,
    pub spectral_abscissa: f64,
    pub stable: bool,
    pub hessian_symmetric: bool,
    pub warnings: Vec<String>,
}

impl QbOdeSystem {
    pub fn new(
        e: Option<DMatrix<f64>>,
        a: DMatrix<f64>,
        h: HessianTensor,
        n: Vec<DMatrix<f64>>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = a.nrows();
        let e = e.unwrap_or_else(|| DMatrix::identity(dim, dim));
        check_shape("A", &a, dim, dim)?;
        check_shape("E", &e, dim, dim)?;
        if h.n() != dim {
            return Err(Error::dim(format!("H has n = {}, expected {dim}", h.n())));
        }
        let m = b.ncols();
        let p = c.nrows();
        if dim == 0 || m == 0 || p == 0 {
            return Err(Error::dim("n, m and p must be positive"));
        }
        check_shape("B", &b, dim, m)?;
        check_shape("C", &c, p, dim)?;
        check_bilinear(&n, dim, m)?;
        require_invertible(&e, "E")?;
        let h = if h.symmetric_flag() { h } else { h.symmetrize() };
        Ok(Self { e, a, h, n, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Conditioning of `E`, stability of `(A, E)` and Hessian symmetry. An
    /// unstable linear part is a warning, a singular `E` an error.
    pub fn validate(&self) -> Result<ValidationReport> {
        let mass_rcond = require_invertible(&self.e, "E")?;
        let abscissa = spectral_abscissa(&self.e, &self.a)?;
        let stable = abscissa < 0.0;
        let mut warnings = Vec::new();
        if !stable {
            warnings.push(format!(
                "unstable linear part (spectral abscissa {abscissa:.3e})"
            ));
        }
        Ok(ValidationReport {
            mass_rcond,
            spectral_abscissa: abscissa,
            stable,
            hessian_symmetric: self.h.symmetric_flag(),
            warnings,
        })
    }
}

/// Index-2 QB descriptor system
///
/// ```text
/// E11 v' = A11 v + A12 p + H (v ⊗ v) + Σ_k N_k v u_k + B1 u
///      0 = A21 v + B2 u
///      y = C1 v + C2 p + D u
/// ```
///
/// `d` is an optional direct feedthrough (zero for ingested systems; the
/// `B2 != 0` homogenization produces one).
#[derive(Debug, Clone, PartialEq)]
pub struct QbDaeSystem {
    pub e11: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub h: HessianTensor,
    pub n: Vec<DMatrix<f64>>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub v0: DVector<f64>,
}

/// Blocks of a [`QbDaeSystem`] before validation. Optional blocks default
/// to zero.
#[derive(Debug, Clone)]
pub struct DaeBlocks {
    pub e11: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub h: Option<HessianTensor>,
    pub n: Vec<DMatrix<f64>>,
    pub b1: DMatrix<f64>,
    pub b2: Option<DMatrix<f64>>,
    pub c1: DMatrix<f64>,
    pub c2: Option<DMatrix<f64>>,
    pub d: Option<DMatrix<f64>>,
    pub v0: Option<DVector<f64>>,
}

impl QbDaeSystem {
    pub fn new(blocks: DaeBlocks) -> Result<Self> {
        let nv = blocks.e11.nrows();
        let np = blocks.a12.ncols();
        let m = blocks.b1.ncols();
        let p = blocks.c1.nrows();
        if m == 0 || p == 0 {
            return Err(Error::dim("m and p must be positive"));
        }
        if np == 0 || np >= nv {
            return Err(Error::dim(format!("need 0 < n_p < n_v, got n_p = {np}, n_v = {nv}")));
        }
        check_shape("E11", &blocks.e11, nv, nv)?;
        check_shape("A11", &blocks.a11, nv, nv)?;
        check_shape("A12", &blocks.a12, nv, np)?;
        check_shape("A21", &blocks.a21, np, nv)?;
        check_shape("B1", &blocks.b1, nv, m)?;
        check_shape("C1", &blocks.c1, p, nv)?;
        check_bilinear(&blocks.n, nv, m)?;
        let h = blocks.h.unwrap_or_else(|| HessianTensor::zeros(nv));
        if h.n() != nv {
            return Err(Error::dim(format!("H has n = {}, expected n_v = {nv}", h.n())));
        }
        let h = if h.symmetric_flag() { h } else { h.symmetrize() };
        let b2 = blocks.b2.unwrap_or_else(|| DMatrix::zeros(np, m));
        check_shape("B2", &b2, np, m)?;
        let c2 = blocks.c2.unwrap_or_else(|| DMatrix::zeros(p, np));
        check_shape("C2", &c2, p, np)?;
        let d = blocks.d.unwrap_or_else(|| DMatrix::zeros(p, m));
        check_shape("D", &d, p, m)?;
        let v0 = blocks.v0.unwrap_or_else(|| DVector::zeros(nv));
        if v0.len() != nv {
            return Err(Error::dim(format!("v0 has length {}, expected {nv}", v0.len())));
        }
        let sys = Self {
            e11: blocks.e11,
            a11: blocks.a11,
            a12: blocks.a12,
            a21: blocks.a21,
            h,
            n: blocks.n,
            b1: blocks.b1,
            b2,
            c1: blocks.c1,
            c2,
            d,
            v0,
        };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let np = self.np();
        for (name, m) in [("A12", &self.a12), ("A21", &self.a21)] {
            let r = rank(m, 1e-12);
            if r != np {
                return Err(Error::Argument(format!(
                    "{name} must have full rank {np}, found rank {r}"
                )));
            }
        }
        require_invertible(&self.e11, "E11")?;
        let s = self.schur_complement()?;
        if rcond(&s) < 1e-14 {
            return Err(Error::Singular("S = A21 E11^-1 A12".into()));
        }
        if self.b2.iter().all(|&x| x == 0.0) {
            let c = (&self.a21 * &self.v0).norm();
            if c > 1e-10 * self.a21.norm() * self.v0.norm().max(1.0) {
                return Err(Error::Argument(format!(
                    "inconsistent initial velocity: |A21 v0| = {c:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn nv(&self) -> usize {
        self.e11.nrows()
    }

    pub fn np(&self) -> usize {
        self.a12.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.b1.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c1.nrows()
    }

    pub fn has_b2(&self) -> bool {
        self.b2.iter().any(|&x| x != 0.0)
    }

    /// `A21 E11⁻¹` computed by a solve against `E11ᵀ`.
    pub fn a21_e11_inv(&self) -> Result<DMatrix<f64>> {
        let t = self
            .e11
            .transpose()
            .lu()
            .solve(&self.a21.transpose())
            .ok_or_else(|| Error::Singular("E11".into()))?;
        Ok(t.transpose())
    }

    /// `S = A21 E11⁻¹ A12`.
    pub fn schur_complement(&self) -> Result<DMatrix<f64>> {
        Ok(self.a21_e11_inv()? * &self.a12)
    }
}

/// Reduced QB system
///
/// ```text
/// Ê x̂' = Â x̂ + Ĥ (x̂ ⊗ x̂) + Σ_k N̂_k x̂ u_k + B̂ u
///    ŷ = Ĉ x̂ + Ĉ_H (x̂ ⊗ x̂) + Σ_k Ĉ_{N_k} x̂ u_k + D̂ u
/// ```
///
/// together with the bases `V`, `W` it was projected with. The output
/// corrections are zero unless the model came from a descriptor system with
/// a pressure output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedQbSystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub n: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub ch: DMatrix<f64>,
    pub cn: Vec<DMatrix<f64>>,
    pub d: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl ReducedQbSystem {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// The state equation as a [`QbOdeSystem`] (output corrections dropped).
    pub fn to_ode(&self) -> Result<QbOdeSystem> {
        QbOdeSystem::new(
            Some(self.e.clone()),
            self.a.clone(),
            HessianTensor::from_dense_mode1(&self.h)?,
            self.n.clone(),
            self.b.clone(),
            self.c.clone(),
        )
    }

    /// Checks the stored shapes against each other.
    pub fn check(&self) -> Result<()> {
        let r = self.order();
        let m = self.inputs();
        let p = self.outputs();
        check_shape("Ehat", &self.e, r, r)?;
        check_shape("Ahat", &self.a, r, r)?;
        check_shape("Hhat", &self.h, r, r * r)?;
        check_shape("Chat", &self.c, p, r)?;
        check_shape("CHhat", &self.ch, p, r * r)?;
        check_shape("Dhat", &self.d, p, m)?;
        check_bilinear(&self.n, r, m)?;
        if self.cn.len() > m {
            return Err(Error::dim("more output bilinear terms than inputs"));
        }
        for c in &self.cn {
            check_shape("CNhat", c, p, r)?;
        }
        if self.v.ncols() != r || self.w.ncols() != r || self.v.nrows() != self.w.nrows() {
            return Err(Error::dim("V and W must both have r columns and equal height"));
        }
        Ok(())
    }
}

/// Petrov-Galerkin projection `Ê = WᵀEV`, `Â = WᵀAV`, `Ĥ = WᵀH(V⊗V)`,
/// `N̂_k = WᵀN_kV`, `B̂ = WᵀB`, `Ĉ = CV`, without `(WᵀV)⁻¹` normalization.
/// `Ĥ` is re-symmetrized.
pub fn project_ode(sys: &QbOdeSystem, v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<ReducedQbSystem> {
    let n = sys.order();
    let r = v.ncols();
    if v.nrows() != n || w.nrows() != n || w.ncols() != r {
        return Err(Error::dim(format!(
            "bases are {}x{} and {}x{}, expected {n}x{r}",
            v.nrows(),
            v.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if r == 0 {
        return Err(Error::dim("reduced order must be positive"));
    }
    for (name, basis) in [("V", v), ("W", w)] {
        let k = rank(basis, 1e-12);
        if k < r {
            return Err(Error::Argument(format!(
                "{name} is rank deficient (rank {k} < {r})"
            )));
        }
    }
    let wt = w.transpose();
    let h = dense_symmetrize(&(&wt * sys.h.congruence(1, v, v)?));
    let m = sys.inputs();
    let p = sys.outputs();
    Ok(ReducedQbSystem {
        e: &wt * &sys.e * v,
        a: &wt * &sys.a * v,
        h,
        n: sys.n.iter().map(|nk| &wt * nk * v).collect(),
        b: &wt * &sys.b,
        c: &sys.c * v,
        ch: DMatrix::zeros(p, r * r),
        cn: Vec::new(),
        d: DMatrix::zeros(p, m),
        v: v.clone(),
        w: w.clone(),
    })
}

/// `(Ĉ_H, [Ĉ_{N_k}], D̂)`.
pub type ProjectedOutputs = (DMatrix<f64>, Vec<DMatrix<f64>>, DMatrix<f64>);

/// Reduced output corrections `Ĉ_H = 𝒞_H (V⊗V)`, `Ĉ_{N_k} = 𝒞_{N_k} V`,
/// `D̂ = 𝒟`.
pub fn project_dae_outputs(
    corr: &OutputRealization,
    v: &DMatrix<f64>,
) -> Result<ProjectedOutputs> {
    let nv = corr.ccal.ncols();
    if v.nrows() != nv {
        return Err(Error::dim(format!(
            "basis has {} rows, output realization expects {nv}",
            v.nrows()
        )));
    }
    let ch = quadratic_congruence(&corr.ch, v, v)?;
    let cn = corr.cn.iter().map(|c| c * v).collect();
    Ok((ch, cn, corr.d.clone()))
}
