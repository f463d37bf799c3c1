//! Index-2 machinery: the oblique projectors, pressure elimination, the
//! output realization, the explicit projected ODE and `B2 != 0`
//! homogenization.
//!
//! With `S = A21 E11⁻¹ A12` the projectors are
//!
//! ```text
//! Π_l = I − A12 S⁻¹ A21 E11⁻¹,   Π_r = I − E11⁻¹ A12 S⁻¹ A21,
//! ```
//!
//! so that `Π_l E11 = E11 Π_r`, `range Π_r = ker A21` and `ker Π_l = range A12`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::rcond;
use crate::sparse::CooMatrix;
use crate::system_model::{DaeBlocks, QbDaeSystem, QbOdeSystem};
use crate::tensor_kron::HessianTensor;
use crate::{Error, Result};

/// Largest `n_v` for which dense projectors are formed.
pub const EXPLICIT_SIZE_CAP: usize = 400;

/// Rank factorizations `Π_l = θ_l φ_lᵀ`, `Π_r = θ_r φ_rᵀ` with `φᵀθ = I`.
#[derive(Debug, Clone)]
pub struct ProjectorRealization {
    pub theta_l: DMatrix<f64>,
    pub phi_l: DMatrix<f64>,
    pub theta_r: DMatrix<f64>,
    pub phi_r: DMatrix<f64>,
    pub pi_l: DMatrix<f64>,
    pub pi_r: DMatrix<f64>,
}

/// Largest residuals of the projector identities, each relative to the
/// natural scale of the identity.
#[derive(Debug, Clone, Copy)]
pub struct ProjectorResiduals {
    pub factorization: f64,
    pub biorthogonality: f64,
    pub idempotence: f64,
    pub intertwining: f64,
    pub kernel: f64,
    pub range: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        [
            self.factorization,
            self.biorthogonality,
            self.idempotence,
            self.intertwining,
            self.kernel,
            self.range,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

impl ProjectorRealization {
    /// Evaluates all six projector identities against `sys`.
    pub fn residuals(&self, sys: &QbDaeSystem) -> Result<ProjectorResiduals> {
        let q = self.theta_l.ncols();
        let iq = DMatrix::<f64>::identity(q, q);
        let factorization = rel((&self.theta_l * self.phi_l.transpose() - &self.pi_l).norm(), self.pi_l.norm())
            .max(rel((&self.theta_r * self.phi_r.transpose() - &self.pi_r).norm(), self.pi_r.norm()));
        let biorthogonality = (self.theta_l.tr_mul(&self.phi_l) - &iq)
            .norm()
            .max((self.theta_r.tr_mul(&self.phi_r) - &iq).norm());
        let idempotence = rel((&self.pi_l * &self.pi_l - &self.pi_l).norm(), self.pi_l.norm())
            .max(rel((&self.pi_r * &self.pi_r - &self.pi_r).norm(), self.pi_r.norm()));
        let intertwining = rel(
            (&self.pi_l * &sys.e11 - &sys.e11 * &self.pi_r).norm(),
            self.pi_l.norm() * sys.e11.norm(),
        );
        let kernel = rel((&self.pi_l * &sys.a12).norm(), self.pi_l.norm() * sys.a12.norm());
        let k = sys.a21_e11_inv()?;
        let range = rel((&k * &self.pi_l).norm(), k.norm() * self.pi_l.norm());
        Ok(ProjectorResiduals {
            factorization,
            biorthogonality,
            idempotence,
            intertwining,
            kernel,
            range,
        })
    }
}

fn factor(pi: &DMatrix<f64>, q: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = pi.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    // singular values are unsorted in nalgebra; order them
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let tol = 1e-8 * sv[0].max(1.0);
    let found = sv.iter().filter(|&&s| s > tol).count();
    if found != q {
        return Err(Error::RankDefect { expected: q, found });
    }
    let n = pi.nrows();
    let mut phi = DMatrix::zeros(n, q);
    for (c, &i) in idx.iter().take(q).enumerate() {
        phi.set_column(c, &vt.row(i).transpose());
    }
    // Π V_q equals U_q Σ_q but does not inherit the slow convergence of the
    // SVD inside the cluster of unit singular values.
    let theta = pi * &phi;
    Ok((theta, phi))
}

/// Forms `Π_l`, `Π_r` densely and factors each through a thin SVD truncated
/// to rank `n_v − n_p`.
pub fn build_projectors(sys: &QbDaeSystem) -> Result<ProjectorRealization> {
    let nv = sys.nv();
    if nv > EXPLICIT_SIZE_CAP {
        return Err(Error::Argument(format!(
            "explicit projectors limited to n_v <= {EXPLICIT_SIZE_CAP}, got {nv}"
        )));
    }
    let q = nv - sys.np();
    let s = sys.schur_complement()?;
    if rcond(&s) < 1e-14 {
        return Err(Error::Singular("S = A21 E11^-1 A12".into()));
    }
    let s_lu = s.lu();
    let k = sys.a21_e11_inv()?;
    let s_inv_k = s_lu
        .solve(&k)
        .ok_or_else(|| Error::Singular("S".into()))?;
    let s_inv_a21 = s_lu
        .solve(&sys.a21)
        .ok_or_else(|| Error::Singular("S".into()))?;
    let e11_inv_a12 = sys
        .e11
        .clone()
        .lu()
        .solve(&sys.a12)
        .ok_or_else(|| Error::Singular("E11".into()))?;
    let id = DMatrix::<f64>::identity(nv, nv);
    let pi_l = &id - &sys.a12 * s_inv_k;
    let pi_r = &id - e11_inv_a12 * s_inv_a21;
    let (theta_l, phi_l) = factor(&pi_l, q)?;
    let (theta_r, phi_r) = factor(&pi_r, q)?;
    Ok(ProjectorRealization {
        theta_l,
        phi_l,
        theta_r,
        phi_r,
        pi_l,
        pi_r,
    })
}

/// Output map of the pressure-eliminated system:
///
/// ```text
/// y = 𝒞 v + 𝒞_H (v ⊗ v) + Σ_k 𝒞_{N_k} v u_k + 𝒟 u
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRealization {
    pub ccal: DMatrix<f64>,
    pub ch: CooMatrix,
    pub cn: Vec<DMatrix<f64>>,
    pub d: DMatrix<f64>,
}

impl OutputRealization {
    pub fn is_linear(&self) -> bool {
        self.ch.nnz() == 0 && self.cn.iter().all(|c| c.iter().all(|&x| x == 0.0))
    }
}

/// `−C2 S⁻¹ A21 E11⁻¹`, the row operator that turns a velocity right-hand
/// side into its pressure contribution to the output.
fn pressure_output_operator(sys: &QbDaeSystem) -> Result<DMatrix<f64>> {
    let k = sys.a21_e11_inv()?;
    let s = sys.schur_complement()?;
    let s_inv_k = s
        .lu()
        .solve(&k)
        .ok_or_else(|| Error::Singular("S = A21 E11^-1 A12".into()))?;
    Ok(-(&sys.c2 * s_inv_k))
}

/// Eliminates the pressure from the output equation. Requires `B2 = 0`.
pub fn output_realization(sys: &QbDaeSystem) -> Result<OutputRealization> {
    if sys.has_b2() {
        return Err(Error::Argument(
            "output realization needs B2 = 0; homogenize first".into(),
        ));
    }
    let r = pressure_output_operator(sys)?;
    Ok(OutputRealization {
        ccal: &sys.c1 + &r * &sys.a11,
        ch: sys.h.left_multiply(&r)?,
        cn: sys.n.iter().map(|nk| &r * nk).collect(),
        d: &sys.d + &r * &sys.b1,
    })
}

/// Velocity right-hand side without the pressure term:
/// `A11 v + H(v⊗v) + Σ N_k v u_k + B1 u`.
pub(crate) fn velocity_rhs(sys: &QbDaeSystem, v: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let mut f = &sys.a11 * v + sys.h.apply(v, v)? + &sys.b1 * u;
    for (k, nk) in sys.n.iter().enumerate() {
        f += nk * v * u[k];
    }
    Ok(f)
}

/// Pressure consistent with the hidden constraint
/// `A21 E11⁻¹ (f + A12 p) = −B2 u̇`, i.e.
/// `p = −S⁻¹ (A21 E11⁻¹ f + B2 u̇)`.
pub(crate) fn consistent_pressure(
    sys: &QbDaeSystem,
    v: &DVector<f64>,
    u: &DVector<f64>,
    du: &DVector<f64>,
) -> Result<DVector<f64>> {
    let f = velocity_rhs(sys, v, u)?;
    let rhs = sys.a21_e11_inv()? * f + &sys.b2 * du;
    let p = sys
        .schur_complement()?
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("S = A21 E11^-1 A12".into()))?;
    Ok(-p)
}

/// `p = −S⁻¹ A21 E11⁻¹ (A11 v + H(v⊗v) + Σ N_k v u_k + B1 u)` for `B2 = 0`.
pub fn recover_pressure(sys: &QbDaeSystem, v: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if sys.has_b2() {
        return Err(Error::Argument("recover_pressure needs B2 = 0".into()));
    }
    if v.len() != sys.nv() || u.len() != sys.inputs() {
        return Err(Error::dim("recover_pressure: v or u has the wrong length"));
    }
    consistent_pressure(sys, v, u, &DVector::zeros(sys.inputs()))
}

/// The `(n_v − n_p)`-dimensional ODE with `Ē = φ_lᵀE11θ_r`, `Ā = φ_lᵀA11θ_r`,
/// `H̄ = φ_lᵀH(θ_r⊗θ_r)`, `N̄_k = φ_lᵀN_kθ_r`, `B̄ = φ_lᵀB1` and output
/// `ȳ = 𝒞θ_r ṽ`. Returns the system and the lift `θ_r` (`v = θ_r ṽ`).
pub fn explicit_ode(sys: &QbDaeSystem, proj: &ProjectorRealization) -> Result<(QbOdeSystem, DMatrix<f64>)> {
    if sys.has_b2() {
        return Err(Error::Argument("explicit ODE needs B2 = 0".into()));
    }
    let out = output_realization(sys)?;
    let tr = &proj.theta_r;
    let plt = proj.phi_l.transpose();
    let hbar = &plt * sys.h.congruence(1, tr, tr)?;
    let ode = QbOdeSystem::new(
        Some(&plt * &sys.e11 * tr),
        &plt * &sys.a11 * tr,
        HessianTensor::from_dense_mode1(&hbar)?,
        sys.n.iter().map(|nk| &plt * nk * tr).collect(),
        &plt * &sys.b1,
        &out.ccal * tr,
    )?;
    Ok((ode, tr.clone()))
}

/// A `B2 = 0` descriptor system equivalent to one with `B2 != 0`.
///
/// With `v = v_m + Ω u` the inputs become `[u; u ⊗ u; u̇]` (`m + m² + m`
/// channels): `system.b1 = [ℬ1, ℬ_u, −E11 Ω]`, the bilinear matrices are
/// `𝒩_k` and the output feedthrough `system.d = [C1 Ω, 0, 0]`.
#[derive(Debug, Clone)]
pub struct HomogenizedDae {
    pub system: QbDaeSystem,
    pub omega: DMatrix<f64>,
    pub ncal: Vec<DMatrix<f64>>,
    pub bcal1: DMatrix<f64>,
    pub bu: DMatrix<f64>,
    /// Coefficient `−C2 S⁻¹ B2` of `u̇` in the output.
    pub du_feedthrough: DMatrix<f64>,
    /// Number of original inputs `m`.
    pub base_inputs: usize,
}

/// Homogenizes with `u(0) = 0`; see [`homogenize_b2_at`].
pub fn homogenize_b2(sys: &QbDaeSystem) -> Result<HomogenizedDae> {
    homogenize_b2_at(sys, &DVector::zeros(sys.inputs()))
}

/// Homogenizes a `B2 != 0` system whose input starts at `u0`; the new
/// initial state is `v0 − Ω u0`.
pub fn homogenize_b2_at(sys: &QbDaeSystem, u0: &DVector<f64>) -> Result<HomogenizedDae> {
    if !sys.has_b2() {
        return Err(Error::Argument("system is already homogeneous (B2 = 0)".into()));
    }
    let m = sys.inputs();
    if u0.len() != m {
        return Err(Error::dim("u0 length must equal the number of inputs"));
    }
    let nv = sys.nv();
    let s = sys.schur_complement()?;
    let s_inv_b2 = s
        .lu()
        .solve(&sys.b2)
        .ok_or_else(|| Error::Singular("S = A21 E11^-1 A12".into()))?;
    let omega = -sys
        .e11
        .clone()
        .lu()
        .solve(&(&sys.a12 * &s_inv_b2))
        .ok_or_else(|| Error::Singular("E11".into()))?;

    let hd = sys.h.to_dense_mode1();
    let mut ncal = Vec::with_capacity(m);
    for k in 0..m {
        let ok = omega.column(k).into_owned();
        // H (I ⊗ Ω_k + Ω_k ⊗ I) is the Jacobian of x ↦ H(x ⊗ x) at Ω_k
        let mut nk = sys.h.jacobian(&ok);
        if let Some(orig) = sys.n.get(k) {
            nk += orig;
        }
        ncal.push(nk);
    }
    let bcal1 = &sys.b1 + &sys.a11 * &omega;
    let mut bu = hd * omega.kronecker(&omega);
    for k in 0..m {
        if let Some(nk) = sys.n.get(k) {
            let blk = nk * &omega;
            let mut view = bu.columns_mut(k * m, m);
            view += blk;
        }
    }
    let e_omega = &sys.e11 * &omega;
    let m_aug = m + m * m + m;
    let mut b1_aug = DMatrix::zeros(nv, m_aug);
    b1_aug.columns_mut(0, m).copy_from(&bcal1);
    b1_aug.columns_mut(m, m * m).copy_from(&bu);
    b1_aug.columns_mut(m + m * m, m).copy_from(&(-e_omega));
    let p = sys.outputs();
    let mut d = DMatrix::zeros(p, m_aug);
    d.columns_mut(0, m).copy_from(&(&sys.d + &sys.c1 * &omega));
    let du_feedthrough = -(&sys.c2 * &s_inv_b2);

    let system = QbDaeSystem::new(DaeBlocks {
        e11: sys.e11.clone(),
        a11: sys.a11.clone(),
        a12: sys.a12.clone(),
        a21: sys.a21.clone(),
        h: Some(sys.h.clone()),
        n: ncal.clone(),
        b1: b1_aug,
        b2: None,
        c1: sys.c1.clone(),
        c2: Some(sys.c2.clone()),
        d: Some(d),
        v0: Some(&sys.v0 - &omega * u0),
    })?;
    Ok(HomogenizedDae {
        system,
        omega,
        ncal,
        bcal1,
        bu,
        du_feedthrough,
        base_inputs: m,
    })
}
