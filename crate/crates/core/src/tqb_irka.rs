//! Truncated QB-IRKA.
//!
//! One driver runs the fixed-point iteration in the full (or velocity)
//! space. The three public entry points differ only in how a shifted solve
//! `(−σE − A) z = f` and its transpose are carried out:
//!
//! * ODE: direct LU of the shifted matrix;
//! * descriptor, explicit: `z = θ_r (−σĒ − Ā)⁻¹ φ_lᵀ f` on the projected
//!   pencil, adjoint `z = φ_l (−σĒ − Ā)⁻ᵀ θ_rᵀ g`;
//! * descriptor, saddle: the leading block of a saddle-point solve on the
//!   original blocks, which yields the same vectors without projectors.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dae_transform::{build_projectors, output_realization};
use crate::dense_solvers::{pencil_eig, SaddleSolver, ShiftedSolver};
use crate::linalg::{cmp_eig, orthonormalize, pencil_eigenvalues, to_complex};
use crate::par::map_indexed;
use crate::system_model::{project_dae_outputs, project_ode, QbDaeSystem, QbOdeSystem, ReducedQbSystem};
use crate::tensor_kron::dense_mode2;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Starting point of the iteration.
#[derive(Debug, Clone, Default)]
pub enum InitialGuess {
    /// `Ê = I`, `Â = diag(−10^{−1 + 3i/(r−1)})`, seeded standard-normal
    /// `B̂` and `Ĉ` (drawn in that order, column-major), `Ĥ = 0`, `N̂ = 0`.
    #[default]
    RandomLinear,
    /// Start from a given reduced model of order `r`.
    Supplied(Box<ReducedQbSystem>),
}

#[derive(Debug, Clone)]
pub struct IrkaConfig {
    pub r: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub init: InitialGuess,
}

impl IrkaConfig {
    pub fn new(r: usize) -> Self {
        Self {
            r,
            tol: 1e-5,
            max_iters: 50,
            seed: 0,
            init: InitialGuess::RandomLinear,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.r == 0 || self.r > n {
            return Err(Error::Argument(format!(
                "reduced order must satisfy 1 <= r <= {n}, got {}",
                self.r
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// One sweep of the iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IrkaIteration {
    pub iteration: usize,
    /// Sorted eigenvalues of `(Â, Ê)` after the sweep, as `[re, im]`.
    pub eigenvalues: Vec<[f64; 2]>,
    pub relative_change: f64,
    /// Largest relative residual over all shifted solves of the sweep.
    pub max_residual: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrkaTrace {
    pub iterations: Vec<IrkaIteration>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl IrkaTrace {
    pub fn relative_changes(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.relative_change).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.iterations.iter().map(|it| it.max_residual).fold(0.0, f64::max)
    }
}

/// Receives the orthonormal bases `V`, `W` of every sweep.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &DMatrix<f64>, &DMatrix<f64>);

trait Route: Sync {
    type Factor: Send + Sync;
    fn factor(&self, sigma: C64) -> Result<Self::Factor>;
    fn primal(&self, f: &Self::Factor, rhs: &CVector) -> Result<(CVector, f64)>;
    fn adjoint(&self, f: &Self::Factor, rhs: &CVector) -> Result<(CVector, f64)>;
}

struct Direct<'a> {
    e: &'a DMatrix<f64>,
    a: &'a DMatrix<f64>,
}

impl Route for Direct<'_> {
    type Factor = ShiftedSolver;

    fn factor(&self, sigma: C64) -> Result<ShiftedSolver> {
        ShiftedSolver::new(self.e, self.a, sigma, true)
    }

    fn primal(&self, f: &ShiftedSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        f.solve(rhs)
    }

    fn adjoint(&self, f: &ShiftedSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        f.solve_transpose(rhs)
    }
}

struct Projected {
    ebar: DMatrix<f64>,
    abar: DMatrix<f64>,
    theta_r: CMatrix,
    phi_l: CMatrix,
}

impl Route for Projected {
    type Factor = ShiftedSolver;

    fn factor(&self, sigma: C64) -> Result<ShiftedSolver> {
        ShiftedSolver::new(&self.ebar, &self.abar, sigma, true)
    }

    fn primal(&self, f: &ShiftedSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        let (z, res) = f.solve(&self.phi_l.tr_mul(rhs))?;
        Ok((&self.theta_r * z, res))
    }

    fn adjoint(&self, f: &ShiftedSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        let (z, res) = f.solve_transpose(&self.theta_r.tr_mul(rhs))?;
        Ok((&self.phi_l * z, res))
    }
}

struct Saddle<'a> {
    sys: &'a QbDaeSystem,
}

impl Route for Saddle<'_> {
    type Factor = SaddleSolver;

    fn factor(&self, sigma: C64) -> Result<SaddleSolver> {
        let s = self.sys;
        SaddleSolver::new(&s.e11, &s.a11, &s.a12, &s.a21, sigma, true)
    }

    fn primal(&self, f: &SaddleSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        let s = f.solve(rhs)?;
        Ok((s.v, s.residual))
    }

    fn adjoint(&self, f: &SaddleSolver, rhs: &CVector) -> Result<(CVector, f64)> {
        let s = f.solve_adjoint(rhs)?;
        Ok((s.v, s.residual))
    }
}

fn factor_with_retry<R: Route>(route: &R, sigma: C64) -> Result<R::Factor> {
    match route.factor(sigma) {
        Err(Error::ShiftCollision { .. }) | Err(Error::SingularSaddle { .. }) => {
            route.factor(sigma + 1e-8 * (1.0 + sigma.norm()))
        }
        other => other,
    }
}

/// Solves every representative column of `rhs` (one per conjugate pair) and
/// fills the partners by conjugation.
fn solve_block<R: Route>(
    route: &R,
    factors: &[R::Factor],
    reps: &[usize],
    partner: &[usize],
    rhs: &CMatrix,
    adjoint: bool,
) -> Result<(CMatrix, f64)> {
    let cols = map_indexed(reps.len(), |j| {
        let i = reps[j];
        let b = rhs.column(i).into_owned();
        let out = if adjoint {
            route.adjoint(&factors[j], &b)
        } else {
            route.primal(&factors[j], &b)
        };
        out.map_err(|e| e.at_column(i))
    });
    let mut z = CMatrix::zeros(0, 0);
    let mut worst: f64 = 0.0;
    for (j, c) in cols.into_iter().enumerate() {
        let (col, res) = c?;
        if z.ncols() == 0 {
            z = CMatrix::zeros(col.len(), rhs.ncols());
        }
        worst = worst.max(res);
        let i = reps[j];
        if partner[i] != i {
            z.set_column(partner[i], &col.map(|x| x.conj()));
        }
        z.set_column(i, &col);
    }
    Ok((z, worst))
}

/// Real basis with the same span: `Re v` for real shifts, `(Re v, Im v)` in
/// the slots of a conjugate pair.
fn realify(z: &CMatrix, eig: &[C64], partner: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for i in 0..z.ncols() {
        let p = partner[i];
        if p == i {
            out.set_column(i, &z.column(i).map(|x| x.re));
        } else if eig[i].im > 0.0 {
            let (lo, hi) = (i.min(p), i.max(p));
            out.set_column(lo, &z.column(i).map(|x| x.re));
            out.set_column(hi, &z.column(i).map(|x| x.im));
        }
    }
    out
}

/// `X Ĥ (Y ⊗ Y)` for a dense `r × r²` tensor.
fn transform_tensor(h: &DMatrix<f64>, x: &CMatrix, y: &CMatrix) -> CMatrix {
    let r = h.nrows();
    let mut t = CMatrix::zeros(r, r * r);
    for i in 0..r {
        let mi = DMatrix::from_fn(r, r, |j, k| h[(i, j * r + k)]);
        let g = y.transpose() * to_complex(&mi) * y;
        for a in 0..r {
            for b in 0..r {
                t[(i, a * r + b)] = g[(a, b)];
            }
        }
    }
    x * t
}

fn initial_guess(cfg: &IrkaConfig, m: usize, p: usize, n_bilinear: usize) -> ReducedQbSystem {
    let r = cfg.r;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let poles: Vec<f64> = (0..r)
        .map(|i| {
            if r == 1 {
                -1.0
            } else {
                -(10f64).powf(-1.0 + 3.0 * i as f64 / (r - 1) as f64)
            }
        })
        .collect();
    let mut draw = |rows: usize, cols: usize| {
        let mut m = DMatrix::zeros(rows, cols);
        for c in 0..cols {
            for rr in 0..rows {
                m[(rr, c)] = StandardNormal.sample(&mut rng);
            }
        }
        m
    };
    let b = draw(r, m);
    let c = draw(p, r);
    ReducedQbSystem {
        e: DMatrix::identity(r, r),
        a: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(poles)),
        h: DMatrix::zeros(r, r * r),
        n: vec![DMatrix::zeros(r, r); n_bilinear],
        b,
        c,
        ch: DMatrix::zeros(p, r * r),
        cn: Vec::new(),
        d: DMatrix::zeros(p, m),
        v: DMatrix::zeros(0, r),
        w: DMatrix::zeros(0, r),
    }
}

fn relative_change(new: &[C64], old: &[C64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let base: f64 = old.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// One sweep: new bases `V`, `W` from the current reduced model.
fn sweep<R: Route>(
    sys: &QbOdeSystem,
    route: &R,
    red: &ReducedQbSystem,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let r = red.order();
    let fac = pencil_eig(&red.e, &red.a)?;
    let (x, y) = (&fac.x, &fac.y);
    let eig = &fac.eigenvalues;
    let partner = &fac.partner;
    let reps: Vec<usize> = (0..r).filter(|&i| partner[i] == i || eig[i].im > 0.0).collect();

    let bt = x * to_complex(&red.b);
    let ct = to_complex(&red.c) * y;
    let nt: Vec<CMatrix> = red.n.iter().map(|nk| x * to_complex(nk) * y).collect();
    let quadratic = !sys.h.is_zero() && red.h.iter().any(|&v| v != 0.0);
    let bilinear = !sys.n.is_empty() && nt.iter().any(|m| m.iter().any(|z| z.norm() != 0.0));

    let factors: Vec<R::Factor> = map_indexed(reps.len(), |j| {
        factor_with_retry(route, eig[reps[j]]).map_err(|e| e.at_column(reps[j]))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let rhs_v1 = to_complex(&sys.b) * bt.transpose();
    let rhs_w1 = to_complex(&sys.c).tr_mul(&ct);
    let (v1, res_v1) = solve_block(route, &factors, &reps, partner, &rhs_v1, false)?;
    let (w1, res_w1) = solve_block(route, &factors, &reps, partner, &rhs_w1, true)?;
    let mut worst = res_v1.max(res_w1);
    let mut v = v1.clone();
    let mut w = w1.clone();

    if quadratic || bilinear {
        let n = sys.order();
        let mut rhs_v2 = CMatrix::zeros(n, r);
        let mut rhs_w2 = CMatrix::zeros(n, r);
        if quadratic {
            let ht = transform_tensor(&red.h, x, y);
            rhs_v2 += sys.h.congruence(1, &v1, &v1)? * ht.transpose();
            rhs_w2 += sys.h.congruence(2, &w1, &v1)? * dense_mode2(&ht).transpose() * C64::new(2.0, 0.0);
        }
        for (k, ntk) in nt.iter().enumerate().take(sys.n.len()) {
            let nk = to_complex(&sys.n[k]);
            rhs_v2 += &nk * &v1 * ntk.transpose();
            rhs_w2 += nk.tr_mul(&w1) * ntk;
        }
        let (v2, res_v2) = solve_block(route, &factors, &reps, partner, &rhs_v2, false)?;
        let (w2, res_w2) = solve_block(route, &factors, &reps, partner, &rhs_w2, true)?;
        worst = worst.max(res_v2).max(res_w2);
        v += v2;
        w += w2;
    }

    let v = orthonormalize(&realify(&v, eig, partner))?;
    let w = orthonormalize(&realify(&w, eig, partner))?;
    Ok((v, w, worst))
}

fn drive<R: Route>(
    sys: &QbOdeSystem,
    route: &R,
    cfg: &IrkaConfig,
    observer: Observer<'_>,
) -> Result<(ReducedQbSystem, IrkaTrace)> {
    cfg.check(sys.order())?;
    let mut red = match &cfg.init {
        InitialGuess::RandomLinear => initial_guess(cfg, sys.inputs(), sys.outputs(), sys.n.len()),
        InitialGuess::Supplied(start) => {
            if start.order() != cfg.r || start.inputs() != sys.inputs() || start.outputs() != sys.outputs() {
                return Err(Error::dim(format!(
                    "initial model is order {} with {} inputs and {} outputs; expected {}, {}, {}",
                    start.order(),
                    start.inputs(),
                    start.outputs(),
                    cfg.r,
                    sys.inputs(),
                    sys.outputs()
                )));
            }
            (**start).clone()
        }
    };
    let mut old = pencil_eigenvalues(&red.e, &red.a)?;
    let mut trace = IrkaTrace {
        iterations: Vec::new(),
        converged: false,
        iterations_used: 0,
    };
    for it in 1..=cfg.max_iters {
        let (v, w, worst) = sweep(sys, route, &red).map_err(|e| e.at_iteration(it))?;
        observer(it, &v, &w);
        red = project_ode(sys, &v, &w).map_err(|e| e.at_iteration(it))?;
        let mut new = pencil_eigenvalues(&red.e, &red.a).map_err(|e| e.at_iteration(it))?;
        new.sort_by(cmp_eig);
        let change = relative_change(&new, &old);
        trace.iterations.push(IrkaIteration {
            iteration: it,
            eigenvalues: new.iter().map(|z| [z.re, z.im]).collect(),
            relative_change: change,
            max_residual: worst,
            stable: new.iter().all(|z| z.re < 0.0),
        });
        trace.iterations_used = it;
        old = new;
        if change < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((red, trace))
}

/// Reduces a QB ODE.
pub fn tqb_irka_ode(sys: &QbOdeSystem, cfg: &IrkaConfig) -> Result<(ReducedQbSystem, IrkaTrace)> {
    tqb_irka_ode_with_observer(sys, cfg, &mut |_, _, _| {})
}

pub fn tqb_irka_ode_with_observer(
    sys: &QbOdeSystem,
    cfg: &IrkaConfig,
    observer: Observer<'_>,
) -> Result<(ReducedQbSystem, IrkaTrace)> {
    drive(sys, &Direct { e: &sys.e, a: &sys.a }, cfg, observer)
}

/// The velocity-space QB ODE `(E11, A11, H, N, B1, 𝒞)` whose shifted solves
/// the descriptor routes replace.
fn velocity_system(sys: &QbDaeSystem) -> Result<(QbOdeSystem, crate::OutputRealization)> {
    if sys.has_b2() {
        return Err(Error::Argument("reduction needs B2 = 0; homogenize first".into()));
    }
    if sys.v0.iter().any(|&x| x != 0.0) {
        return Err(Error::Argument("reduction needs v0 = 0".into()));
    }
    let out = output_realization(sys)?;
    let ode = QbOdeSystem::new(
        Some(sys.e11.clone()),
        sys.a11.clone(),
        sys.h.clone(),
        sys.n.clone(),
        sys.b1.clone(),
        out.ccal.clone(),
    )?;
    Ok((ode, out))
}

fn attach_outputs(
    mut red: ReducedQbSystem,
    out: &crate::OutputRealization,
) -> Result<ReducedQbSystem> {
    let (ch, cn, d) = project_dae_outputs(out, &red.v)?;
    red.ch = ch;
    red.cn = if out.is_linear() { Vec::new() } else { cn };
    red.d = d;
    Ok(red)
}

/// Reduces an index-2 QB DAE through explicitly formed projectors.
pub fn tqb_irka_dae_explicit(sys: &QbDaeSystem, cfg: &IrkaConfig) -> Result<(ReducedQbSystem, IrkaTrace)> {
    tqb_irka_dae_explicit_with_observer(sys, cfg, &mut |_, _, _| {})
}

pub fn tqb_irka_dae_explicit_with_observer(
    sys: &QbDaeSystem,
    cfg: &IrkaConfig,
    observer: Observer<'_>,
) -> Result<(ReducedQbSystem, IrkaTrace)> {
    let (ode, out) = velocity_system(sys)?;
    cfg.check(sys.nv() - sys.np())?;
    let proj = build_projectors(sys)?;
    let plt = proj.phi_l.transpose();
    let route = Projected {
        ebar: &plt * &sys.e11 * &proj.theta_r,
        abar: &plt * &sys.a11 * &proj.theta_r,
        theta_r: to_complex(&proj.theta_r),
        phi_l: to_complex(&proj.phi_l),
    };
    let (red, trace) = drive(&ode, &route, cfg, observer)?;
    Ok((attach_outputs(red, &out)?, trace))
}

/// Reduces an index-2 QB DAE with saddle-point solves on the original
/// blocks.
pub fn tqb_irka_dae_saddle(sys: &QbDaeSystem, cfg: &IrkaConfig) -> Result<(ReducedQbSystem, IrkaTrace)> {
    tqb_irka_dae_saddle_with_observer(sys, cfg, &mut |_, _, _| {})
}

pub fn tqb_irka_dae_saddle_with_observer(
    sys: &QbDaeSystem,
    cfg: &IrkaConfig,
    observer: Observer<'_>,
) -> Result<(ReducedQbSystem, IrkaTrace)> {
    let (ode, out) = velocity_system(sys)?;
    cfg.check(sys.nv() - sys.np())?;
    let (red, trace) = drive(&ode, &Saddle { sys }, cfg, observer)?;
    Ok((attach_outputs(red, &out)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae_transform::explicit_ode;
    use crate::linalg::max_principal_angle_sine;
    use crate::problems::{gen_random_ode, gen_synthetic_dae, RandomOdeConfig, SyntheticDaeConfig};
    use crate::system_model::DaeBlocks;
    use crate::tensor_kron::HessianTensor;

    fn linear_siso(n: usize) -> QbOdeSystem {
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -(1.0 + i as f64)
            } else if j == i + 1 {
                0.5
            } else {
                0.0
            }
        });
        QbOdeSystem::new(
            None,
            a,
            HessianTensor::zeros(n),
            vec![],
            DMatrix::from_element(n, 1, 1.0),
            DMatrix::from_fn(1, n, |_, j| 1.0 + (j as f64).sqrt()),
        )
        .unwrap()
    }

    fn supplied(cfg: &IrkaConfig, red: &ReducedQbSystem) -> IrkaConfig {
        IrkaConfig {
            max_iters: 1,
            init: InitialGuess::Supplied(Box::new(red.clone())),
            ..cfg.clone()
        }
    }

    #[test]
    fn linear_fixed_point() {
        let sys = linear_siso(12);
        let cfg = IrkaConfig { seed: 3, ..IrkaConfig::new(2) };
        let (red, trace) = tqb_irka_ode(&sys, &cfg).unwrap();
        assert!(trace.converged);
        let fac = pencil_eig(&red.e, &red.a).unwrap();
        let (ra, re) = fac.residuals(&red.e, &red.a);
        assert!(ra <= 1e-10 && re <= 1e-10);
        let (_, again) = tqb_irka_ode(&sys, &supplied(&cfg, &red)).unwrap();
        assert!(again.iterations[0].relative_change < cfg.tol);
    }

    #[test]
    fn full_order_is_exact() {
        let sys = linear_siso(5);
        let (red, trace) = tqb_irka_ode(&sys, &IrkaConfig::new(5)).unwrap();
        assert!(trace.iterations_used <= 2);
        assert!(trace.iterations[1].relative_change < 1e-10);
        let mut full = pencil_eigenvalues(&sys.e, &sys.a).unwrap();
        full.sort_by(cmp_eig);
        let red_eig = pencil_eigenvalues(&red.e, &red.a).unwrap();
        assert!(relative_change(&red_eig, &full) < 1e-12);
    }

    #[test]
    fn invalid_config() {
        let sys = linear_siso(4);
        assert!(tqb_irka_ode(&sys, &IrkaConfig::new(0)).is_err());
        assert!(tqb_irka_ode(&sys, &IrkaConfig::new(5)).is_err());
        let cfg = IrkaConfig { tol: 0.0, ..IrkaConfig::new(2) };
        assert!(tqb_irka_ode(&sys, &cfg).is_err());
    }

    #[test]
    fn trace_invariants_and_orthonormality() {
        let sys = gen_random_ode(&RandomOdeConfig {
            n: 15,
            m: 2,
            p: 2,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let cfg = IrkaConfig { seed: 1, max_iters: 8, ..IrkaConfig::new(3) };
        let mut ortho: f64 = 0.0;
        let (red, trace) = tqb_irka_ode_with_observer(&sys, &cfg, &mut |_, v, w| {
            let r = v.ncols();
            ortho = ortho
                .max((v.tr_mul(v) - DMatrix::identity(r, r)).norm())
                .max((w.tr_mul(w) - DMatrix::identity(r, r)).norm());
        })
        .unwrap();
        assert!(ortho <= 1e-10);
        assert_eq!(trace.iterations.len(), trace.iterations_used);
        let last = trace.iterations.last().unwrap().relative_change;
        assert_eq!(trace.converged, last < cfg.tol);
        assert!(trace.max_residual() <= 1e-9);
        assert_eq!(red.h, crate::tensor_kron::dense_symmetrize(&red.h));
    }

    #[test]
    fn deterministic() {
        let sys = gen_random_ode(&RandomOdeConfig { n: 10, seed: 2, ..Default::default() }).unwrap();
        let cfg = IrkaConfig { seed: 9, max_iters: 5, ..IrkaConfig::new(3) };
        let (a, ta) = tqb_irka_ode(&sys, &cfg).unwrap();
        let (b, tb) = tqb_irka_ode(&sys, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    }

    fn trivial_dae() -> QbDaeSystem {
        QbDaeSystem::new(DaeBlocks {
            e11: DMatrix::identity(2, 2),
            a11: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            a12: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            a21: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            h: None,
            n: vec![],
            b1: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            b2: None,
            c1: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            c2: None,
            d: None,
            v0: None,
        })
        .unwrap()
    }

    #[test]
    fn trivial_dae_matches_bar_system() {
        let sys = trivial_dae();
        let cfg = IrkaConfig::new(1);
        let proj = build_projectors(&sys).unwrap();
        let (bar, theta_r) = explicit_ode(&sys, &proj).unwrap();
        let (rb, _) = tqb_irka_ode(&bar, &cfg).unwrap();
        let (re, _) = tqb_irka_dae_explicit(&sys, &cfg).unwrap();
        let (rs, _) = tqb_irka_dae_saddle(&sys, &cfg).unwrap();
        let lb = pencil_eigenvalues(&rb.e, &rb.a).unwrap();
        for red in [&re, &rs] {
            let l = pencil_eigenvalues(&red.e, &red.a).unwrap();
            assert!(relative_change(&l, &lb) <= 1e-12);
            assert!(max_principal_angle_sine(&red.v, &orthonormalize(&(&theta_r * &rb.v)).unwrap()) <= 1e-12);
        }
        assert!((lb[0].re + 2.0).abs() < 1e-12);
    }

    #[test]
    fn dae_routes_agree() {
        let sys = gen_synthetic_dae(&SyntheticDaeConfig {
            nv: 20,
            np: 4,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let cfg = IrkaConfig { seed: 4, max_iters: 6, ..IrkaConfig::new(3) };
        let mut vs = Vec::new();
        let (rs, ts) = tqb_irka_dae_saddle_with_observer(&sys, &cfg, &mut |_, v, w| vs.push((v.clone(), w.clone())))
            .unwrap();
        let mut k = 0;
        let mut angle: f64 = 0.0;
        let (re, te) = tqb_irka_dae_explicit_with_observer(&sys, &cfg, &mut |_, v, w| {
            angle = angle
                .max(max_principal_angle_sine(v, &vs[k].0))
                .max(max_principal_angle_sine(w, &vs[k].1));
            k += 1;
        })
        .unwrap();
        assert!(angle <= 1e-6, "angle {angle}");
        assert_eq!(ts.iterations_used, te.iterations_used);
        let ls = pencil_eigenvalues(&rs.e, &rs.a).unwrap();
        let le = pencil_eigenvalues(&re.e, &re.a).unwrap();
        assert!(relative_change(&ls, &le) <= 1e-8);
        assert!((&sys.a21 * &rs.v).norm() <= 1e-8 * rs.v.norm());
        assert!((sys.a12.tr_mul(&rs.w)).norm() <= 1e-8 * rs.w.norm());
    }

    #[test]
    fn dae_requires_homogeneous_constraint() {
        let mut sys = trivial_dae();
        sys.b2 = DMatrix::from_element(1, 1, 1.0);
        assert!(tqb_irka_dae_saddle(&sys, &IrkaConfig::new(1)).is_err());
    }
}
