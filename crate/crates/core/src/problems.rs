//! Benchmark generators, the steady-state shift and system ingestion.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{pencil_eigenvalues, rank, rcond};
use crate::system_model::{DaeBlocks, QbDaeSystem, QbOdeSystem};
use crate::tensor_kron::HessianTensor;
use crate::{Error, Result};

pub use crate::io::{load_system, save_dae, save_ode, save_reduced, LoadedSystem};

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Viscous Burgers equation `v_t = ν v_xx − v v_x` on `(0, 1)` with `n`
/// interior nodes, central differences, the control entering as the left
/// Dirichlet value and a homogeneous right boundary. The output averages the
/// last quarter of the nodes. `seed` is accepted for interface uniformity;
/// the system is deterministic.
pub fn gen_burgers(n: usize, nu: f64, _seed: u64) -> Result<QbOdeSystem> {
    if n < 4 {
        return Err(Error::Argument(format!("Burgers needs n >= 4, got {n}")));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Argument(format!("viscosity must be positive, got {nu}")));
    }
    let diff = nu * (n as f64 + 1.0).powi(2);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 * diff;
        if i > 0 {
            a[(i, i - 1)] = diff;
        }
        if i + 1 < n {
            a[(i, i + 1)] = diff;
        }
    }
    // −v_i (v_{i+1} − v_{i−1}) / (2h)
    let c = (n as f64 + 1.0) / 2.0;
    let mut ent = Vec::with_capacity(2 * n);
    for i in 0..n {
        if i + 1 < n {
            ent.push((i, i, i + 1, -c));
        }
        if i > 0 {
            ent.push((i, i, i - 1, c));
        }
    }
    let hess = HessianTensor::from_entries(n, ent)?.symmetrize();
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = diff;
    let q = (n / 4).max(1);
    let mut cm = DMatrix::zeros(1, n);
    for j in n - q..n {
        cm[(0, j)] = 1.0 / q as f64;
    }
    QbOdeSystem::new(None, a, hess, Vec::new(), b, cm)
}

/// Parameters of [`gen_synthetic_dae`].
#[derive(Debug, Clone)]
pub struct SyntheticDaeConfig {
    pub nv: usize,
    pub np: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    pub quad_scale: f64,
    /// `A21 = A12ᵀ` when set; otherwise `A21` is perturbed independently.
    pub symmetric: bool,
    /// Nonzero pressure output `C2`.
    pub with_c2: bool,
}

impl Default for SyntheticDaeConfig {
    fn default() -> Self {
        Self {
            nv: 30,
            np: 6,
            m: 2,
            p: 2,
            seed: 0,
            quad_scale: 0.1,
            symmetric: false,
            with_c2: false,
        }
    }
}

fn tridiag(n: usize, diag: impl Fn(usize) -> f64, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag(i)
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}

fn sparse_tensor(n: usize, nnz: usize, rng: &mut ChaCha8Rng) -> Result<HessianTensor> {
    let ent = (0..nnz)
        .map(|_| {
            (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    Ok(HessianTensor::from_entries(n, ent)?.symmetrize())
}

/// Orthonormal basis of `ker M` for a full-row-rank `M`, completing an
/// orthonormal basis of `range Mᵀ` by Gram-Schmidt on unit vectors.
fn kernel_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, n) = m.shape();
    let q = m.transpose().qr().q();
    let mut cols: Vec<DVector<f64>> = (0..r).map(|j| q.column(j).into_owned()).collect();
    let mut basis = DMatrix::zeros(n, n - r);
    let mut found = 0;
    for e in 0..n {
        if found == n - r {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            v /= nrm;
            basis.set_column(found, &v);
            cols.push(v);
            found += 1;
        }
    }
    basis
}

/// Finite spectral abscissa of the descriptor pencil, computed on bases of
/// `ker A21` and `ker A12ᵀ`.
fn dae_spectral_abscissa(sys: &QbDaeSystem) -> Result<f64> {
    let zr = kernel_basis(&sys.a21);
    let zl = kernel_basis(&sys.a12.transpose());
    let e = zl.transpose() * &sys.e11 * &zr;
    let a = zl.transpose() * &sys.a11 * &zr;
    Ok(pencil_eigenvalues(&e, &a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Synthetic index-2 QB descriptor system: `E11` SPD tridiagonal, `A11`
/// negative definite tridiagonal plus a skew perturbation, random full-rank
/// coupling blocks, a sparse symmetrized Hessian with Frobenius norm
/// `quad_scale`, small sparse bilinear terms, `B2 = 0` and `v0 = 0`.
///
/// A draw that is rank deficient or has an unstable finite spectrum is
/// replaced by the next random stream (at most five attempts).
pub fn gen_synthetic_dae(cfg: &SyntheticDaeConfig) -> Result<QbDaeSystem> {
    let (nv, np, m, p) = (cfg.nv, cfg.np, cfg.m, cfg.p);
    if np == 0 || 2 * np >= nv {
        return Err(Error::Argument(format!(
            "need 0 < n_p < n_v / 2, got n_v = {nv}, n_p = {np}"
        )));
    }
    if m == 0 || p == 0 {
        return Err(Error::Argument("m and p must be positive".into()));
    }
    if !(cfg.quad_scale >= 0.0) {
        return Err(Error::Argument("quad_scale must be nonnegative".into()));
    }
    let mut last = None;
    for stream in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        match draw_dae(cfg, &mut rng) {
            Ok(sys) => return Ok(sys),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn draw_dae(cfg: &SyntheticDaeConfig, rng: &mut ChaCha8Rng) -> Result<QbDaeSystem> {
    let (nv, np, m, p) = (cfg.nv, cfg.np, cfg.m, cfg.p);
    let ed: Vec<f64> = (0..nv).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect();
    let e11 = tridiag(nv, |i| ed[i], 0.2);
    let ad: Vec<f64> = (0..nv).map(|_| 3.0 + 2.0 * rng.random::<f64>()).collect();
    let k = normal(rng, nv, nv) * (0.5 / (nv as f64).sqrt());
    let a11 = -tridiag(nv, |i| ad[i], -1.0) - (&k - k.transpose());
    let a12 = normal(rng, nv, np);
    let a21 = if cfg.symmetric {
        a12.transpose()
    } else {
        a12.transpose() + normal(rng, np, nv) * 0.3
    };
    let h = if cfg.quad_scale == 0.0 {
        HessianTensor::zeros(nv)
    } else {
        let t = sparse_tensor(nv, 4 * nv, rng)?;
        let nrm = t.frobenius_norm();
        t.scaled(cfg.quad_scale / nrm)
    };
    let n = (0..m)
        .map(|_| {
            let mut nk = DMatrix::zeros(nv, nv);
            for _ in 0..nv {
                let (i, j) = (rng.random_range(0..nv), rng.random_range(0..nv));
                nk[(i, j)] += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            nk
        })
        .collect();
    let b1 = normal(rng, nv, m);
    let c1 = normal(rng, p, nv);
    let c2 = cfg.with_c2.then(|| normal(rng, p, np));
    if rank(&a12, 1e-10) < np || rank(&a21, 1e-10) < np {
        return Err(Error::RankDefect {
            expected: np,
            found: rank(&a12, 1e-10).min(rank(&a21, 1e-10)),
        });
    }
    let sys = QbDaeSystem::new(DaeBlocks {
        e11,
        a11,
        a12,
        a21,
        h: Some(h),
        n,
        b1,
        b2: None,
        c1,
        c2,
        d: None,
        v0: None,
    })?;
    if rcond(&sys.schur_complement()?) < 1e-10 {
        return Err(Error::Singular("S = A21 E11^-1 A12".into()));
    }
    let abscissa = dae_spectral_abscissa(&sys)?;
    if abscissa >= 0.0 {
        return Err(Error::Unstable(format!(
            "synthetic DAE has finite spectral abscissa {abscissa:.3e}"
        )));
    }
    Ok(sys)
}

/// Parameters of [`gen_random_ode`].
#[derive(Debug, Clone)]
pub struct RandomOdeConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    pub quad_scale: f64,
    pub bilinear_scale: f64,
    /// Use a nonidentity SPD mass matrix.
    pub mass: bool,
}

impl Default for RandomOdeConfig {
    fn default() -> Self {
        Self {
            n: 10,
            m: 1,
            p: 1,
            seed: 0,
            quad_scale: 0.5,
            bilinear_scale: 0.2,
            mass: false,
        }
    }
}

/// Stable random QB ODE: `E` SPD (or identity), `A` with negative definite
/// symmetric part, sparse symmetric Hessian of Frobenius norm `quad_scale`
/// and dense bilinear terms of Frobenius norm `bilinear_scale`.
pub fn gen_random_ode(cfg: &RandomOdeConfig) -> Result<QbOdeSystem> {
    let (n, m, p) = (cfg.n, cfg.m, cfg.p);
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::Argument("n, m and p must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = normal(&mut rng, n, n);
    let k = normal(&mut rng, n, n);
    let a = -(&g * g.transpose() / n as f64 + DMatrix::identity(n, n)) + (&k - k.transpose()) * 0.3;
    let e = if cfg.mass {
        let r = normal(&mut rng, n, n);
        Some(DMatrix::identity(n, n) + &r * r.transpose() * (0.1 / n as f64))
    } else {
        None
    };
    let h = if cfg.quad_scale == 0.0 {
        HessianTensor::zeros(n)
    } else {
        let t = sparse_tensor(n, 3 * n, &mut rng)?;
        let nrm = t.frobenius_norm();
        t.scaled(cfg.quad_scale / nrm)
    };
    let nlist = if cfg.bilinear_scale == 0.0 {
        Vec::new()
    } else {
        (0..m)
            .map(|_| {
                let x = normal(&mut rng, n, n);
                let nrm = x.norm();
                x * (cfg.bilinear_scale / nrm)
            })
            .collect()
    };
    let b = normal(&mut rng, n, m);
    let c = normal(&mut rng, p, n);
    QbOdeSystem::new(e, a, h, nlist, b, c)
}

/// Result of [`steady_state_shift`].
#[derive(Debug, Clone)]
pub struct SteadyStateShift {
    /// Dynamics of the deviation `v_δ = v − v_s`, `p_δ = p − p_s`.
    pub system: QbDaeSystem,
    /// `C1 v_s + C2 p_s`; the original output is the shifted output plus
    /// this constant.
    pub output_offset: DVector<f64>,
}

/// Rewrites the system around a supplied steady state `(v_s, p_s)`:
/// `A11' = A11 + H(v_s ⊗ I + I ⊗ v_s)`, `B1' = B1 + [N_1 v_s, …, N_m v_s]`,
/// `v0 = 0`. The constant forcing that sustains the steady state cancels and
/// is not part of the result.
pub fn steady_state_shift(
    sys: &QbDaeSystem,
    v_s: &DVector<f64>,
    p_s: &DVector<f64>,
) -> Result<SteadyStateShift> {
    if v_s.len() != sys.nv() || p_s.len() != sys.np() {
        return Err(Error::dim(format!(
            "steady state has lengths {} and {}, expected {} and {}",
            v_s.len(),
            p_s.len(),
            sys.nv(),
            sys.np()
        )));
    }
    let c = (&sys.a21 * v_s).norm();
    if c > 1e-10 * sys.a21.norm() * v_s.norm().max(1.0) {
        return Err(Error::Argument(format!(
            "steady state violates the constraint: |A21 v_s| = {c:.3e}"
        )));
    }
    let mut shifted = sys.clone();
    shifted.a11 += sys.h.jacobian(v_s);
    for (k, nk) in sys.n.iter().enumerate() {
        let mut col = shifted.b1.column_mut(k);
        col += nk * v_s;
    }
    shifted.v0 = DVector::zeros(sys.nv());
    Ok(SteadyStateShift {
        system: shifted,
        output_offset: &sys.c1 * v_s + &sys.c2 * p_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_entries_and_stencil() {
        let sys = gen_burgers(4, 1.0, 0).unwrap();
        assert_eq!(sys.a[(0, 0)], -50.0);
        assert!(sys.h.symmetric_flag());
        let sys = gen_burgers(12, 0.1, 0).unwrap();
        let n = 12;
        let h = 1.0 / 13.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let x: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let got = sys.h.apply(&x, &x).unwrap();
            for i in 0..n {
                let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                let left = if i > 0 { x[i - 1] } else { 0.0 };
                let want = -x[i] * (right - left) / (2.0 * h);
                assert!((got[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn burgers_hessian_is_translation_structured() {
        let n = 10;
        let sys = gen_burgers(n, 0.1, 0).unwrap();
        for i in 1..n - 2 {
            for (dj, dk) in [(0isize, 1isize), (1, 0), (0, -1), (-1, 0)] {
                let a = sys.h.get(i, (i as isize + dj) as usize, (i as isize + dk) as usize);
                let b = sys.h.get(i + 1, (i as isize + 1 + dj) as usize, (i as isize + 1 + dk) as usize);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn burgers_diffusion_dominated_is_stable() {
        let sys = gen_burgers(20, 10.0, 0).unwrap();
        let rep = sys.validate().unwrap();
        assert!(rep.stable && rep.spectral_abscissa < -10.0);
        assert!(gen_burgers(3, 1.0, 0).is_err());
        assert!(gen_burgers(8, 0.0, 0).is_err());
    }

    #[test]
    fn synthetic_dae_properties() {
        let cfg = SyntheticDaeConfig { seed: 3, ..Default::default() };
        let a = gen_synthetic_dae(&cfg).unwrap();
        let b = gen_synthetic_dae(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(dae_spectral_abscissa(&a).unwrap() < 0.0);
        let lin = gen_synthetic_dae(&SyntheticDaeConfig { quad_scale: 0.0, ..cfg.clone() }).unwrap();
        assert!(lin.h.is_zero());
        assert!(gen_synthetic_dae(&SyntheticDaeConfig { np: 15, ..cfg }).is_err());
    }

    #[test]
    fn random_ode_is_stable() {
        for seed in 0..3 {
            let sys = gen_random_ode(&RandomOdeConfig {
                n: 8,
                m: 2,
                p: 2,
                seed,
                quad_scale: 0.5,
                bilinear_scale: 0.2,
                mass: true,
            })
            .unwrap();
            assert!(sys.validate().unwrap().stable);
        }
    }

    #[test]
    fn steady_state_shift_cases() {
        let sys = gen_synthetic_dae(&SyntheticDaeConfig { seed: 4, ..Default::default() }).unwrap();
        let zero_v = DVector::zeros(sys.nv());
        let zero_p = DVector::zeros(sys.np());
        let sh = steady_state_shift(&sys, &zero_v, &zero_p).unwrap();
        assert_eq!(sh.system, sys);
        let bad = DVector::from_element(sys.nv(), 1.0);
        assert!(steady_state_shift(&sys, &bad, &zero_p).is_err());
    }
}
