mod common;

use common::*;
use nalgebra::DMatrix;
use qbmor_core::dense_solvers::pencil_eig;
use qbmor_core::gramians_norms::{
    error_system_norm, linear_gramians, linear_h2_norm, truncated_gramians, truncated_h2_norm,
};
use qbmor_core::problems::{gen_burgers, gen_random_ode, gen_synthetic_dae, RandomOdeConfig, SyntheticDaeConfig};
use qbmor_core::tensor_kron::{kron, unvec, vec};
use qbmor_core::tqb_irka::{tqb_irka_dae_saddle, tqb_irka_ode, InitialGuess};
use qbmor_core::{IrkaConfig, QbOdeSystem};

/// Lyapunov solve by the vectorized Kronecker system, independent of the
/// library solver.
fn kron_lyap(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::identity(n, n);
    let op = kron(&eye, a) + kron(a, &eye);
    let x = op.lu().solve(&(-vec(rhs))).unwrap();
    unvec(&x, n, n)
}

#[test]
fn burgers_reduction_converges_with_tight_residuals() {
    let sys = gen_burgers(40, 0.05, 0).unwrap();
    let mut cfg = IrkaConfig::new(6);
    cfg.seed = 42;
    let (red, trace) = tqb_irka_ode(&sys, &cfg).unwrap();
    assert!(trace.converged && trace.iterations_used <= 50);
    assert!(trace.max_residual() <= 1e-9);
    let changes = trace.relative_changes();
    assert_eq!(changes.len(), trace.iterations_used);
    assert!(*changes.last().unwrap() < 1e-5);
    let r = red.order();
    assert!((red.v.tr_mul(&red.v) - DMatrix::identity(r, r)).norm() <= 1e-10);
    assert!((red.w.tr_mul(&red.w) - DMatrix::identity(r, r)).norm() <= 1e-10);
    // the stored reduced matrices are reproducible from the bases
    assert!(rel(&(red.w.transpose() * &sys.e * &red.v), &red.e) <= 1e-12);
    assert!(rel(&(red.w.transpose() * &sys.a * &red.v), &red.a) <= 1e-12);
}

#[test]
fn linear_error_norm_matches_two_lyapunov_formula() {
    let sys = gen_random_ode(&RandomOdeConfig {
        n: 10,
        quad_scale: 0.0,
        bilinear_scale: 0.0,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = IrkaConfig::new(3);
    cfg.seed = 1;
    let (red, _) = tqb_irka_ode(&sys, &cfg).unwrap();
    // reduced model in E = I form
    let ei = red.e.clone().try_inverse().unwrap();
    let (ar, br) = (&ei * &red.a, &ei * &red.b);
    let (n, r) = (10, 3);
    let mut a = DMatrix::zeros(n + r, n + r);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((n, n), (r, r)).copy_from(&ar);
    let mut b = DMatrix::zeros(n + r, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(&sys.b);
    b.view_mut((n, 0), (r, 1)).copy_from(&br);
    let mut c = DMatrix::zeros(1, n + r);
    c.view_mut((0, 0), (1, n)).copy_from(&sys.c);
    c.view_mut((0, n), (1, r)).copy_from(&(-&red.c));
    let p = kron_lyap(&a, &(&b * b.transpose()));
    let oracle = (&c * p * c.transpose())[(0, 0)].sqrt();
    let got = error_system_norm(&sys, &red).unwrap();
    assert!((got - oracle).abs() <= 1e-8 * oracle, "{got} vs {oracle}");
    assert!(got < linear_h2_norm(&sys).unwrap());
}

#[test]
fn truncated_gramians_dual_trace_and_psd_order() {
    for seed in 0..5 {
        let sys = gen_random_ode(&RandomOdeConfig {
            n: 12,
            m: 2,
            p: 2,
            seed,
            mass: seed % 2 == 1,
            ..Default::default()
        })
        .unwrap();
        let lin = linear_gramians(&sys).unwrap();
        let tr = truncated_gramians(&sys).unwrap();
        let primal = (&sys.c * &tr.p * sys.c.transpose()).trace();
        let dual = (sys.b.transpose() * &tr.q * &sys.b).trace();
        assert!((primal - dual).abs() <= 1e-8 * primal.abs().max(dual.abs()));
        for m in [&tr.p, &tr.q, &lin.p, &lin.q] {
            assert!((m - m.transpose()).norm() <= 1e-12 * m.norm());
        }
        let diff = &tr.p - &lin.p;
        assert!(diff.symmetric_eigen().eigenvalues.min() >= -1e-10);
        assert!((truncated_h2_norm(&sys).unwrap() - primal.sqrt()).abs() <= 1e-12 * primal.sqrt());
    }
}

#[test]
fn error_norm_versus_order_on_burgers() {
    let sys = gen_burgers(40, 0.05, 0).unwrap();
    let mut errs = Vec::new();
    for r in [2, 4, 6, 8] {
        let mut cfg = IrkaConfig::new(r);
        cfg.seed = 42;
        let (red, trace) = tqb_irka_ode(&sys, &cfg).unwrap();
        let e = error_system_norm(&sys, &red).unwrap();
        assert!(e > 0.0 && e.is_finite());
        errs.push((r, e, trace.converged));
    }
    // reported, not gated: the iteration is not guaranteed to be monotone in r
    println!("truncated H2 error by order: {errs:?}");
}

#[test]
fn converged_model_is_a_fixed_point() {
    let sys = gen_random_ode(&RandomOdeConfig {
        n: 14,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = IrkaConfig::new(4);
    cfg.seed = 2;
    let (red, trace) = tqb_irka_ode(&sys, &cfg).unwrap();
    assert!(trace.converged);
    let mut again = cfg.clone();
    again.init = InitialGuess::Supplied(Box::new(red.clone()));
    again.max_iters = 1;
    let (_, t2) = tqb_irka_ode(&sys, &again).unwrap();
    let before: Vec<_> = trace.iterations.last().unwrap().eigenvalues.clone();
    let after: Vec<_> = t2.iterations[0].eigenvalues.clone();
    let num: f64 = before.iter().zip(&after).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum();
    let den: f64 = before.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum();
    assert!((num / den).sqrt() < cfg.tol);
    let f = pencil_eig(&red.e, &red.a).unwrap();
    let (ra, re) = f.residuals(&red.e, &red.a);
    assert!(ra <= 1e-10 && re <= 1e-10);
}

#[test]
fn linear_descriptor_reduction_keeps_constraint() {
    let mut sys = gen_synthetic_dae(&SyntheticDaeConfig {
        nv: 30,
        np: 6,
        seed: 4,
        quad_scale: 0.0,
        ..Default::default()
    })
    .unwrap();
    sys.n.clear();
    let mut cfg = IrkaConfig::new(4);
    cfg.seed = 3;
    let (red, _) = tqb_irka_dae_saddle(&sys, &cfg).unwrap();
    assert!((&sys.a21 * &red.v).norm() <= 1e-8 * red.v.norm());
    assert!((sys.a12.transpose() * &red.w).norm() <= 1e-8 * red.w.norm());
    assert!(red.h.iter().all(|&x| x == 0.0));
}

#[test]
fn invalid_orders_are_rejected() {
    let sys: QbOdeSystem = gen_burgers(8, 0.1, 0).unwrap();
    assert!(tqb_irka_ode(&sys, &IrkaConfig::new(0)).is_err());
    assert!(tqb_irka_ode(&sys, &IrkaConfig::new(9)).is_err());
    let mut cfg = IrkaConfig::new(2);
    cfg.tol = 0.0;
    assert!(tqb_irka_ode(&sys, &cfg).is_err());
}
