mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use qbmor_core::problems::{gen_burgers, gen_synthetic_dae, SyntheticDaeConfig};
use qbmor_core::simulate::{compare, simulate_dae, simulate_ode, simulate_reduced};
use qbmor_core::system_model::project_ode;
use qbmor_core::{HessianTensor, InputSignal, QbOdeSystem, Trajectory};

fn at_times(tr: &Trajectory, every: usize) -> Vec<DVector<f64>> {
    tr.y.iter().step_by(every).cloned().collect()
}

/// Errors of the runs with steps `dt` and `dt/2` against a `dt/16` reference.
fn self_convergence<F: Fn(f64) -> Trajectory>(run: F, dt: f64) -> (f64, f64) {
    let coarse = run(dt);
    let fine = run(dt / 2.0);
    let reference = run(dt / 16.0);
    let r = at_times(&reference, 16);
    let e1 = rel_seq(&at_times(&coarse, 1), &r);
    let e2 = rel_seq(&at_times(&fine, 2), &r);
    (e1, e2)
}

#[test]
fn scalar_closed_form() {
    let sys = QbOdeSystem::new(
        None,
        DMatrix::from_element(1, 1, -1.0),
        HessianTensor::zeros(1),
        vec![],
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let one = InputSignal::function(1, |_| DVector::from_element(1, 1.0), |_| DVector::zeros(1));
    let tr = simulate_ode(&sys, &one, 1.0, 1e-3).unwrap();
    let x1 = tr.x.last().unwrap()[0];
    assert!((x1 - (1.0 - (-1.0f64).exp())).abs() < 5e-3);
    let zero = simulate_ode(&sys, &InputSignal::Zero { m: 1 }, 1.0, 0.1).unwrap();
    assert!(zero.y.iter().all(|y| y[0] == 0.0));
}

#[test]
fn implicit_euler_is_first_order_on_burgers() {
    let sys = gen_burgers(40, 0.1, 0).unwrap();
    let u = InputSignal::Preset { m: 1 };
    let (e1, e2) = self_convergence(|dt| simulate_ode(&sys, &u, 2.0, dt).unwrap(), 0.02);
    let ratio = e1 / e2;
    // with a dt/16 reference the asymptotic ratio is 15/7
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}, errors {e1:e} {e2:e}");
}

#[test]
fn implicit_euler_is_first_order_on_descriptor() {
    let sys = gen_synthetic_dae(&SyntheticDaeConfig {
        nv: 24,
        np: 5,
        seed: 2,
        quad_scale: 0.3,
        ..Default::default()
    })
    .unwrap();
    let u = InputSignal::Preset { m: 2 };
    let (e1, e2) = self_convergence(|dt| simulate_dae(&sys, &u, 2.0, dt).unwrap(), 0.02);
    let ratio = e1 / e2;
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}, errors {e1:e} {e2:e}");
}

#[test]
fn descriptor_constraint_holds_along_trajectory() {
    for seed in [1, 5] {
        let sys = gen_synthetic_dae(&SyntheticDaeConfig {
            nv: 30,
            np: 6,
            seed,
            quad_scale: 0.2,
            with_c2: true,
            ..Default::default()
        })
        .unwrap();
        let tr = simulate_dae(&sys, &InputSignal::Preset { m: 2 }, 10.0, 0.01).unwrap();
        let vmax = tr.x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let cmax = tr.x.iter().map(|v| (&sys.a21 * v).norm()).fold(0.0, f64::max);
        assert!(vmax > 0.0 && cmax <= 1e-8 * vmax, "{cmax:e} vs {vmax:e}");
        let rec = tr.constraint_residual.as_ref().unwrap();
        assert!(rec.iter().all(|&c| c <= 1e-8 * vmax));
        let zero = simulate_dae(&sys, &InputSignal::Zero { m: 2 }, 1.0, 0.1).unwrap();
        assert!(zero.x.iter().chain(&zero.pressure).all(|v| v.norm() == 0.0));
    }
}

#[test]
fn identity_projection_reproduces_full_simulation() {
    let sys = gen_burgers(16, 0.1, 0).unwrap();
    let eye = DMatrix::identity(16, 16);
    let red = project_ode(&sys, &eye, &eye).unwrap();
    let u = InputSignal::Preset { m: 1 };
    let full = simulate_ode(&sys, &u, 3.0, 0.01).unwrap();
    let r = simulate_reduced(&red, &u, 3.0, 0.01).unwrap();
    assert_eq!(full.y, r.y);
    assert_eq!(full.x, r.x);
    let rep = compare(&full, &r).unwrap();
    assert_eq!(rep.aggregate_rel_l2, 0.0);
}

#[test]
fn csv_round_trip_preserves_outputs() {
    let sys = gen_burgers(8, 0.2, 0).unwrap();
    let tr = simulate_ode(&sys, &InputSignal::Preset { m: 1 }, 1.0, 0.05).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    tr.write_csv(&p).unwrap();
    let back = Trajectory::from_csv(&p).unwrap();
    assert_eq!(back.t, tr.t);
    assert_eq!(back.y, tr.y);
    assert_eq!(back.u, tr.u);
    let table = InputSignal::from_csv(&dir.path().join("missing.csv"));
    assert!(table.is_err());
}
