//! Implicit-Euler time integration and trajectory comparison.
//!
//! Every step solves its nonlinear system by Newton's method with the
//! analytic Jacobian. Systems without quadratic or bilinear terms factor
//! their step matrix once.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::dae_transform::velocity_rhs;
use crate::io::write_atomic;
use crate::sparse::CooMatrix;
use crate::system_model::{QbDaeSystem, QbOdeSystem, ReducedQbSystem};
use crate::tensor_kron::kron;
use crate::{Error, Result};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX: usize = 25;

type SignalFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Input signal `u(t)` with its derivative.
#[derive(Clone)]
pub enum InputSignal {
    Zero { m: usize },
    /// `u(t) = 2t² exp(−t/2) sin(2πt/5)` on every channel.
    Preset { m: usize },
    /// Piecewise-linear interpolation of samples; derivatives by central
    /// differences at the nodes (one-sided at the ends).
    Table { t: Vec<f64>, values: Vec<DVector<f64>> },
    /// Arbitrary signal with an explicit derivative.
    Function { m: usize, f: SignalFn, df: SignalFn },
    /// `[u; u ⊗ u; u̇]` built from a base signal, for homogenized systems.
    Homogenized(Box<InputSignal>),
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Zero { m } => write!(f, "Zero {{ m: {m} }}"),
            InputSignal::Preset { m } => write!(f, "Preset {{ m: {m} }}"),
            InputSignal::Table { t, values } => {
                write!(f, "Table {{ samples: {}, m: {} }}", t.len(), values.first().map_or(0, |v| v.len()))
            }
            InputSignal::Function { m, .. } => write!(f, "Function {{ m: {m} }}"),
            InputSignal::Homogenized(base) => write!(f, "Homogenized({base:?})"),
        }
    }
}

fn preset(t: f64) -> (f64, f64) {
    let w = 2.0 * std::f64::consts::PI / 5.0;
    let g = 2.0 * t * t * (-t / 2.0).exp();
    let dg = (4.0 * t - t * t) * (-t / 2.0).exp();
    (g * (w * t).sin(), dg * (w * t).sin() + g * w * (w * t).cos())
}

impl InputSignal {
    pub fn function<F, G>(m: usize, f: F, df: G) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        InputSignal::Function {
            m,
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// Reads a CSV table with header `t,u_1,…,u_m`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| perr("empty input table".into()))?.split(',').map(str::trim).collect();
        if header.len() < 2 || header[0] != "t" {
            return Err(perr("header must be t,u_1,...,u_m".into()));
        }
        let m = header.len() - 1;
        let mut t = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(format!("row {}: {e}", row + 2)))?;
            if vals.len() != m + 1 {
                return Err(perr(format!("row {}: expected {} columns", row + 2, m + 1)));
            }
            if let Some(&last) = t.last() {
                if vals[0] <= last {
                    return Err(perr(format!("row {}: time must be strictly increasing", row + 2)));
                }
            }
            t.push(vals[0]);
            values.push(DVector::from_column_slice(&vals[1..]));
        }
        if t.len() < 2 {
            return Err(perr("input table needs at least two rows".into()));
        }
        Ok(InputSignal::Table { t, values })
    }

    pub fn channels(&self) -> usize {
        match self {
            InputSignal::Zero { m } | InputSignal::Preset { m } | InputSignal::Function { m, .. } => *m,
            InputSignal::Table { values, .. } => values[0].len(),
            InputSignal::Homogenized(base) => {
                let m = base.channels();
                2 * m + m * m
            }
        }
    }

    fn locate(t: &[f64], s: f64) -> (usize, f64) {
        if s <= t[0] {
            return (0, 0.0);
        }
        let last = t.len() - 1;
        if s >= t[last] {
            return (last - 1, 1.0);
        }
        let i = t.partition_point(|&x| x <= s) - 1;
        (i, (s - t[i]) / (t[i + 1] - t[i]))
    }

    fn node_derivative(t: &[f64], v: &[DVector<f64>], i: usize) -> DVector<f64> {
        let last = t.len() - 1;
        let (a, b) = if i == 0 {
            (0, 1)
        } else if i == last {
            (last - 1, last)
        } else {
            (i - 1, i + 1)
        };
        (&v[b] - &v[a]) / (t[b] - t[a])
    }

    pub fn sample(&self, s: f64) -> DVector<f64> {
        match self {
            InputSignal::Zero { m } => DVector::zeros(*m),
            InputSignal::Preset { m } => DVector::from_element(*m, preset(s).0),
            InputSignal::Table { t, values } => {
                let (i, w) = Self::locate(t, s);
                &values[i] * (1.0 - w) + &values[i + 1] * w
            }
            InputSignal::Function { f, .. } => f(s),
            InputSignal::Homogenized(base) => {
                let u = base.sample(s);
                let du = base.derivative(s);
                let uu = kron(&DMatrix::from_column_slice(u.len(), 1, u.as_slice()), &DMatrix::from_column_slice(u.len(), 1, u.as_slice()));
                let mut out = DVector::zeros(self.channels());
                let m = u.len();
                out.rows_mut(0, m).copy_from(&u);
                out.rows_mut(m, m * m).copy_from(&uu.column(0));
                out.rows_mut(m + m * m, m).copy_from(&du);
                out
            }
        }
    }

    pub fn derivative(&self, s: f64) -> DVector<f64> {
        match self {
            InputSignal::Zero { m } => DVector::zeros(*m),
            InputSignal::Preset { m } => DVector::from_element(*m, preset(s).1),
            InputSignal::Table { t, values } => {
                let (i, w) = Self::locate(t, s);
                Self::node_derivative(t, values, i) * (1.0 - w) + Self::node_derivative(t, values, i + 1) * w
            }
            InputSignal::Function { df, .. } => df(s),
            InputSignal::Homogenized(_) => {
                let h = 1e-6 * (1.0 + s.abs());
                (self.sample(s + h) - self.sample(s - h)) / (2.0 * h)
            }
        }
    }
}

/// Sampled trajectory on a uniform grid, including `t = 0`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// States (velocities for descriptor systems); empty when read from CSV.
    pub x: Vec<DVector<f64>>,
    /// Pressures of a descriptor simulation.
    pub pressure: Vec<DVector<f64>>,
    /// `‖A21 v_k + B2 u_k‖` per step of a descriptor simulation.
    pub constraint_residual: Option<Vec<f64>>,
}

impl Trajectory {
    /// CSV with header `t,u_1..u_m,y_1..y_p[,constraint_residual]`.
    pub fn to_csv(&self) -> String {
        let m = self.u.first().map_or(0, |u| u.len());
        let p = self.y.first().map_or(0, |y| y.len());
        let mut head = vec!["t".to_string()];
        head.extend((1..=m).map(|i| format!("u_{i}")));
        head.extend((1..=p).map(|i| format!("y_{i}")));
        if self.constraint_residual.is_some() {
            head.push("constraint_residual".into());
        }
        let mut s = head.join(",");
        s.push('\n');
        for k in 0..self.t.len() {
            let mut row = vec![format!("{:.16e}", self.t[k])];
            row.extend(self.u[k].iter().map(|v| format!("{v:.16e}")));
            row.extend(self.y[k].iter().map(|v| format!("{v:.16e}")));
            if let Some(c) = &self.constraint_residual {
                row.push(format!("{:.16e}", c[k]));
            }
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    /// Reads the CSV written by [`Trajectory::write_csv`] (time, inputs,
    /// outputs and constraint residual; states are not stored).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| perr("empty trajectory".into()))?.split(',').collect();
        if header.first() != Some(&"t") {
            return Err(perr("first column must be t".into()));
        }
        let m = header.iter().filter(|h| h.starts_with("u_")).count();
        let p = header.iter().filter(|h| h.starts_with("y_")).count();
        let has_c = header.last() == Some(&"constraint_residual");
        if header.len() != 1 + m + p + usize::from(has_c) {
            return Err(perr("unrecognized trajectory header".into()));
        }
        let mut tr = Trajectory {
            constraint_residual: has_c.then(Vec::new),
            ..Default::default()
        };
        for (row, line) in lines.enumerate() {
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(format!("row {}: {e}", row + 2)))?;
            if v.len() != header.len() {
                return Err(perr(format!("row {}: expected {} columns", row + 2, header.len())));
            }
            tr.t.push(v[0]);
            tr.u.push(DVector::from_column_slice(&v[1..1 + m]));
            tr.y.push(DVector::from_column_slice(&v[1 + m..1 + m + p]));
            if let Some(c) = tr.constraint_residual.as_mut() {
                c.push(v[1 + m + p]);
            }
        }
        Ok(tr)
    }
}

fn grid(t_final: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_final > 0.0) || !dt.is_finite() || !t_final.is_finite() {
        return Err(Error::Argument(format!(
            "need positive t_final and dt, got {t_final} and {dt}"
        )));
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Argument(format!(
            "t_final = {t_final} is not a multiple of dt = {dt}"
        )));
    }
    Ok((0..=steps as usize).map(|k| k as f64 * dt).collect())
}

fn check_input(u: &InputSignal, m: usize) -> Result<()> {
    if u.channels() != m {
        return Err(Error::dim(format!(
            "input has {} channels, system has {m} inputs",
            u.channels()
        )));
    }
    Ok(())
}

/// Output map `y = C x + C_H (x⊗x) + Σ C_{N_k} x u_k + D u`.
struct OutputMap<'a> {
    c: &'a DMatrix<f64>,
    ch: Option<CooMatrix>,
    cn: &'a [DMatrix<f64>],
    d: Option<&'a DMatrix<f64>>,
}

impl OutputMap<'_> {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut y = self.c * x;
        if let Some(ch) = &self.ch {
            let n = x.len();
            for &(row, col, v) in ch.entries() {
                y[row] += v * x[col / n] * x[col % n];
            }
        }
        for (k, c) in self.cn.iter().enumerate() {
            y += c * x * u[k];
        }
        if let Some(d) = self.d {
            y += d * u;
        }
        y
    }
}

fn integrate_ode(
    sys: &QbOdeSystem,
    u: &InputSignal,
    t_final: f64,
    dt: f64,
    out: &OutputMap<'_>,
) -> Result<Trajectory> {
    check_input(u, sys.inputs())?;
    let ts = grid(t_final, dt)?;
    let n = sys.order();
    let linear = sys.h.is_zero() && sys.n.is_empty();
    let fixed: Option<LU<f64, Dyn, Dyn>> = linear.then(|| (&sys.e - &sys.a * dt).lu());
    let mut x = DVector::zeros(n);
    let mut tr = Trajectory::default();
    let u0 = u.sample(0.0);
    tr.y.push(out.eval(&x, &u0));
    tr.u.push(u0);
    tr.x.push(x.clone());
    for (step, &t) in ts.iter().enumerate().skip(1) {
        let uk = u.sample(t);
        let forcing = &sys.b * &uk;
        if let Some(lu) = &fixed {
            x = lu
                .solve(&(&sys.e * &x + &forcing * dt))
                .ok_or(Error::Newton { step, update: f64::NAN })?;
        } else {
            let prev = x.clone();
            let ex_prev = &sys.e * &prev;
            let mut ok = false;
            let mut last = f64::INFINITY;
            for _ in 0..NEWTON_MAX {
                let mut f = &sys.a * &x + sys.h.apply(&x, &x)? + &forcing;
                let mut jac = &sys.e - &sys.a * dt;
                sys.h.add_jacobian(&x, -dt, &mut jac);
                for (k, nk) in sys.n.iter().enumerate() {
                    f += nk * &x * uk[k];
                    jac -= nk * (dt * uk[k]);
                }
                let g = &sys.e * &x - &ex_prev - f * dt;
                let dx = jac.lu().solve(&(-g)).ok_or(Error::Newton { step, update: f64::NAN })?;
                x += &dx;
                last = dx.norm();
                if !last.is_finite() {
                    break;
                }
                if last <= NEWTON_TOL * (1.0 + x.norm()) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::Newton { step, update: last });
            }
        }
        tr.y.push(out.eval(&x, &uk));
        tr.u.push(uk);
        tr.x.push(x.clone());
    }
    tr.t = ts;
    Ok(tr)
}

/// Simulates a QB ODE from `x(0) = 0`; output `y = C x`.
pub fn simulate_ode(sys: &QbOdeSystem, u: &InputSignal, t_final: f64, dt: f64) -> Result<Trajectory> {
    let out = OutputMap {
        c: &sys.c,
        ch: None,
        cn: &[],
        d: None,
    };
    integrate_ode(sys, u, t_final, dt, &out)
}

/// Simulates a reduced model from `x̂(0) = 0`, including its output
/// corrections.
pub fn simulate_reduced(red: &ReducedQbSystem, u: &InputSignal, t_final: f64, dt: f64) -> Result<Trajectory> {
    red.check()?;
    let ode = red.to_ode()?;
    let ch = red.ch.iter().any(|&x| x != 0.0).then(|| CooMatrix::from_dense(&red.ch));
    let out = OutputMap {
        c: &red.c,
        ch,
        cn: &red.cn,
        d: Some(&red.d),
    };
    integrate_ode(&ode, u, t_final, dt, &out)
}

/// `p = −S⁻¹ (A21 E11⁻¹ f(v, u) + B2 u̇)` with factors computed once.
struct PressureMap {
    k: DMatrix<f64>,
    s: LU<f64, Dyn, Dyn>,
}

impl PressureMap {
    fn new(sys: &QbDaeSystem) -> Result<Self> {
        Ok(Self {
            k: sys.a21_e11_inv()?,
            s: sys.schur_complement()?.lu(),
        })
    }

    fn eval(&self, sys: &QbDaeSystem, v: &DVector<f64>, u: &DVector<f64>, du: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = &self.k * velocity_rhs(sys, v, u)? + &sys.b2 * du;
        Ok(-self
            .s
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("S = A21 E11^-1 A12".into()))?)
    }
}

/// Simulates an index-2 QB DAE from `v(0) = v0`.
///
/// Each step is an implicit-Euler step on the coupled velocity-pressure
/// system, so the constraint `A21 v + B2 u = 0` is enforced at every grid
/// point. The reported pressure (and hence the output
/// `y = C1 v + C2 p + D u`) is the one determined by the hidden constraint
/// at the current velocity and input.
pub fn simulate_dae(sys: &QbDaeSystem, u: &InputSignal, t_final: f64, dt: f64) -> Result<Trajectory> {
    check_input(u, sys.inputs())?;
    let ts = grid(t_final, dt)?;
    let (nv, np) = (sys.nv(), sys.np());
    let pm = PressureMap::new(sys)?;
    let u0 = u.sample(0.0);
    let c0 = (&sys.a21 * &sys.v0 + &sys.b2 * &u0).norm();
    if c0 > 1e-10 * (sys.a21.norm() * sys.v0.norm() + sys.b2.norm() * u0.norm()).max(1.0) {
        return Err(Error::Argument(format!(
            "inconsistent initial velocity: |A21 v0 + B2 u(0)| = {c0:.3e}"
        )));
    }
    let assemble = |v: &DVector<f64>, uk: &DVector<f64>| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(nv + np, nv + np);
        let mut blk = &sys.e11 - &sys.a11 * dt;
        sys.h.add_jacobian(v, -dt, &mut blk);
        for (k, nk) in sys.n.iter().enumerate() {
            blk -= nk * (dt * uk[k]);
        }
        jac.view_mut((0, 0), (nv, nv)).copy_from(&blk);
        jac.view_mut((0, nv), (nv, np)).copy_from(&(&sys.a12 * -dt));
        jac.view_mut((nv, 0), (np, nv)).copy_from(&sys.a21);
        jac
    };
    let linear = sys.h.is_zero() && sys.n.is_empty();
    let fixed = linear.then(|| assemble(&sys.v0, &u0).lu());

    let output = |v: &DVector<f64>, p: &DVector<f64>, uk: &DVector<f64>| &sys.c1 * v + &sys.c2 * p + &sys.d * uk;
    let mut tr = Trajectory {
        constraint_residual: Some(Vec::with_capacity(ts.len())),
        ..Default::default()
    };
    let mut v = sys.v0.clone();
    let mut p_iter = DVector::zeros(np);
    let p0 = pm.eval(sys, &v, &u0, &u.derivative(0.0))?;
    tr.y.push(output(&v, &p0, &u0));
    tr.pressure.push(p0);
    tr.constraint_residual.as_mut().expect("set").push(c0);
    tr.u.push(u0);
    tr.x.push(v.clone());
    for (step, &t) in ts.iter().enumerate().skip(1) {
        let uk = u.sample(t);
        let e_prev = &sys.e11 * &v;
        let mut z = DVector::zeros(nv + np);
        z.rows_mut(0, nv).copy_from(&v);
        z.rows_mut(nv, np).copy_from(&p_iter);
        let mut ok = false;
        let mut last = f64::INFINITY;
        for _ in 0..NEWTON_MAX {
            let vz = z.rows(0, nv).into_owned();
            let pz = z.rows(nv, np).into_owned();
            let f = velocity_rhs(sys, &vz, &uk)? + &sys.a12 * &pz;
            let mut g = DVector::zeros(nv + np);
            g.rows_mut(0, nv).copy_from(&(&sys.e11 * &vz - &e_prev - f * dt));
            g.rows_mut(nv, np).copy_from(&(&sys.a21 * &vz + &sys.b2 * &uk));
            let dz = match &fixed {
                Some(lu) => lu.solve(&(-g)),
                None => assemble(&vz, &uk).lu().solve(&(-g)),
            }
            .ok_or(Error::Newton { step, update: f64::NAN })?;
            z += &dz;
            last = dz.rows(0, nv).norm();
            if !last.is_finite() {
                break;
            }
            if last <= NEWTON_TOL * (1.0 + z.rows(0, nv).norm()) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Newton { step, update: last });
        }
        v = z.rows(0, nv).into_owned();
        p_iter = z.rows(nv, np).into_owned();
        let p = pm.eval(sys, &v, &uk, &u.derivative(t))?;
        tr.constraint_residual
            .as_mut()
            .expect("set")
            .push((&sys.a21 * &v + &sys.b2 * &uk).norm());
        tr.y.push(output(&v, &p, &uk));
        tr.pressure.push(p);
        tr.u.push(uk);
        tr.x.push(v.clone());
    }
    tr.t = ts;
    Ok(tr)
}

/// Error metrics between two trajectories on the same grid.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub samples: usize,
    /// `‖y_i − ŷ_i‖₂ / ‖y_i‖₂` over the grid, per output.
    pub per_output_rel_l2: Vec<f64>,
    /// The same ratio over all outputs together.
    pub aggregate_rel_l2: f64,
    pub per_output_max_abs: Vec<f64>,
    pub max_abs: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Relative L2 and max-abs output errors of `red` against `full`. On a
/// uniform grid the quadrature weights cancel in the ratios.
pub fn compare(full: &Trajectory, red: &Trajectory) -> Result<CompareReport> {
    if full.t.len() != red.t.len() {
        return Err(Error::Argument(format!(
            "grid mismatch: {} vs {} samples",
            full.t.len(),
            red.t.len()
        )));
    }
    for (k, (a, b)) in full.t.iter().zip(&red.t).enumerate() {
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::Argument(format!("grid mismatch at sample {k}: t = {a} vs {b}")));
        }
    }
    let p = full.y.first().map_or(0, |y| y.len());
    if red.y.first().map_or(0, |y| y.len()) != p {
        return Err(Error::dim("trajectories have different output counts"));
    }
    let mut num = vec![0.0; p];
    let mut den = vec![0.0; p];
    let mut max_abs = vec![0.0f64; p];
    for (yf, yr) in full.y.iter().zip(&red.y) {
        for i in 0..p {
            let d = yf[i] - yr[i];
            num[i] += d * d;
            den[i] += yf[i] * yf[i];
            max_abs[i] = max_abs[i].max(d.abs());
        }
    }
    Ok(CompareReport {
        samples: full.t.len(),
        per_output_rel_l2: (0..p).map(|i| ratio(num[i].sqrt(), den[i].sqrt())).collect(),
        aggregate_rel_l2: ratio(num.iter().sum::<f64>().sqrt(), den.iter().sum::<f64>().sqrt()),
        max_abs: max_abs.iter().copied().fold(0.0, f64::max),
        per_output_max_abs: max_abs,
    })
}
