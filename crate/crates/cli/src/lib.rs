//! Command implementations behind the `qbmor` binary.
//!
//! [`run`] parses arguments, dispatches and maps the outcome onto the exit
//! code contract: 0 success, 1 runtime or solver error, 2 usage error,
//! 3 reduction stopped at the iteration limit (artifacts still written).

// `!(x <= tol)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qbmor_core::dae_transform::{build_projectors, explicit_ode, homogenize_b2};
use qbmor_core::gramians_norms::{linear_h2_norm, truncated_h2_norm};
use qbmor_core::io::{load_system, save_dae, save_ode, save_reduced, write_atomic, LoadedSystem};
use qbmor_core::problems::{gen_burgers, gen_synthetic_dae, SyntheticDaeConfig};
use qbmor_core::simulate::{compare, simulate_dae, simulate_ode, simulate_reduced};
use qbmor_core::tqb_irka::{tqb_irka_dae_explicit, tqb_irka_dae_saddle, tqb_irka_ode};
use qbmor_core::{InputSignal, IrkaConfig, IrkaTrace, QbOdeSystem, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Environment variable capping the worker threads of the solver pool.
pub const THREADS_ENV: &str = "QBMOR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qbmor", version, about = "Interpolatory model reduction for quadratic-bilinear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a benchmark system and write it as manifest + Matrix Market files.
    Gen(GenArgs),
    /// Reduce a system with TQB-IRKA.
    Reduce(ReduceArgs),
    /// Simulate a full, descriptor or reduced system and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Compare two trajectories on the same grid.
    Compare(CompareArgs),
    /// Print an H2-type norm of a system.
    Norm(NormArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Problem {
    Burgers,
    SyntheticDae,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    problem: Problem,
    /// Interior nodes (burgers).
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Viscosity (burgers).
    #[arg(long, default_value_t = 0.01)]
    nu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Velocity dimension (synthetic-dae).
    #[arg(long, default_value_t = 60)]
    nv: usize,
    /// Pressure dimension (synthetic-dae).
    #[arg(long, default_value_t = 12)]
    np: usize,
    /// Inputs (synthetic-dae).
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Outputs (synthetic-dae).
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 0.1)]
    quad_scale: f64,
    /// Use A21 = A12ᵀ.
    #[arg(long)]
    symmetric: bool,
    /// Add a pressure output C2.
    #[arg(long)]
    with_c2: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Route {
    /// Saddle-point solves on the original blocks.
    Saddle,
    /// Explicit projector factors (small systems only).
    Explicit,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver route for descriptor systems.
    #[arg(long, value_enum, default_value_t = Route::Saddle)]
    route: Route,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    system: PathBuf,
    /// `preset:cavity`, `csv:<path>` or `zero`.
    #[arg(long, default_value = "preset:cavity")]
    input: String,
    #[arg(long, default_value_t = 10.0)]
    t_final: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    full: PathBuf,
    #[arg(long)]
    reduced: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormKind {
    TruncatedH2,
    LinearH2,
}

#[derive(Debug, Args)]
struct NormArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, value_enum, default_value_t = NormKind::TruncatedH2)]
    kind: NormKind,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<qbmor_core::Error> for Failure {
    fn from(e: qbmor_core::Error) -> Self {
        // Core errors already render their causes in Display.
        Failure::Runtime(anyhow::Error::msg(e.to_string()))
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr, results to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return EXIT_USAGE;
    }
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Norm(a) => cmd_norm(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `qbmor --help` for usage");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    // A pool configured earlier in the same process stays in place.
    #[cfg(feature = "parallel")]
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let manifest = match a.problem {
        Problem::Burgers => {
            if a.n < 4 {
                return Err(usage("--n must be at least 4"));
            }
            if !(a.nu > 0.0) {
                return Err(usage("--nu must be positive"));
            }
            save_ode(&gen_burgers(a.n, a.nu, a.seed)?, &a.out)?
        }
        Problem::SyntheticDae => {
            if a.np == 0 || 2 * a.np >= a.nv {
                return Err(usage("need 0 < --np < --nv / 2"));
            }
            if a.m == 0 || a.p == 0 {
                return Err(usage("--m and --p must be positive"));
            }
            if !(a.quad_scale >= 0.0) {
                return Err(usage("--quad-scale must be nonnegative"));
            }
            let cfg = SyntheticDaeConfig {
                nv: a.nv,
                np: a.np,
                m: a.m,
                p: a.p,
                seed: a.seed,
                quad_scale: a.quad_scale,
                symmetric: a.symmetric,
                with_c2: a.with_c2,
            };
            save_dae(&gen_synthetic_dae(&cfg)?, &a.out)?
        }
    };
    println!("{}", manifest.display());
    Ok(EXIT_OK)
}

/// Trace file written next to the reduced model.
#[derive(Debug, Serialize)]
struct TraceFile<'a> {
    system_type: &'static str,
    route: &'static str,
    order: usize,
    tol: f64,
    max_iters: usize,
    seed: u64,
    #[serde(flatten)]
    trace: &'a IrkaTrace,
}

fn load(path: &Path) -> std::result::Result<LoadedSystem, Failure> {
    load_system(path).map_err(|e| Failure::Runtime(anyhow!("loading {}: {e}", path.display())))
}

fn cmd_reduce(a: ReduceArgs) -> CmdResult {
    if !(a.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    if a.max_iters == 0 {
        return Err(usage("--max-iters must be positive"));
    }
    let sys = load(&a.system)?;
    let state_dim = match &sys {
        LoadedSystem::Ode(s) => s.order(),
        LoadedSystem::Dae(s) => s.nv() - s.np(),
        LoadedSystem::Reduced { .. } => return Err(usage("--system is already a reduced model")),
    };
    if a.order == 0 || a.order >= state_dim {
        return Err(usage(format!(
            "order must be < state dimension (order {}, state dimension {state_dim})",
            a.order
        )));
    }
    let mut cfg = IrkaConfig::new(a.order);
    cfg.tol = a.tol;
    cfg.max_iters = a.max_iters;
    cfg.seed = a.seed;
    let (red, trace, base_inputs, system_type, route) = match sys {
        LoadedSystem::Ode(s) => {
            let (red, trace) = tqb_irka_ode(&s, &cfg)?;
            (red, trace, None, "ode", "direct")
        }
        LoadedSystem::Dae(s) => {
            let (dae, base) = if s.has_b2() {
                let h = homogenize_b2(&s)?;
                (h.system, Some(h.base_inputs))
            } else {
                (s, None)
            };
            let (red, trace, route) = match a.route {
                Route::Saddle => {
                    let (r, t) = tqb_irka_dae_saddle(&dae, &cfg)?;
                    (r, t, "saddle")
                }
                Route::Explicit => {
                    let (r, t) = tqb_irka_dae_explicit(&dae, &cfg)?;
                    (r, t, "explicit")
                }
            };
            (red, trace, base, "dae", route)
        }
        LoadedSystem::Reduced { .. } => unreachable!("rejected above"),
    };
    save_reduced(&red, base_inputs, &a.out)?;
    let file = TraceFile {
        system_type,
        route,
        order: a.order,
        tol: a.tol,
        max_iters: a.max_iters,
        seed: a.seed,
        trace: &trace,
    };
    let mut text = serde_json::to_string_pretty(&file).context("serializing trace")?;
    text.push('\n');
    write_atomic(&a.out.join("trace.json"), text.as_bytes())?;
    let last = trace.relative_changes().last().copied().unwrap_or(f64::NAN);
    println!(
        "iterations {} converged {} last relative change {last:.3e}",
        trace.iterations_used, trace.converged
    );
    if trace.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: no convergence within {} iterations", a.max_iters);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn parse_input(spec: &str, m: usize) -> std::result::Result<InputSignal, Failure> {
    if spec == "zero" {
        return Ok(InputSignal::Zero { m });
    }
    if spec == "preset:cavity" {
        return Ok(InputSignal::Preset { m });
    }
    if let Some(path) = spec.strip_prefix("csv:") {
        let sig = InputSignal::from_csv(Path::new(path))?;
        if sig.channels() != m {
            return Err(Failure::Runtime(anyhow!(
                "{path}: table has {} input columns, the system has {m} inputs",
                sig.channels()
            )));
        }
        return Ok(sig);
    }
    Err(usage(format!(
        "unknown --input {spec:?}; expected preset:cavity, csv:<path> or zero"
    )))
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    if !(a.dt > 0.0) || !(a.t_final > 0.0) {
        return Err(usage("--dt and --t-final must be positive"));
    }
    let sys = load(&a.system)?;
    let traj: Trajectory = match sys {
        LoadedSystem::Ode(s) => simulate_ode(&s, &parse_input(&a.input, s.inputs())?, a.t_final, a.dt)?,
        LoadedSystem::Dae(s) => simulate_dae(&s, &parse_input(&a.input, s.inputs())?, a.t_final, a.dt)?,
        LoadedSystem::Reduced { system, base_inputs } => {
            let u = match base_inputs {
                Some(m) => InputSignal::Homogenized(Box::new(parse_input(&a.input, m)?)),
                None => parse_input(&a.input, system.inputs())?,
            };
            simulate_reduced(&system, &u, a.t_final, a.dt)?
        }
    };
    traj.write_csv(&a.out)?;
    println!("{} samples written to {}", traj.t.len(), a.out.display());
    Ok(EXIT_OK)
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let full = Trajectory::from_csv(&a.full)?;
    let red = Trajectory::from_csv(&a.reduced)?;
    let report = compare(&full, &red)?;
    let mut text = serde_json::to_string_pretty(&report).context("serializing report")?;
    text.push('\n');
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    if a.out.is_some() {
        println!("aggregate relative L2 error {:.6e}", report.aggregate_rel_l2);
    }
    Ok(EXIT_OK)
}

fn norm_system(sys: LoadedSystem) -> std::result::Result<QbOdeSystem, Failure> {
    Ok(match sys {
        LoadedSystem::Ode(s) => s,
        LoadedSystem::Reduced { system, .. } => system.to_ode()?,
        LoadedSystem::Dae(s) => {
            if s.has_b2() {
                bail_runtime("norms of descriptor systems need B2 = 0")?;
            }
            if s.c2.iter().any(|&x| x != 0.0) {
                bail_runtime("norms of descriptor systems need C2 = 0")?;
            }
            let proj = build_projectors(&s)?;
            explicit_ode(&s, &proj)?.0
        }
    })
}

fn bail_runtime(msg: &str) -> std::result::Result<(), Failure> {
    Err(Failure::Runtime(anyhow!("{msg}")))
}

fn cmd_norm(a: NormArgs) -> CmdResult {
    let sys = norm_system(load(&a.system)?)?;
    let v = match a.kind {
        NormKind::TruncatedH2 => truncated_h2_norm(&sys)?,
        NormKind::LinearH2 => linear_h2_norm(&sys)?,
    };
    if !v.is_finite() {
        bail_runtime("norm is not finite")?;
    }
    println!("{v:.12}");
    Ok(EXIT_OK)
}
