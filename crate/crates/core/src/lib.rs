//! Interpolatory truncated-H2 model reduction for quadratic-bilinear (QB)
//! systems.
//!
//! The crate covers QB ODEs `E x' = A x + H (x ⊗ x) + Σ N_k x u_k + B u`
//! and index-2 QB descriptor systems with a velocity/pressure split. The
//! descriptor variant is reduced without ever forming the oblique
//! projectors: every projected shifted solve is replaced by a saddle-point
//! solve on the original blocks.
//!
//! Module map:
//!
//! * [`tensor_kron`]: vec/kron, third-order Hessian tensors, matricizations.
//! * [`system_model`]: full and reduced realizations, Petrov-Galerkin projection.
//! * [`dense_solvers`]: pencil eigendecomposition, shifted, Sylvester,
//!   Lyapunov and saddle-point solves.
//! * [`dae_transform`]: projectors, pressure elimination, output corrections,
//!   the explicit projected ODE and `B2 != 0` homogenization.
//! * [`tqb_irka`]: the iteration drivers (ODE, explicit-projector DAE,
//!   saddle-point DAE).
//! * [`gramians_norms`]: linear, truncated and full QB Gramians; H2 norms.
//! * [`simulate`]: implicit-Euler time integration and trajectory comparison.
//! * [`problems`]: benchmark generators, steady-state shift, file ingestion.

// `!(x <= tol)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dae_transform;
pub mod dense_solvers;
mod error;
pub mod gramians_norms;
pub mod io;
mod linalg;
mod par;
pub mod problems;
pub mod simulate;
pub mod sparse;
pub mod system_model;
pub mod tensor_kron;
pub mod tqb_irka;

pub use error::{Error, Result};

/// Complex scalar used by all shifted solves.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

pub use dae_transform::{HomogenizedDae, OutputRealization, ProjectorRealization};
pub use dense_solvers::SpectralFactorization;
pub use linalg::max_principal_angle_sine;
pub use gramians_norms::{GramianKind, GramianPair};
pub use simulate::{InputSignal, Trajectory};
pub use sparse::CooMatrix;
pub use system_model::{QbDaeSystem, QbOdeSystem, ReducedQbSystem};
pub use tensor_kron::HessianTensor;
pub use tqb_irka::{IrkaConfig, IrkaTrace};
