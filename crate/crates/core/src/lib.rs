//! Matrix optimizers that apply spectral (matrix-sign) updates inside a
//! Kronecker-factored whitened basis, together with the baselines they are
//! measured against and a deterministic benchmark harness.
//!
//! The numeric core is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); the crate root exports `f64` aliases, which is what the
//! harness, the checkpoint format, and all documented tolerances use.
//!
//! Modules:
//! - [`linalg`]: dense matrices, Jacobi eigendecomposition, thin SVD, seeded
//!   random matrices (ChaCha8 + Box-Muller).
//! - [`spectral`]: Newton-Schulz matrix sign, exact polar oracle, tempered
//!   scalers, trace normalization.
//! - [`precond`]: EMA Kronecker factors with amortized refresh and the
//!   whiten/unwhiten transforms.
//! - [`optim`]: mousse, muon, shampoo, soap, adamw, lion, elementwise.
//! - [`sched`]: cosine / warmup-stable-decay / constant learning-rate
//!   schedules.
//! - [`testbed`]: Kronecker quadratic and squared-ReLU MLP problems with
//!   exact gradients and a finite-difference oracle.
//! - [`harness`]: run configs, the experiment engine, grid search, metrics,
//!   CSV/JSON records, and binary checkpoints.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod precond;
pub mod sched;
pub mod spectral;
pub mod testbed;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense `f64` matrix, the carrier used by the harness.
pub type Matrix = linalg::Matrix<f64>;
pub type EigDecomp = linalg::EigDecomp<f64>;
pub type SvdDecomp = linalg::SvdDecomp<f64>;
pub type NsConfig = spectral::NsConfig<f64>;
pub type KroneckerStats = precond::KroneckerStats<f64>;
pub type PrecondConfig = precond::PrecondConfig<f64>;
pub type OptimizerState = optim::OptimizerState<f64>;
pub type StepContext = optim::StepContext<f64>;
pub type UpdateReport = optim::UpdateReport<f64>;
pub type ScheduleSpec = sched::ScheduleSpec<f64>;
pub type KronQuadratic = testbed::KronQuadratic<f64>;
pub type MlpProblem = testbed::MlpProblem<f64>;
