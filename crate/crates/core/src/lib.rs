//! Indirect optimal control of endo-atmospheric launch-vehicle trajectories.
//!
//! The pipeline solves a simplified abscissa-domain problem seeded by a
//! closed-form line-of-sight guidance law, then deforms it into the full
//! time-domain problem by continuation on two homotopy parameters.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod error;
pub mod full_ocp;
pub mod guidance;
pub mod integrator;
pub mod newton;
pub mod scenario;
pub mod shooting;
pub mod simplified;
pub mod sweep;
pub mod trajectory;
pub mod validate;
pub mod vehicle;

pub use continuation::{solve, ContinuationOpts, OptimalSolution, RunReport};
pub use error::{Error, Result};
pub use scenario::Scenario;
pub use trajectory::{Domain, Trajectory};
pub use vehicle::{FullState, VehicleParams};
