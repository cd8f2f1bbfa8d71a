//! State observation for a synchronous generator from PMU measurements.
//!
//! A third-order flux-decay machine model is observed through terminal
//! phasor measurements. The unmeasured flux components are recovered by a
//! parameter-estimation-based observer whose unknown initial condition is
//! identified with dynamic regressor extension and mixing. Two baseline
//! observers are included for comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod config;
pub mod drem;
pub mod error;
pub mod gpebo;
pub mod linalg;
pub mod model;
pub mod output;
pub mod pmu;
pub mod report;
pub mod runner;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::{derive_coefficients, DerivedCoefficients, Inputs, MachineParams, PlantState};
pub use config::{load_config, parse_config, RunConfig};
pub use sim::{run_scenario, Scenario, Trajectory};
