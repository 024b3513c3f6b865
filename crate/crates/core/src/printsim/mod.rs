//! Seeded layer-by-layer print simulation.
//!
//! The simulator owns the ground truth: an [`ActuatorModel`] turns the
//! commanded value of the decision parameter into the achieved one, with a
//! gain, a linear per-layer drift and lognormal noise. A [`SensorModel`]
//! observes achieved values with Gaussian noise on their logarithm, and an
//! [`EstimatorState`] keeps a conjugate Gaussian posterior per element.
//!
//! The controller only ever sees a [`ControllerView`]: the plan, the
//! commands it issued, the measurement log and the posterior means. After
//! each layer it learns the actuator from the measurements and re-plans
//! the unprinted layers with [`reoptimize_after_drift`](crate::optimize::reoptimize_after_drift).
//! The final check runs against the achieved field.
//!
//! # Random numbers
//!
//! Every draw is independent of evaluation order. The draw for
//! `(seed, channel, a, b)` seeds a ChaCha8 generator (`rand_chacha`) with
//! the 32 bytes `seed ‖ channel ‖ a ‖ b` (each a little-endian `u64`) and
//! takes one `StandardNormal` sample from `rand_distr`. The actuator uses
//! channel 1 with `(layer, element)`, the sensor channel 2 with
//! `(round, element)`.

mod control;
mod models;
mod rng;
mod scenario;
mod state;

use thiserror::Error;

use crate::mesh::MeshError;
use crate::optimize::OptimizeError;
use crate::semantics::SemanticError;

pub use control::{
    control_step, run_print, ControlDecision, LayerRecord, Outcome, Policy, PrintReport, RunConfig,
};
pub use models::{calibrate_actuator, ActuatorModel, Coverage, EstimatorState, SensorModel, TestPrint};
pub use rng::{standard_normal, ACTUATOR_CHANNEL, SENSOR_CHANNEL};
pub use scenario::{LoadedScenario, Scenario};
pub use state::{observe_and_update, print_layer, ControllerView, Measurement, PrintState};

#[derive(Debug, Error)]
pub enum PrintError {
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("print already complete ({layers} layers)")]
    Complete { layers: usize },
    #[error("nothing has been printed yet")]
    NothingPrinted,
    #[error("calibration needs at least {needed} test prints, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("initial plan is infeasible")]
    InfeasiblePlan,
    #[error("scenario {path}: {reason}")]
    Scenario { path: String, reason: String },
}
