//! Quasi-static rod dynamics, wall contacts, synthetic operators and trials.

mod batch;
mod contact;
pub mod log;
mod operator;
mod state;
mod trial;

use thiserror::Error;

pub use batch::{execute, run_batch, BatchEntry};
pub use contact::{detect_wall_contact, ContactCounter, ContactEvent, DEFAULT_DEBOUNCE_TICKS};
pub use log::{Event, LogError, TerminalStatus, TickRecord, TrialFooter, TrialHeader, TrialLog};
pub use operator::{GripProfile, OperatorInput, OperatorModel, SyntheticOperator};
pub use state::{segment_is_free, step, Endpoint, ManipulatorState, RobotState, SimParams, StepOutcome};
pub use trial::{run_trial, Environment, TrialEngine, TrialParams, TrialSetup};

use crate::control::ControlError;
use crate::phantom::PhantomError;
use crate::planner::PlanError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible trial: {0}")]
    InfeasibleTrial(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Control(#[from] ControlError),
}
