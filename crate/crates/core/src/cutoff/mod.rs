//! Bounded evidence relating the two-process reduction to symmetric
//! N-process instances.

mod projection;
mod system;
mod traceset;

use thiserror::Error;

use crate::model::ParamsError;
use crate::transition::TransitionError;

pub use projection::{
    abstract_config, check_lift_round_trip, check_projection_admissible,
    check_reduction_bisimulation, check_symmetry, index_project, lift_label, lift_trace,
    project_label, project_round, project_trace, replay_generic, swap, CheckStats, Lifting,
};
pub use system::{
    build_system, GenericConfig, GenericLabel, GenericRound, GenericSystem, GenericTrace,
    PackedConfig, PairState, MAX_DELTA, MAX_N,
};
pub use traceset::{
    one_index_sets_equal, trace_sets_equal, trace_sets_equal_with, Observation, Side,
    TraceSetReport, Witness, MAX_DEPTH,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CutoffError {
    #[error("process count {0} outside 1..=3")]
    ProcessCount(usize),
    #[error("depth {0} exceeds the supported maximum")]
    Depth(u32),
    #[error("initial timeout {0} outside the instance's range")]
    Timeout(u32),
    #[error("more than {0} configurations; budget exhausted")]
    Budget(usize),
    #[error("round {label} disabled: {reason}")]
    Disabled { label: String, reason: String },
    #[error("type invariant violated: {0}")]
    Type(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("instance too large for the N-process encoding: {0}")]
    Capacity(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}
