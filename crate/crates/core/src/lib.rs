//! Explicit-state verification of a timeout-based eventually perfect
//! failure detector under partial synchrony.
//!
//! The two-process model lives in [`model`], [`buffer`] and [`transition`];
//! [`checker`] explores it, [`cutoff`] relates it to a small N-process
//! instance.

pub mod buffer;
pub mod checker;
pub mod cutoff;
pub mod invariants;
pub mod model;
pub mod properties;
pub mod transition;

pub use buffer::{Buffer, Encoding};
pub use checker::{explore, explore_sweep, CheckError, CheckReport, ExploreOptions, Verdict};
pub use model::{GlobalState, Guards, Params, TimeoutInit};
pub use properties::Property;
