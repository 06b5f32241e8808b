use std::fmt::Write as _;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{GlobalState, Params, TransitionLabel};
use crate::properties::Property;
use crate::transition::{apply_label, TransitionError};

/// An initial state followed by labelled sub-round steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: GlobalState,
    pub steps: Vec<(TransitionLabel, GlobalState)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("initial state is not an initial state of the instance")]
    BadInitial,
    #[error("step {index}: {source}")]
    Disabled {
        index: usize,
        source: TransitionError,
    },
    #[error("step {index}: recorded state differs from the replayed one")]
    Mismatch { index: usize },
    #[error("final state satisfies {0}; not a counterexample")]
    NotAViolation(Property),
}

impl ReplayError {
    /// Index of the first diverging step, if the trace diverged.
    pub fn step_index(&self) -> Option<usize> {
        match self {
            ReplayError::Disabled { index, .. } | ReplayError::Mismatch { index } => Some(*index),
            _ => None,
        }
    }
}

impl Trace {
    pub fn new(initial: GlobalState) -> Self {
        Trace {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn last(&self) -> &GlobalState {
        self.steps.last().map_or(&self.initial, |(_, s)| s)
    }

    /// Completed rounds.
    pub fn rounds(&self) -> usize {
        self.steps.len() / 4
    }

    /// One line per sub-round step:
    /// `round=<n> sub=<SCHED|SND|RCV|COMP> label=<...> state={...}`.
    pub fn render_text(&self) -> String {
        let mut out = format!("init state={}\n", self.initial);
        for (i, (label, state)) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "round={} sub={} label={} state={}",
                i / 4 + 1,
                label.subround(),
                label,
                state
            );
        }
        out
    }
}

impl Serialize for Trace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Steps<'a>(&'a [(TransitionLabel, GlobalState)]);
        impl Serialize for Steps<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
                for (i, (label, state)) in self.0.iter().enumerate() {
                    seq.serialize_element(&Step {
                        round: i / 4 + 1,
                        sub: label.subround().to_string(),
                        label: *label,
                        state,
                    })?;
                }
                seq.end()
            }
        }
        #[derive(Serialize)]
        struct Step<'a> {
            round: usize,
            sub: String,
            label: TransitionLabel,
            state: &'a GlobalState,
        }
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("initial", &self.initial)?;
        map.serialize_entry("steps", &Steps(&self.steps))?;
        map.end()
    }
}

/// Replays `trace` against the transition relation of `p`.
///
/// With `violates = Some(prop)` the final state must also falsify `prop`.
pub fn replay(trace: &Trace, p: &Params, violates: Option<Property>) -> Result<(), ReplayError> {
    let initial_ok = p
        .initial_timeouts()
        .into_iter()
        .filter_map(|t| GlobalState::initial(p, t).ok())
        .any(|init| init == trace.initial);
    if !initial_ok {
        return Err(ReplayError::BadInitial);
    }
    let mut current = trace.initial;
    for (index, (label, recorded)) in trace.steps.iter().enumerate() {
        let next = apply_label(&current, *label, p)
            .map_err(|source| ReplayError::Disabled { index, source })?;
        if next != *recorded {
            return Err(ReplayError::Mismatch { index });
        }
        current = next;
    }
    if let Some(prop) = violates {
        if prop.holds(trace.last(), &p.guards) {
            return Err(ReplayError::NotAViolation(prop));
        }
    }
    Ok(())
}
