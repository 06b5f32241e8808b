//! Breadth-first reachability over the round successor relation.
//!
//! Exploration is level-synchronous: successor generation for a whole level
//! may run on the rayon pool, while merging into the visited set happens in
//! frontier order on one thread. Runs are therefore deterministic and the
//! first violation found is at minimal depth.

mod inductive;
mod trace;

use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    GlobalState, Guards, Params, ParamsError, StateKey, TypeViolation,
};
use crate::properties::Property;
use crate::transition::{round_successors, round_targets, RoundStep, TransitionError};

pub use inductive::{
    check_inductive, enumerate_universe, InductiveReport, Obligation, ObligationFailure, Universe,
    DEFAULT_UNIVERSE_BUDGET,
};
pub use trace::{replay, ReplayError, Trace};

/// Frontiers smaller than this are expanded on the calling thread.
const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("reachable state {state} breaks its type: {violation}")]
    TypeInvariant {
        state: Box<GlobalState>,
        violation: TypeViolation,
    },
    #[error("state budget of {budget} exhausted after {explored} states")]
    BudgetExhausted { budget: u64, explored: u64 },
    #[error("universe of {size} states exceeds the budget of {budget}")]
    UniverseTooLarge { size: u64, budget: u64 },
    #[error("{0}")]
    UnreachableGuard(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds,
    Violated,
    DepthBoundReached,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Holds, Verdict::Violated, Verdict::DepthBoundReached];

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "HOLDS",
            Verdict::Violated => "VIOLATED",
            Verdict::DepthBoundReached => "DEPTH_BOUND_REACHED",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown verdict `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub states_explored: u64,
    /// Deepest level reached, in rounds.
    pub max_depth: u32,
    pub runtime_ms: u64,
    pub max_hlfsc_seen: u32,
    pub counterexample: Option<Trace>,
    #[serde(serialize_with = "ser_property")]
    pub property: Property,
    pub timeout_init: u32,
    pub guards: Guards,
}

fn ser_property<S: serde::Serializer>(p: &Property, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(p.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Disable only to cross-check dedup soundness at small depth.
    pub dedup: bool,
    /// Abort once this many states have been stored.
    pub max_states: u64,
    pub parallel: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            dedup: true,
            max_states: 50_000_000,
            parallel: true,
        }
    }
}

fn check_guards(p: &Params, property: Property) -> Result<(), CheckError> {
    match property {
        Property::Esa if p.timeout_cap < p.guards.g => Err(CheckError::UnreachableGuard(format!(
            "timeout_cap {} is below the guard g = {}",
            p.timeout_cap, p.guards.g
        ))),
        Property::Sc if p.hlfsc_cap < p.guards.g_prime => {
            Err(CheckError::UnreachableGuard(format!(
                "hlfsc_cap {} is below the guard g' = {}",
                p.hlfsc_cap, p.guards.g_prime
            )))
        }
        _ => Ok(()),
    }
}

struct Node {
    key: StateKey,
    parent: u32,
}

const ROOT: u32 = u32::MAX;

struct Store<'a> {
    nodes: Vec<Node>,
    index: FxHashMap<StateKey, u32>,
    opts: &'a ExploreOptions,
    p: &'a Params,
}

impl Store<'_> {
    fn contains(&self, s: &GlobalState) -> bool {
        self.opts.dedup && self.index.contains_key(&s.key())
    }

    /// Stores `s` unless already seen; returns its node id when new.
    fn visit(&mut self, s: &GlobalState, parent: u32) -> Result<Option<u32>, CheckError> {
        let key = s.key();
        let id = self.nodes.len() as u32;
        if self.opts.dedup {
            if self.index.contains_key(&key) {
                return Ok(None);
            }
            self.index.insert(key, id);
        }
        s.check_type(self.p)
            .map_err(|violation| CheckError::TypeInvariant {
                state: Box::new(*s),
                violation,
            })?;
        self.nodes.push(Node { key, parent });
        if self.nodes.len() as u64 > self.opts.max_states {
            return Err(CheckError::BudgetExhausted {
                budget: self.opts.max_states,
                explored: self.nodes.len() as u64,
            });
        }
        Ok(Some(id))
    }
}

fn expand(frontier: &[GlobalState], p: &Params, parallel: bool) -> Result<Vec<Vec<GlobalState>>, TransitionError> {
    if parallel && frontier.len() >= PARALLEL_THRESHOLD {
        frontier.par_iter().map(|s| round_targets(s, p)).collect()
    } else {
        frontier.iter().map(|s| round_targets(s, p)).collect()
    }
}

/// Exhaustive BFS from the initial state with `timeout0`.
pub fn explore(
    p: &Params,
    property: Property,
    timeout0: u32,
    opts: &ExploreOptions,
) -> Result<CheckReport, CheckError> {
    check_guards(p, property)?;
    let started = Instant::now();
    let initial = GlobalState::initial(p, timeout0)?;

    let mut store = Store {
        nodes: Vec::new(),
        index: FxHashMap::default(),
        opts,
        p,
    };
    let mut max_hlfsc = 0;
    let mut violation: Option<u32> = None;
    let mut bound_hit = false;

    let id = store.visit(&initial, ROOT)?.expect("first state is new");
    max_hlfsc = max_hlfsc.max(initial.hlfsc);
    if !property.holds(&initial, &p.guards) {
        violation = Some(id);
    }
    let mut frontier: Vec<(u32, GlobalState)> = vec![(id, initial)];
    let mut depth = 0u32;

    'levels: while violation.is_none() && !frontier.is_empty() {
        let at_bound = p.max_depth.is_some_and(|d| depth >= d);
        let states: Vec<GlobalState> = frontier.iter().map(|(_, s)| *s).collect();
        let successors = expand(&states, p, opts.parallel)?;
        let mut next = Vec::new();
        for ((parent, _), succ) in frontier.iter().zip(successors) {
            for s in succ {
                if at_bound {
                    if !store.contains(&s) {
                        bound_hit = true;
                        break 'levels;
                    }
                    continue;
                }
                if let Some(id) = store.visit(&s, *parent)? {
                    max_hlfsc = max_hlfsc.max(s.hlfsc);
                    if !property.holds(&s, &p.guards) {
                        violation = Some(id);
                        depth += 1;
                        break 'levels;
                    }
                    next.push((id, s));
                }
            }
        }
        if at_bound {
            break;
        }
        if !next.is_empty() {
            depth += 1;
        }
        frontier = next;
    }

    let counterexample = violation.map(|id| build_trace(&store.nodes, id, p)).transpose()?;
    let verdict = if counterexample.is_some() {
        Verdict::Violated
    } else if bound_hit {
        Verdict::DepthBoundReached
    } else {
        Verdict::Holds
    };
    Ok(CheckReport {
        verdict,
        states_explored: store.nodes.len() as u64,
        max_depth: depth,
        runtime_ms: started.elapsed().as_millis() as u64,
        max_hlfsc_seen: max_hlfsc,
        counterexample,
        property,
        timeout_init: timeout0,
        guards: p.guards,
    })
}

fn build_trace(nodes: &[Node], id: u32, p: &Params) -> Result<Trace, CheckError> {
    let mut path = vec![id];
    let mut cur = id;
    while nodes[cur as usize].parent != ROOT {
        cur = nodes[cur as usize].parent;
        path.push(cur);
    }
    path.reverse();
    let states: Vec<GlobalState> = path
        .iter()
        .map(|&i| GlobalState::from_key(nodes[i as usize].key, p))
        .collect();
    let mut trace = Trace::new(states[0]);
    for pair in states.windows(2) {
        let round = round_successors(&pair[0], p)?
            .into_iter()
            .find(|r| r.target() == &pair[1])
            .expect("recorded parent reaches its child");
        trace.steps.extend(round.steps);
    }
    Ok(trace)
}

/// Reports for every point of a STAR sweep (one point for a fixed timeout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub points: Vec<CheckReport>,
}

impl SweepReport {
    /// Violated if any point is, else bounded if any point is, else holds.
    pub fn verdict(&self) -> Verdict {
        let any = |v| self.points.iter().any(|r| r.verdict == v);
        if any(Verdict::Violated) {
            Verdict::Violated
        } else if any(Verdict::DepthBoundReached) {
            Verdict::DepthBoundReached
        } else {
            Verdict::Holds
        }
    }
}

/// Explores every initial timeout of `p` in turn.
pub fn explore_sweep(
    p: &Params,
    property: Property,
    opts: &ExploreOptions,
) -> Result<SweepReport, CheckError> {
    let points = p
        .initial_timeouts()
        .into_iter()
        .map(|t| explore(p, property, t, opts))
        .collect::<Result<_, _>>()?;
    Ok(SweepReport { points })
}

/// Every state reachable from the initial state with `timeout0`, in BFS
/// order.
pub fn reachable_states(
    p: &Params,
    timeout0: u32,
    max_states: u64,
) -> Result<Vec<GlobalState>, CheckError> {
    let mut out = Vec::new();
    for_each_round_transition(p, timeout0, max_states, |_, _| {}, |s| out.push(*s))?;
    Ok(out)
}

/// Walks the reachable state space and calls `on_round` for every round
/// transition and `on_state` once per reachable state.
pub fn for_each_round_transition(
    p: &Params,
    timeout0: u32,
    max_states: u64,
    mut on_round: impl FnMut(&GlobalState, &RoundStep),
    mut on_state: impl FnMut(&GlobalState),
) -> Result<u64, CheckError> {
    let initial = GlobalState::initial(p, timeout0)?;
    let mut seen: FxHashMap<StateKey, ()> = FxHashMap::default();
    seen.insert(initial.key(), ());
    on_state(&initial);
    let mut frontier = vec![initial];
    while !frontier.is_empty() {
        let expanded: Vec<Vec<RoundStep>> = frontier
            .par_iter()
            .map(|s| round_successors(s, p))
            .collect::<Result<_, _>>()?;
        let mut next = Vec::new();
        for (pre, rounds) in frontier.iter().zip(expanded) {
            for round in rounds {
                on_round(pre, &round);
                let t = *round.target();
                if seen.insert(t.key(), ()).is_none() {
                    if seen.len() as u64 > max_states {
                        return Err(CheckError::BudgetExhausted {
                            budget: max_states,
                            explored: seen.len() as u64,
                        });
                    }
                    on_state(&t);
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    Ok(seen.len() as u64)
}
