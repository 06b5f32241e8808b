//! Bounded-universe checking of candidate inductive invariants.
//!
//! The universe is every type-valid round-boundary state within the caps of
//! a [`Params`]. It is indexed in mixed radix so the check can be split into
//! index ranges and run on the rayon pool without materializing states.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::CheckError;
use crate::buffer::Buffer;
use crate::model::{GlobalState, Location, Params, SubRound, TransitionLabel};
use crate::properties::Property;
use crate::transition::round_successors;

/// Default cap on the number of universe states a check may visit.
pub const DEFAULT_UNIVERSE_BUDGET: u64 = 1 << 34;

/// Every round-boundary state within the field bounds of `p`.
#[derive(Debug, Clone)]
pub struct Universe {
    params: Params,
    s_locs: Vec<Location>,
    r_locs: Vec<Location>,
    /// Admissible `(timeout, wait_time)` pairs, `wait_time <= timeout`.
    clocks: Vec<(u32, u32)>,
    len: u64,
}

fn locations(crash_allowed: bool) -> Vec<Location> {
    if crash_allowed {
        vec![Location::Working, Location::Crashed]
    } else {
        vec![Location::Working]
    }
}

impl Universe {
    pub fn new(p: &Params, budget: u64) -> Result<Self, CheckError> {
        let s_locs = locations(p.allow_sender_crash);
        let r_locs = locations(p.allow_receiver_crash);
        let timers = (p.phi as u64 + 1).pow(2);
        let bufs = 1u64 << (p.delta + 1);
        let cap = p.timeout_cap as u64;
        let clock_pairs = cap * (cap + 3) / 2;
        let len = [
            s_locs.len() as u64,
            r_locs.len() as u64,
            timers,
            bufs,
            clock_pairs,
            4,
            p.hlfsc_cap as u64 + 1,
        ]
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .unwrap_or(u64::MAX);
        if len > budget {
            return Err(CheckError::UniverseTooLarge { size: len, budget });
        }
        let clocks = (1..=p.timeout_cap)
            .flat_map(|t| (0..=t).map(move |w| (t, w)))
            .collect();
        Ok(Universe {
            params: p.clone(),
            s_locs,
            r_locs,
            clocks,
            len,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The state with mixed-radix index `i` (hlfsc varies fastest).
    pub fn state_at(&self, mut i: u64) -> GlobalState {
        let p = &self.params;
        let mut digit = |radix: u64| {
            let d = i % radix;
            i /= radix;
            d
        };
        let hlfsc = digit(p.hlfsc_cap as u64 + 1) as u32;
        let delivered_this_round = digit(2) == 1;
        let suspected = digit(2) == 1;
        let (timeout, wait_time) = self.clocks[digit(self.clocks.len() as u64) as usize];
        let buf = digit(1 << (p.delta + 1));
        let r_timer = digit(p.phi as u64 + 1) as u32;
        let s_timer = digit(p.phi as u64 + 1) as u32;
        let r_loc = self.r_locs[digit(self.r_locs.len() as u64) as usize];
        let s_loc = self.s_locs[digit(self.s_locs.len() as u64) as usize];
        GlobalState {
            subround: SubRound::Sched,
            s_loc,
            r_loc,
            s_timer,
            r_timer,
            buf: Buffer::from_value(p.encoding, p.delta, buf).expect("value below 2^(delta+1)"),
            wait_time,
            timeout,
            suspected,
            delivered_this_round,
            hlfsc,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = GlobalState> + '_ {
        (0..self.len).map(|i| self.state_at(i))
    }
}

/// Streams the universe of `p`.
pub fn enumerate_universe(p: &Params) -> Result<Universe, CheckError> {
    Universe::new(p, DEFAULT_UNIVERSE_BUDGET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Obligation {
    /// Every initial state satisfies the invariant.
    Initiation,
    /// The invariant is closed under round successors.
    Consecution,
    /// The invariant implies the property.
    Safety,
}

impl Obligation {
    pub fn number(&self) -> u8 {
        match self {
            Obligation::Initiation => 1,
            Obligation::Consecution => 2,
            Obligation::Safety => 3,
        }
    }
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Obligation::Initiation => "initiation",
            Obligation::Consecution => "consecution",
            Obligation::Safety => "safety",
        };
        write!(f, "({}) {}", self.number(), name)
    }
}

/// The earliest (by universe index) witness for a failed obligation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObligationFailure {
    pub obligation: Obligation,
    pub state: GlobalState,
    /// For consecution: the round that leaves the invariant.
    pub labels: Option<[TransitionLabel; 4]>,
    pub successor: Option<GlobalState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InductiveReport {
    pub universe_size: u64,
    /// Universe states satisfying the invariant.
    pub invariant_states: u64,
    pub failures: Vec<ObligationFailure>,
    pub runtime_ms: u64,
}

impl InductiveReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failure(&self, o: Obligation) -> Option<&ObligationFailure> {
        self.failures.iter().find(|f| f.obligation == o)
    }
}

#[derive(Default)]
struct Partial {
    inv_states: u64,
    cti: Option<(u64, ObligationFailure)>,
    unsafe_state: Option<u64>,
}

fn earliest<T>(a: Option<(u64, T)>, b: Option<(u64, T)>) -> Option<(u64, T)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Checks the three obligations of an inductive invariant for `property`
/// over the bounded universe of `p`, visiting at most `budget` states.
pub fn check_inductive<F>(
    inv: F,
    property: Property,
    p: &Params,
    budget: u64,
) -> Result<InductiveReport, CheckError>
where
    F: Fn(&GlobalState) -> bool + Sync,
{
    let started = Instant::now();
    let universe = Universe::new(p, budget)?;
    let mut failures = Vec::new();

    for t in p.initial_timeouts() {
        let init = GlobalState::initial(p, t)?;
        if !inv(&init) {
            failures.push(ObligationFailure {
                obligation: Obligation::Initiation,
                state: init,
                labels: None,
                successor: None,
            });
            break;
        }
    }

    let step = |mut acc: Partial, i: u64| -> Result<Partial, CheckError> {
        let s = universe.state_at(i);
        if !inv(&s) {
            return Ok(acc);
        }
        acc.inv_states += 1;
        if acc.unsafe_state.is_none() && !property.holds(&s, &p.guards) {
            acc.unsafe_state = Some(i);
        }
        if acc.cti.is_none() {
            for round in round_successors(&s, p)? {
                if !inv(round.target()) {
                    acc.cti = Some((
                        i,
                        ObligationFailure {
                            obligation: Obligation::Consecution,
                            state: s,
                            labels: Some(round.labels()),
                            successor: Some(*round.target()),
                        },
                    ));
                    break;
                }
            }
        }
        Ok(acc)
    };
    let merged = (0..universe.len())
        .into_par_iter()
        .try_fold(Partial::default, step)
        .try_reduce(Partial::default, |a, b| {
            Ok(Partial {
                inv_states: a.inv_states + b.inv_states,
                cti: earliest(a.cti, b.cti),
                unsafe_state: earliest(a.unsafe_state.map(|i| (i, ())), b.unsafe_state.map(|i| (i, ())))
                    .map(|(i, ())| i),
            })
        })?;

    if let Some((_, cti)) = merged.cti {
        failures.push(cti);
    }
    if let Some(i) = merged.unsafe_state {
        failures.push(ObligationFailure {
            obligation: Obligation::Safety,
            state: universe.state_at(i),
            labels: None,
            successor: None,
        });
    }
    Ok(InductiveReport {
        universe_size: universe.len(),
        invariant_states: merged.inv_states,
        failures,
        runtime_ms: started.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Params {
        Params::builder(1, 1)
            .timeout(2)
            .timeout_cap(2)
            .hlfsc_cap(1)
            .build()
            .unwrap()
    }

    #[test]
    fn universe_indices_are_distinct_and_typed() {
        let p = tiny();
        let u = enumerate_universe(&p).unwrap();
        let mut keys: Vec<_> = u.iter().map(|s| s.key()).collect();
        for s in u.iter() {
            s.check_type(&p).unwrap();
        }
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len() as u64, u.len());
    }

    #[test]
    fn universe_budget_enforced() {
        let p = Params::builder(2, 4).build().unwrap();
        assert!(matches!(
            Universe::new(&p, 1000),
            Err(CheckError::UniverseTooLarge { budget: 1000, .. })
        ));
    }

    #[test]
    fn trivial_invariant_fails_safety_only() {
        let p = Params::builder(1, 1)
            .timeout(1)
            .timeout_cap(2)
            .hlfsc_cap(1)
            .build()
            .unwrap();
        let r = check_inductive(|_| true, Property::Sa, &p, u64::MAX).unwrap();
        assert!(!r.holds());
        assert_eq!(r.failures.len(), 1);
        let f = r.failure(Obligation::Safety).unwrap();
        assert!(!Property::Sa.holds(&f.state, &p.guards));
    }

    #[test]
    fn false_fails_initiation() {
        let r = check_inductive(|_| false, Property::Sa, &tiny(), u64::MAX).unwrap();
        assert_eq!(r.invariant_states, 0);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].obligation, Obligation::Initiation);
    }
}
