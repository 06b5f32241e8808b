//! Strong Accuracy and the guarded safety forms of Eventually Strong
//! Accuracy and Strong Completeness, evaluated on single states, plus the
//! two transition invariants that justify the guards.

use std::fmt;
use std::str::FromStr;

use crate::model::{GlobalState, Guards, Location, Params, ReceiveKind, TransitionLabel};
use crate::transition::RoundStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    /// Strong Accuracy.
    Sa,
    /// Eventually Strong Accuracy, reduced with guard `g`.
    Esa,
    /// Strong Completeness, reduced with guard `g'` on the ghost counter.
    Sc,
}

impl Property {
    pub fn name(&self) -> &'static str {
        match self {
            Property::Sa => "sa",
            Property::Esa => "esa",
            Property::Sc => "sc",
        }
    }

    pub fn holds(&self, s: &GlobalState, guards: &Guards) -> bool {
        match self {
            Property::Sa => eval_sa(s),
            Property::Esa => eval_esa_reduced(s, guards.g),
            Property::Sc => eval_sc_reduced(s, guards.g_prime),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sa" => Ok(Property::Sa),
            "esa" => Ok(Property::Esa),
            "sc" => Ok(Property::Sc),
            other => Err(format!("unknown property `{other}` (expected sa, esa or sc)")),
        }
    }
}

/// No correct receiver suspects a correct sender.
pub fn eval_sa(s: &GlobalState) -> bool {
    !(s.both_correct() && s.suspected)
}

/// Once `timeout >= g`, Strong Accuracy must hold.
pub fn eval_esa_reduced(s: &GlobalState, g: u32) -> bool {
    s.timeout < g || eval_sa(s)
}

/// Once the ghost counter reaches `g'`, a crashed sender must be suspected
/// by a correct receiver.
pub fn eval_sc_reduced(s: &GlobalState, g_prime: u32) -> bool {
    let crashed_unsuspected =
        s.s_loc == Location::Crashed && s.r_loc == Location::Working && !s.suspected;
    s.hlfsc != g_prime || !crashed_unsuspected
}

/// Default guards for an instance (ignores any override in `p`).
pub fn default_guards(p: &Params) -> Guards {
    Guards::default_for(p.delta, p.phi)
}

/// Whether the round delivers a message to a receiver that suspected the
/// sender.
fn corrects_suspicion(round: &RoundStep) -> bool {
    let (rcv_label, _) = round.steps[2];
    matches!(rcv_label, TransitionLabel::Receive(ReceiveKind::Deliver(m)) if m != 0)
        && round.steps[1].1.suspected
}

/// Transition invariant for the timeout: a round that delivers a message
/// while both processes work and the receiver suspects the sender grows
/// `timeout` by exactly one (saturating at the cap).
pub fn psi1_holds(pre: &GlobalState, round: &RoundStep, p: &Params) -> bool {
    let working = round.steps[1].1.both_correct();
    !(corrects_suspicion(round) && working)
        || round.target().timeout == (pre.timeout + 1).min(p.timeout_cap)
}

/// Exact form of [`psi1_holds`]: `timeout` grows by one on every
/// suspicion-correcting delivery and is unchanged otherwise. Messages of a
/// sender that crashed after sending still correct a suspicion.
pub fn psi1_exact(pre: &GlobalState, round: &RoundStep, p: &Params) -> bool {
    let post = round.target().timeout;
    if corrects_suspicion(round) {
        post == (pre.timeout + 1).min(p.timeout_cap)
    } else {
        post == pre.timeout
    }
}

/// The ghost-counter guard: sender crashed, receiver correct, no suspicion.
pub fn psi2(s: &GlobalState) -> bool {
    s.s_loc == Location::Crashed && s.r_loc == Location::Working && !s.suspected
}

/// Transition invariant for the ghost counter: `hlfsc` grows by exactly
/// one (below the cap) in a round iff `psi2` holds when the round's
/// Computation starts, after the round's crash reset. The guard is read
/// after delivery, so a message delivered this round clears it first.
pub fn psi2_holds(pre: &GlobalState, round: &RoundStep, p: &Params) -> bool {
    let crashed_now = pre.s_loc == Location::Working && round.steps[0].1.s_loc == Location::Crashed;
    let base = if crashed_now { 0 } else { pre.hlfsc };
    let expected = if psi2(&round.steps[2].1) {
        (base + 1).min(p.hlfsc_cap)
    } else {
        base
    };
    round.target().hlfsc == expected
}
