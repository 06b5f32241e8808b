//! Hand-written inductive invariant for Strong Accuracy.
//!
//! While both processes are correct, `delivery_deadline` bounds how many
//! more receiver ticks can pass before the next delivery. That keeps
//! `wait_time` below any timeout larger than `Δ + Φ`, so no suspicion can
//! be raised.

use crate::model::{GlobalState, Params};

/// A named state predicate.
pub struct Conjunct {
    pub name: &'static str,
    pub eval: fn(&GlobalState, &Params) -> bool,
}

/// A conjunction of named predicates; conjuncts can be dropped by name for
/// mutation testing.
pub struct ConjunctiveInvariant {
    pub conjuncts: Vec<Conjunct>,
}

impl ConjunctiveInvariant {
    pub fn holds(&self, s: &GlobalState, p: &Params) -> bool {
        self.conjuncts.iter().all(|c| (c.eval)(s, p))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.conjuncts.iter().map(|c| c.name).collect()
    }

    /// The same invariant without conjunct `name`.
    ///
    /// # Panics
    /// If no conjunct has that name.
    pub fn without(&self, name: &str) -> ConjunctiveInvariant {
        assert!(
            self.conjuncts.iter().any(|c| c.name == name),
            "no conjunct named {name}"
        );
        ConjunctiveInvariant {
            conjuncts: self
                .conjuncts
                .iter()
                .filter(|c| c.name != name)
                .map(|c| Conjunct {
                    name: c.name,
                    eval: c.eval,
                })
                .collect(),
        }
    }
}

/// Upper bound on the receiver ticks that can still elapse before the next
/// delivery, assuming both processes stay correct.
pub fn ticks_to_delivery(s: &GlobalState, p: &Params) -> u32 {
    match s.buf.oldest_age() {
        Some(age) => p.delta - 1 - age.min(p.delta - 1),
        None => p.phi - s.s_timer + p.delta,
    }
}

fn no_false_suspicion(s: &GlobalState, _: &Params) -> bool {
    !(s.both_correct() && s.suspected)
}

fn delivery_deadline(s: &GlobalState, p: &Params) -> bool {
    !s.both_correct() || s.wait_time + ticks_to_delivery(s, p) <= p.delta + p.phi
}

fn timeout_above_deadline(s: &GlobalState, p: &Params) -> bool {
    s.timeout > p.delta + p.phi
}

/// Inductive invariant implying Strong Accuracy whenever every initial
/// timeout exceeds `Δ + Φ`.
pub fn sa_invariant() -> ConjunctiveInvariant {
    ConjunctiveInvariant {
        conjuncts: vec![
            Conjunct {
                name: "no_false_suspicion",
                eval: no_false_suspicion,
            },
            Conjunct {
                name: "delivery_deadline",
                eval: delivery_deadline,
            },
            Conjunct {
                name: "timeout_above_deadline",
                eval: timeout_above_deadline,
            },
        ],
    }
}
