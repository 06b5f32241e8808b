//! Round successors against independent per-process enumerations, plus
//! random-walk properties of the round relation.

use std::collections::BTreeSet;

use fdcheck_core::checker::reachable_states;
use fdcheck_core::model::{Location, ProcChoice, ReceiveKind, SubRound, TransitionLabel};
use fdcheck_core::transition::{apply_label, round_successors, sched_successors, successors};
use fdcheck_core::{Encoding, GlobalState, Params};
use proptest::prelude::*;

fn options(loc: Location, timer: u32, phi: u32, may_crash: bool) -> Vec<ProcChoice> {
    if loc == Location::Crashed {
        return vec![ProcChoice::Down];
    }
    let mut v = vec![ProcChoice::Reset];
    if timer < phi {
        v.push(ProcChoice::Tick);
    }
    if may_crash {
        v.push(ProcChoice::Crash);
    }
    v
}

fn params(delta: u32, phi: u32, t0: u32, receiver_crash: bool) -> Params {
    Params::builder(delta, phi)
        .timeout(t0)
        .allow_receiver_crash(receiver_crash)
        .build()
        .unwrap()
}

#[test]
fn schedule_is_the_product_of_process_choices() {
    for (delta, phi) in [(1, 1), (2, 2), (2, 3)] {
        for rc in [false, true] {
            let p = params(delta, phi, delta + 1, rc);
            for s in reachable_states(&p, delta + 1, 1_000_000).unwrap() {
                let got: BTreeSet<(ProcChoice, ProcChoice)> = sched_successors(&s, &p)
                    .unwrap()
                    .into_iter()
                    .map(|(l, _)| match l {
                        TransitionLabel::Sched { sender, receiver } => (sender, receiver),
                        other => panic!("unexpected label {other}"),
                    })
                    .collect();
                let mut expected = BTreeSet::new();
                for a in options(s.s_loc, s.s_timer, phi, p.allow_sender_crash) {
                    for b in options(s.r_loc, s.r_timer, phi, p.allow_receiver_crash) {
                        expected.insert((a, b));
                    }
                }
                assert_eq!(got, expected, "at {s}");
                let count = sched_successors(&s, &p).unwrap().len();
                assert_eq!(count, expected.len(), "duplicate schedule labels at {s}");
            }
        }
    }
}

#[test]
fn round_count_is_schedules_times_deliveries() {
    let p = params(2, 2, 3, true);
    for s in reachable_states(&p, 3, 1_000_000).unwrap() {
        let mut expected = 0;
        for (_, s1) in sched_successors(&s, &p).unwrap() {
            let (_, s2) = successors(&s1, &p).unwrap()[0];
            let active = s2.r_loc == Location::Working && s2.r_timer == 0;
            let optional = s2.buf.value() & !(1 << p.delta);
            expected += if active { 1 << optional.count_ones() } else { 1 };
        }
        assert_eq!(round_successors(&s, &p).unwrap().len(), expected, "at {s}");
    }
}

#[test]
fn rounds_are_sorted_and_distinct() {
    let p = params(2, 2, 3, true);
    for s in reachable_states(&p, 3, 1_000_000).unwrap() {
        let labels: Vec<_> = round_successors(&s, &p).unwrap().iter().map(|r| r.labels()).collect();
        assert!(labels.windows(2).all(|w| w[0] < w[1]), "at {s}");
    }
}

fn walk(p: &Params, t0: u32, choices: &[usize]) -> Vec<GlobalState> {
    let mut s = GlobalState::initial(p, t0).unwrap();
    let mut out = vec![s];
    for &c in choices {
        let succ = successors(&s, p).unwrap();
        s = succ[c % succ.len()].1;
        out.push(s);
    }
    out
}

fn instance() -> impl Strategy<Value = (Params, u32)> {
    (1u32..=3, 1u32..=3, 1u32..=12, any::<bool>(), any::<bool>()).prop_map(
        |(delta, phi, t0, rc, pred)| {
            let enc = if pred { Encoding::Predicate } else { Encoding::Counter };
            let p = Params::builder(delta, phi)
                .timeout(t0)
                .allow_receiver_crash(rc)
                .encoding(enc)
                .build()
                .unwrap();
            (p, t0)
        },
    )
}

proptest! {
    /// Every sub-round step keeps the state well typed, cycles the
    /// sub-round counter, and is reproduced by applying its label.
    #[test]
    fn random_walks_stay_typed((p, t0) in instance(), choices in prop::collection::vec(0usize..64, 0..120)) {
        let mut s = GlobalState::initial(&p, t0).unwrap();
        for c in choices {
            prop_assert!(s.check_type(&p).is_ok(), "{}", s);
            let succ = successors(&s, &p).unwrap();
            prop_assert!(!succ.is_empty());
            let (label, next) = succ[c % succ.len()];
            prop_assert_eq!(label.subround(), s.subround);
            let order = [SubRound::Sched, SubRound::Snd, SubRound::Rcv, SubRound::Comp];
            let i = order.iter().position(|&x| x == s.subround).unwrap();
            prop_assert_eq!(next.subround, order[(i + 1) % 4]);
            prop_assert_eq!(apply_label(&s, label, &p).unwrap(), next);
            s = next;
        }
    }

    /// Crashes are permanent, and the timeout only ever grows.
    #[test]
    fn crashes_absorb_and_timeout_grows((p, t0) in instance(), choices in prop::collection::vec(0usize..64, 0..120)) {
        let states = walk(&p, t0, &choices);
        for w in states.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.s_loc == Location::Crashed {
                prop_assert_eq!(b.s_loc, Location::Crashed);
            }
            if a.r_loc == Location::Crashed {
                prop_assert_eq!(b.r_loc, Location::Crashed);
            }
            prop_assert!(b.timeout >= a.timeout);
        }
    }

    /// An inactive receiver never delivers, an active one may always choose
    /// the empty delivery unless an old message is due.
    #[test]
    fn receive_respects_activity((p, t0) in instance(), choices in prop::collection::vec(0usize..64, 0..80)) {
        for s in walk(&p, t0, &choices) {
            if s.subround != SubRound::Rcv {
                continue;
            }
            let labels: Vec<_> = successors(&s, &p).unwrap().into_iter().map(|(l, _)| l).collect();
            let active = s.r_loc == Location::Working && s.r_timer == 0;
            if !active {
                prop_assert_eq!(labels, vec![TransitionLabel::Receive(ReceiveKind::Idle)]);
            } else {
                let old_due = s.buf.value() >> p.delta & 1 == 1;
                let has_empty = labels.contains(&TransitionLabel::Receive(ReceiveKind::Deliver(0)));
                prop_assert_eq!(has_empty, !old_due);
            }
        }
    }
}
