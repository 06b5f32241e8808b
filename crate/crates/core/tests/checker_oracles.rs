//! The breadth-first checker against independent oracles on small
//! instances.

use std::collections::{HashMap, HashSet};

use fdcheck_core::checker::{
    check_inductive, enumerate_universe, for_each_round_transition, reachable_states, replay,
    Obligation, Trace,
};
use fdcheck_core::invariants::sa_invariant;
use fdcheck_core::model::{Location, ProcChoice, SubRound, TransitionLabel};
use fdcheck_core::properties::{psi1_exact, psi1_holds, psi2_holds};
use fdcheck_core::transition::round_targets;
use fdcheck_core::{
    explore, Buffer, Encoding, ExploreOptions, GlobalState, Params, Property, Verdict,
};
use proptest::prelude::*;

fn params(delta: u32, phi: u32, t0: u32) -> Params {
    Params::builder(delta, phi).timeout(t0).build().unwrap()
}

/// Whether a state violating `prop` is reachable within `budget` rounds,
/// by depth-first search. `memo` keeps the largest budget already tried.
fn violates_within(
    s: &GlobalState,
    budget: u32,
    p: &Params,
    prop: Property,
    memo: &mut HashMap<GlobalState, u32>,
) -> bool {
    if !prop.holds(s, &p.guards) {
        return true;
    }
    if budget == 0 || memo.get(s).is_some_and(|&b| b >= budget) {
        return false;
    }
    memo.insert(*s, budget);
    round_targets(s, p)
        .unwrap()
        .iter()
        .any(|t| violates_within(t, budget - 1, p, prop, memo))
}

/// Iterative deepening: the least number of rounds to a violation.
fn shortest_violation(p: &Params, t0: u32, prop: Property, limit: u32) -> Option<u32> {
    let init = GlobalState::initial(p, t0).unwrap();
    (0..=limit).find(|&d| violates_within(&init, d, p, prop, &mut HashMap::new()))
}

#[test]
fn bfs_depth_is_minimal() {
    let mut violating = 0;
    for delta in 1..=2 {
        for phi in 1..=2 {
            let g = 6 * phi + delta;
            for t0 in 1..=g {
                let p = params(delta, phi, t0);
                let r = explore(&p, Property::Sa, t0, &ExploreOptions::default()).unwrap();
                let oracle = shortest_violation(&p, t0, Property::Sa, 40);
                match r.verdict {
                    Verdict::Violated => {
                        violating += 1;
                        let depth = r.counterexample.as_ref().unwrap().rounds() as u32;
                        assert_eq!(Some(depth), oracle, "delta={delta} phi={phi} t0={t0}");
                        assert_eq!(r.max_depth, depth);
                    }
                    Verdict::Holds => assert_eq!(oracle, None, "delta={delta} phi={phi} t0={t0}"),
                    Verdict::DepthBoundReached => panic!("no depth bound was set"),
                }
            }
        }
    }
    assert!(violating >= 4, "expected violating instances, found {violating}");
}

#[test]
fn counterexamples_replay_and_corruption_is_located() {
    for (delta, phi, t0) in [(1, 1, 1), (2, 2, 3), (2, 4, 3), (4, 4, 5)] {
        let p = params(delta, phi, t0);
        let r = explore(&p, Property::Sa, t0, &ExploreOptions::default()).unwrap();
        let trace = r.counterexample.expect("violated");
        assert!(!Property::Sa.holds(trace.last(), &p.guards));
        replay(&trace, &p, Some(Property::Sa)).unwrap();

        // swap the first schedule for another enabled one
        let mut bad = trace.clone();
        let TransitionLabel::Sched { sender, receiver } = bad.steps[0].0 else {
            panic!("trace starts with a schedule step");
        };
        let other = if sender == ProcChoice::Reset {
            ProcChoice::Crash
        } else {
            ProcChoice::Reset
        };
        bad.steps[0].0 = TransitionLabel::Sched {
            sender: other,
            receiver,
        };
        let err = replay(&bad, &p, None).unwrap_err();
        assert_eq!(err.step_index(), Some(0));

        // a corrupted state in the middle is caught at its own index
        let mut bad = trace.clone();
        let k = bad.steps.len() / 2;
        bad.steps[k].1.timeout += 1;
        assert_eq!(replay(&bad, &p, None).unwrap_err().step_index(), Some(k));
    }
}

#[test]
fn empty_trace_replays() {
    let p = params(2, 4, 26);
    let t = Trace::new(GlobalState::initial(&p, 26).unwrap());
    replay(&t, &p, None).unwrap();
    assert!(replay(&t, &p, Some(Property::Sa)).is_err());
}

#[test]
fn dedup_and_parallelism_do_not_change_verdicts() {
    for (delta, phi, t0, depth) in [(1, 1, 1, 6), (1, 1, 7, 6), (2, 2, 3, 5), (2, 2, 14, 5)] {
        let p = Params::builder(delta, phi)
            .timeout(t0)
            .max_depth(Some(depth))
            .build()
            .unwrap();
        let base = explore(&p, Property::Sa, t0, &ExploreOptions::default()).unwrap();
        let variants = [
            ExploreOptions { dedup: false, ..ExploreOptions::default() },
            ExploreOptions { parallel: false, ..ExploreOptions::default() },
        ];
        for opts in variants {
            let r = explore(&p, Property::Sa, t0, &opts).unwrap();
            assert_eq!(r.verdict, base.verdict, "{opts:?} delta={delta} phi={phi} t0={t0}");
            assert_eq!(
                r.counterexample.map(|t| t.rounds()),
                base.counterexample.as_ref().map(|t| t.rounds())
            );
        }
    }
}

#[test]
fn sequential_and_parallel_reports_match() {
    let p = params(2, 4, 26);
    let a = explore(&p, Property::Sa, 26, &ExploreOptions::default()).unwrap();
    let seq = ExploreOptions { parallel: false, ..ExploreOptions::default() };
    let b = explore(&p, Property::Sa, 26, &seq).unwrap();
    assert_eq!((a.verdict, a.states_explored, a.max_depth), (b.verdict, b.states_explored, b.max_depth));
}

#[test]
fn encodings_agree_on_small_instances() {
    for (delta, phi) in [(1, 1), (1, 2), (2, 1), (2, 2), (3, 2)] {
        for t0 in [1, delta + 1, 6 * phi + delta] {
            for prop in [Property::Sa, Property::Sc] {
                let reports: Vec<_> = Encoding::ALL
                    .into_iter()
                    .map(|e| {
                        let p = params(delta, phi, t0).with_encoding(e);
                        explore(&p, prop, t0, &ExploreOptions::default()).unwrap()
                    })
                    .collect();
                let key = |r: &fdcheck_core::CheckReport| {
                    (r.verdict, r.states_explored, r.max_depth, r.max_hlfsc_seen)
                };
                assert_eq!(key(&reports[0]), key(&reports[1]), "delta={delta} phi={phi} t0={t0}");
            }
        }
    }
}

#[test]
fn universe_matches_nested_loops() {
    let p = Params::builder(1, 1)
        .timeout(2)
        .timeout_cap(2)
        .hlfsc_cap(1)
        .allow_sender_crash(true)
        .allow_receiver_crash(false)
        .build()
        .unwrap();
    let locs = [Location::Working, Location::Crashed];
    let mut oracle = HashSet::new();
    for s_loc in locs {
        for r_loc in locs {
            for s_timer in 0..=p.phi {
                for r_timer in 0..=p.phi {
                    for buf in 0..1u64 << (p.delta + 1) {
                        for wait_time in 0..=p.timeout_cap {
                            for timeout in 0..=p.timeout_cap {
                                for suspected in [false, true] {
                                    for delivered_this_round in [false, true] {
                                        for hlfsc in 0..=p.hlfsc_cap {
                                            let s = GlobalState {
                                                subround: SubRound::Sched,
                                                s_loc,
                                                r_loc,
                                                s_timer,
                                                r_timer,
                                                buf: Buffer::from_value(p.encoding, p.delta, buf)
                                                    .unwrap(),
                                                wait_time,
                                                timeout,
                                                suspected,
                                                delivered_this_round,
                                                hlfsc,
                                            };
                                            if s.check_type(&p).is_ok() {
                                                oracle.insert(s);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let u = enumerate_universe(&p).unwrap();
    let listed: Vec<GlobalState> = u.iter().collect();
    assert_eq!(u.len(), 1280);
    assert_eq!(oracle.len(), 1280);
    assert_eq!(listed.len(), 1280);
    assert_eq!(listed.iter().copied().collect::<HashSet<_>>(), oracle);
}

#[test]
fn transition_invariants_on_small_instances() {
    for (delta, phi, t0, rc) in [(1, 1, 1, false), (1, 1, 7, true), (2, 2, 3, true), (2, 2, 14, false)] {
        let p = Params::builder(delta, phi)
            .timeout(t0)
            .allow_receiver_crash(rc)
            .build()
            .unwrap();
        let mut rounds = 0u64;
        for_each_round_transition(
            &p,
            t0,
            10_000_000,
            |pre, round| {
                rounds += 1;
                assert!(psi1_holds(pre, round, &p), "psi1 at {pre}");
                assert!(psi1_exact(pre, round, &p), "psi1 converse at {pre}");
                assert!(psi2_holds(pre, round, &p), "psi2 at {pre}");
            },
            |_| {},
        )
        .unwrap();
        assert!(rounds > 0);
    }
}

#[test]
fn sc_holds_and_crashed_senders_get_suspected() {
    for (delta, phi) in [(1, 1), (2, 2)] {
        let g = 6 * phi + delta;
        let p = params(delta, phi, g);
        let r = explore(&p, Property::Sc, g, &ExploreOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.max_hlfsc_seen < p.guards.g_prime);
        for s in reachable_states(&p, g, 10_000_000).unwrap() {
            if s.hlfsc == r.max_hlfsc_seen {
                assert!(s.suspected || s.s_loc != Location::Crashed, "at {s}");
            }
        }
    }
}

#[test]
fn esa_holds_across_a_small_sweep() {
    let p = Params::builder(1, 1).star(12).build().unwrap();
    for t0 in p.initial_timeouts() {
        let r = explore(&p, Property::Esa, t0, &ExploreOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "t0={t0}");
    }
}

#[test]
fn sa_invariant_is_inductive_on_a_small_instance() {
    let p = params(1, 1, 7);
    let inv = sa_invariant();
    let r = check_inductive(|s| inv.holds(s, &p), Property::Sa, &p, 1 << 30).unwrap();
    assert!(r.holds(), "{:?}", r.failures);
    for name in inv.names() {
        let weaker = inv.without(name);
        let r = check_inductive(|s| weaker.holds(s, &p), Property::Sa, &p, 1 << 30).unwrap();
        assert!(!r.holds(), "dropping {name} stays inductive");
        for f in &r.failures {
            match f.obligation {
                Obligation::Consecution => {
                    let succ = f.successor.expect("a consecution failure names a successor");
                    assert!(weaker.holds(&f.state, &p) && !weaker.holds(&succ, &p));
                }
                Obligation::Safety => assert!(!Property::Sa.holds(&f.state, &p.guards)),
                Obligation::Initiation => panic!("the initial state satisfies every conjunct"),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A violation verdict always carries a counterexample that replays
    /// and ends in a violating state; HOLDS never carries one.
    #[test]
    fn verdicts_are_consistent(delta in 1u32..=3, phi in 1u32..=3, t0 in 1u32..=8, pred in any::<bool>()) {
        let enc = if pred { Encoding::Predicate } else { Encoding::Counter };
        let p = Params::builder(delta, phi).timeout(t0).encoding(enc).build().unwrap();
        let r = explore(&p, Property::Sa, t0, &ExploreOptions::default()).unwrap();
        match r.verdict {
            Verdict::Violated => {
                let t = r.counterexample.as_ref().unwrap();
                prop_assert!(replay(t, &p, Some(Property::Sa)).is_ok());
                prop_assert_eq!(t.rounds() as u32, r.max_depth);
            }
            _ => prop_assert!(r.counterexample.is_none()),
        }
    }

    /// Raising the initial timeout never turns HOLDS into VIOLATED.
    #[test]
    fn larger_timeouts_are_safer(delta in 1u32..=2, phi in 1u32..=2, t0 in 1u32..=10) {
        let p = params(delta, phi, t0 + 1);
        let lo = explore(&p, Property::Sa, t0, &ExploreOptions::default()).unwrap();
        let hi = explore(&p, Property::Sa, t0 + 1, &ExploreOptions::default()).unwrap();
        if lo.verdict == Verdict::Holds {
            prop_assert_eq!(hi.verdict, Verdict::Holds);
        }
    }
}
