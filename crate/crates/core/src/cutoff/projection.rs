//! Index projection onto processes {1, 2}, lifting of G_2 runs into G_3,
//! and the structural checks built on them.

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use super::system::{
    build_system, GenericConfig, GenericLabel, GenericRound, GenericSystem, GenericTrace,
    PairState,
};
use super::CutoffError;
use crate::buffer::{Buffer, Encoding};
use crate::model::{GlobalState, Location, Params, ProcChoice};
use crate::transition::round_successors;

/// Configurations a structural check may store before giving up.
pub const DEFAULT_BUDGET: usize = 5_000_000;

/// Keeps the components indexed by processes 1 and 2.
pub fn index_project(c: &GenericConfig) -> GenericConfig {
    let mut out = GenericConfig::blank(2);
    out.subround = c.subround;
    for i in 0..2 {
        out.loc[i] = c.loc[i];
        out.timer[i] = c.timer[i];
        for j in 0..2 {
            out.buf[i][j] = c.buf[i][j];
            out.pair[i][j] = c.pair[i][j];
        }
    }
    out
}

pub fn project_label(l: &GenericLabel) -> GenericLabel {
    let mut out = GenericLabel::idle();
    for i in 0..2 {
        out.sched[i] = l.sched[i];
        for j in 0..2 {
            out.recv[i][j] = l.recv[i][j];
        }
    }
    out
}

pub fn project_round(r: &GenericRound) -> GenericRound {
    GenericRound {
        label: project_label(&r.label),
        states: r.states.map(|s| index_project(&s)),
    }
}

pub fn project_trace(t: &GenericTrace) -> GenericTrace {
    GenericTrace {
        initial: index_project(&t.initial),
        rounds: t.rounds.iter().map(project_round).collect(),
    }
}

/// How process 3 behaves in a lifted run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifting {
    /// Crash in the first Schedule, then stay down.
    CrashThird,
    /// Mutation: never crash and never get scheduled. Only admissible for
    /// the first Φ rounds.
    NeverCrash,
}

/// The G_3 label for a G_2 label taken from lifted configuration `c3`.
pub fn lift_label(l2: &GenericLabel, c3: &GenericConfig, lifting: Lifting) -> GenericLabel {
    let mut out = *l2;
    out.sched[2] = match lifting {
        Lifting::CrashThird if c3.loc[2] == Location::Working => ProcChoice::Crash,
        Lifting::CrashThird => ProcChoice::Down,
        Lifting::NeverCrash => ProcChoice::Tick,
    };
    out
}

/// Lifts a G_2 run into G_3. Fails if a lifted round is not enabled.
pub fn lift_trace(
    t2: &GenericTrace,
    g3: &GenericSystem,
    lifting: Lifting,
) -> Result<GenericTrace, CutoffError> {
    let timeout0 = t2.initial.pair[1][0].timeout;
    let initial = g3.initial(timeout0.into())?;
    let mut rounds = Vec::with_capacity(t2.rounds.len());
    let mut current = initial;
    for r2 in &t2.rounds {
        let r3 = g3.apply_round(&current, &lift_label(&r2.label, &current, lifting))?;
        current = *r3.target();
        rounds.push(r3);
    }
    Ok(GenericTrace { initial, rounds })
}

/// Replays `t` in `sys`; returns the index of the first round that differs
/// or is disabled.
pub fn replay_generic(t: &GenericTrace, sys: &GenericSystem) -> Result<(), usize> {
    let mut current = t.initial;
    for (i, r) in t.rounds.iter().enumerate() {
        match sys.apply_round(&current, &r.label) {
            Ok(again) if again == *r => current = *again.target(),
            _ => return Err(i),
        }
    }
    Ok(())
}

/// Swaps processes 1 and 2 of a two-process configuration.
pub fn swap(c: &GenericConfig) -> GenericConfig {
    let mut out = *c;
    out.loc.swap(0, 1);
    out.timer.swap(0, 1);
    out.buf[0][1] = c.buf[1][0];
    out.buf[1][0] = c.buf[0][1];
    out.pair[0][1] = c.pair[1][0];
    out.pair[1][0] = c.pair[0][1];
    out
}

/// The two-process reduction's view of a G_2 configuration: process 1 is
/// the sender and process 2 the receiver. The ghost counter is zero.
pub fn abstract_config(c: &GenericConfig, p: &Params) -> GlobalState {
    let q: PairState = c.pair[1][0];
    GlobalState {
        subround: c.subround,
        s_loc: c.loc[0],
        r_loc: c.loc[1],
        s_timer: c.timer[0].into(),
        r_timer: c.timer[1].into(),
        buf: Buffer::from_value(Encoding::Counter, p.delta, u64::from(c.buf[0][1]))
            .expect("generic buffers stay within delta"),
        wait_time: q.wait_time.into(),
        timeout: q.timeout.into(),
        suspected: q.suspected,
        delivered_this_round: q.delivered,
        hlfsc: 0,
    }
}

/// Reduction parameters matching a G_2 system: both processes may crash
/// and buffers use the counter encoding.
fn reduction_params(p: &Params) -> Params {
    Params {
        allow_sender_crash: true,
        allow_receiver_crash: true,
        encoding: Encoding::Counter,
        ..p.clone()
    }
}

/// Summary of an exhaustive bounded check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckStats {
    pub configs: usize,
    pub transitions: usize,
}

/// The ordered pairs between processes 1 and 2.
const PROJECTED_PAIRS: [(usize, usize); 2] = [(0, 1), (1, 0)];

fn levels(sys: &GenericSystem, depth: u32, budget: usize) -> Result<Vec<GenericConfig>, CutoffError> {
    Ok(sys.reachable(depth, budget)?.into_iter().flatten().collect())
}

/// Bounded bisimulation between G_2 and the two-process reduction under
/// [`abstract_config`]: from every G_2 configuration reachable within
/// `depth` rounds, abstracted round successors and reduction successors of
/// the abstraction coincide.
pub fn check_reduction_bisimulation(p: &Params, depth: u32) -> Result<CheckStats, CutoffError> {
    let g2 = build_system(2, p)?;
    let rp = reduction_params(p);
    let init = g2.initial_config()?;
    let red_init = GlobalState::initial(&rp, p.fixed_timeout()?)?;
    if abstract_config(&init, p) != red_init {
        return Err(CutoffError::Mismatch(format!(
            "initial states differ: {init} vs {red_init}"
        )));
    }
    let mut stats = CheckStats { configs: 0, transitions: 0 };
    for c in levels(&g2, depth, DEFAULT_BUDGET)? {
        stats.configs += 1;
        let generic: FxHashSet<GlobalState> = g2
            .round_successors(&c)
            .iter()
            .map(|r| abstract_config(r.target(), p))
            .collect();
        let reduced: FxHashSet<GlobalState> = round_successors(&abstract_config(&c, p), &rp)?
            .iter()
            .map(|r| GlobalState {
                hlfsc: 0,
                ..*r.target()
            })
            .collect();
        stats.transitions += generic.len();
        if generic != reduced {
            return Err(CutoffError::Mismatch(format!(
                "successors of {c} differ from the reduction"
            )));
        }
    }
    Ok(stats)
}

/// Transposition symmetry of G_2: successors of the swapped configuration
/// are the swapped successors.
pub fn check_symmetry(p: &Params, depth: u32) -> Result<CheckStats, CutoffError> {
    let g2 = build_system(2, p)?;
    let mut stats = CheckStats { configs: 0, transitions: 0 };
    for c in levels(&g2, depth, DEFAULT_BUDGET)? {
        stats.configs += 1;
        let swapped_after: FxHashSet<GenericConfig> =
            g2.round_successors(&c).iter().map(|r| swap(r.target())).collect();
        let after_swap: FxHashSet<GenericConfig> = g2
            .round_successors(&swap(&c))
            .iter()
            .map(|r| *r.target())
            .collect();
        stats.transitions += after_swap.len();
        if swapped_after != after_swap {
            return Err(CutoffError::Mismatch(format!("swap does not commute at {c}")));
        }
    }
    Ok(stats)
}

/// Every G_3 round from a configuration reachable within `depth - 1` rounds
/// projects to an enabled G_2 round with the projected outcome. With the
/// projected initial state being G_2's, every bounded G_3 run projects to an
/// admissible G_2 run.
pub fn check_projection_admissible(p: &Params, depth: u32) -> Result<CheckStats, CutoffError> {
    let g2 = build_system(2, p)?;
    let g3 = build_system(3, p)?;
    if index_project(&g3.initial_config()?) != g2.initial_config()? {
        return Err(CutoffError::Mismatch("projected initial configuration".into()));
    }
    let configs = levels(&g3, depth.saturating_sub(1), DEFAULT_BUDGET)?;
    // a projected round reads the scheduling choices, processes 1 and 2 and
    // the two pairs between them; every other pair moves independently, so
    // letting only those two pairs vary yields every projected round
    let transitions = configs
        .par_iter()
        .map(|c| {
            let pc = index_project(c);
            g2.check_type(&pc)?;
            let mut count = 0usize;
            let mut failure = None;
            g3.for_each_round_varying(c, &PROJECTED_PAIRS, |r| {
                if failure.is_some() {
                    return;
                }
                count += 1;
                let expected = project_round(r);
                match g2.apply_round(&pc, &expected.label) {
                    Ok(got) if got == expected => {}
                    Ok(_) => {
                        failure = Some(CutoffError::Mismatch(format!(
                            "projection of {} from {c} is not a G_2 round",
                            r.label
                        )))
                    }
                    Err(e) => failure = Some(e),
                }
            });
            failure.map_or(Ok(count), Err)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(CheckStats {
        configs: configs.len(),
        transitions,
    })
}

/// Lifts every G_2 run of at most `depth` rounds, checking that each lifted
/// round is enabled in G_3 and projects back to the original round.
pub fn check_lift_round_trip(
    p: &Params,
    depth: u32,
    lifting: Lifting,
) -> Result<CheckStats, CutoffError> {
    let g2 = build_system(2, p)?;
    let g3 = build_system(3, p)?;
    let init = (g2.initial_config()?, g3.initial_config()?);
    let mut seen: FxHashMap<(GenericConfig, GenericConfig), ()> = FxHashMap::default();
    seen.insert(init, ());
    let mut frontier = vec![init];
    let mut stats = CheckStats { configs: 1, transitions: 0 };
    for _ in 0..depth {
        let mut next = Vec::new();
        for (c2, c3) in &frontier {
            for r2 in g2.round_successors(c2) {
                stats.transitions += 1;
                let r3 = g3.apply_round(c3, &lift_label(&r2.label, c3, lifting))?;
                if project_round(&r3) != r2 {
                    return Err(CutoffError::Mismatch(format!(
                        "lifting {} from {c2} does not project back",
                        r2.label
                    )));
                }
                let pair = (r2.target().canonical(), r3.target().canonical());
                if seen.insert(pair, ()).is_none() {
                    if seen.len() > DEFAULT_BUDGET {
                        return Err(CutoffError::Budget(DEFAULT_BUDGET));
                    }
                    next.push(pair);
                }
            }
        }
        stats.configs += next.len();
        frontier = next;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params::builder(1, 1).timeout(2).build().unwrap()
    }

    #[test]
    fn projection_of_two_is_identity() {
        let g2 = build_system(2, &params()).unwrap();
        for c in levels(&g2, 2, 1000).unwrap() {
            assert_eq!(index_project(&c), c);
        }
    }

    #[test]
    fn projected_initial_matches() {
        let p = params();
        let g3 = build_system(3, &p).unwrap();
        let g2 = build_system(2, &p).unwrap();
        assert_eq!(
            index_project(&g3.initial_config().unwrap()),
            g2.initial_config().unwrap()
        );
    }

    #[test]
    fn swap_is_an_involution() {
        let g2 = build_system(2, &params()).unwrap();
        for c in levels(&g2, 2, 1000).unwrap() {
            assert_eq!(swap(&swap(&c)), c);
        }
    }

    #[test]
    fn empty_trace_lifts_to_initial() {
        let p = params();
        let g2 = build_system(2, &p).unwrap();
        let g3 = build_system(3, &p).unwrap();
        let t2 = GenericTrace {
            initial: g2.initial_config().unwrap(),
            rounds: vec![],
        };
        let t3 = lift_trace(&t2, &g3, Lifting::CrashThird).unwrap();
        assert_eq!(t3.initial, g3.initial_config().unwrap());
        assert!(t3.rounds.is_empty());
    }

    #[test]
    fn never_crash_lifting_runs_out_after_phi_rounds() {
        let p = params();
        let g2 = build_system(2, &p).unwrap();
        let g3 = build_system(3, &p).unwrap();
        let mut label = GenericLabel::idle();
        label.sched[0] = ProcChoice::Tick;
        label.sched[1] = ProcChoice::Tick;
        let c = g2.initial_config().unwrap();
        let r1 = g2.apply_round(&c, &label).unwrap();
        let mut back = GenericLabel::idle();
        back.sched[0] = ProcChoice::Reset;
        back.sched[1] = ProcChoice::Reset;
        let r2 = g2.apply_round(r1.target(), &back).unwrap();
        let t2 = GenericTrace {
            initial: c,
            rounds: vec![r1, r2],
        };
        assert!(lift_trace(&t2, &g3, Lifting::CrashThird).is_ok());
        assert!(matches!(
            lift_trace(&t2, &g3, Lifting::NeverCrash),
            Err(CutoffError::Disabled { .. })
        ));
    }
}
