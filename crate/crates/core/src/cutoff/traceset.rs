//! Bounded trace sets over the two-index observation alphabet.
//!
//! An observation is the valuation of Correct(1), Correct(2),
//! Suspected(1,2) and Suspected(2,1) after a sub-round. A run of `k` rounds
//! yields the sequence of its observations with repeats collapsed. Sets of
//! such sequences are kept in a trie and explored breadth-first over
//! (configuration, trie node) pairs.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::Serialize;

use super::projection::{index_project, lift_label, project_round, Lifting};
use super::system::{build_system, GenericConfig, GenericRound, GenericSystem, PackedConfig};
use super::CutoffError;
use crate::model::Params;

/// Largest supported depth in rounds.
pub const MAX_DEPTH: u32 = 8;
/// Default cap on stored (configuration, sequence) pairs per system.
pub const DEFAULT_BUDGET: usize = 20_000_000;

/// Valuation of the four two-index atoms, one bit each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Observation(pub u8);

impl Observation {
    pub fn of(c: &GenericConfig) -> Self {
        let bits = [
            c.is_correct(0),
            c.is_correct(1),
            c.suspects(0, 1),
            c.suspects(1, 0),
        ];
        Observation(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (i, &b)| acc | (b as u8) << i),
        )
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atoms = ["C1", "C2", "S12", "S21"];
        let on: Vec<_> = atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| self.0 >> i & 1 == 1)
            .map(|(_, a)| *a)
            .collect();
        write!(f, "{{{}}}", on.join(","))
    }
}

/// Prefix tree of stutter-collapsed observation sequences. Node 0 is the
/// empty sequence; `marked` nodes end a run at a round boundary.
#[derive(Debug, Clone, Default)]
struct Trie {
    children: Vec<[u32; 16]>,
    last: Vec<Option<Observation>>,
    marked: Vec<bool>,
}

impl Trie {
    fn new() -> Self {
        Trie {
            children: vec![[0; 16]],
            last: vec![None],
            marked: vec![false],
        }
    }

    fn push(&mut self, node: u32, o: Observation) -> u32 {
        if self.last[node as usize] == Some(o) {
            return node;
        }
        if self.children[node as usize][o.0 as usize] == 0 {
            let fresh = self.children.len() as u32;
            self.children[node as usize][o.0 as usize] = fresh;
            self.children.push([0; 16]);
            self.last.push(Some(o));
            self.marked.push(false);
        }
        self.children[node as usize][o.0 as usize]
    }

    /// Appends a round's [`segment`] and marks the resulting node.
    fn extend(&mut self, node: u32, segment: u16) -> u32 {
        let node = (0..4).fold(node, |n, i| {
            self.push(n, Observation((segment >> (4 * i) & 0xf) as u8))
        });
        self.marked[node as usize] = true;
        node
    }

    fn sequences(&self) -> BTreeSet<Vec<Observation>> {
        let mut out = BTreeSet::new();
        let mut stack = vec![(0u32, Vec::new())];
        while let Some((node, seq)) = stack.pop() {
            if self.marked[node as usize] {
                out.insert(seq.clone());
            }
            for (o, &child) in self.children[node as usize].iter().enumerate() {
                if child != 0 {
                    let mut s = seq.clone();
                    s.push(Observation(o as u8));
                    stack.push((child, s));
                }
            }
        }
        out
    }
}

/// Observations after the four sub-rounds of a round, four bits each.
fn segment(round: &GenericRound) -> u16 {
    round
        .states
        .iter()
        .enumerate()
        .fold(0, |acc, (i, s)| acc | u16::from(Observation::of(s).0) << (4 * i))
}

/// The ordered pairs whose state an [`Observation`] reads.
const OBSERVED_PAIRS: [(usize, usize); 2] = [(0, 1), (1, 0)];

/// Configurations expanded per parallel batch.
const BATCH: usize = 512;
const CHUNK: usize = 16;

/// Stutter-collapsed observation sequences of every run of `sys` of at
/// most `depth` rounds. Observations only read processes 1 and 2, so for
/// G_3 these are the sequences of the projected runs.
fn trace_set(
    sys: &GenericSystem,
    depth: u32,
    budget: usize,
) -> Result<BTreeSet<Vec<Observation>>, CutoffError> {
    let mut trie = Trie::new();
    let init = sys.initial_config()?;
    let root = trie.push(0, Observation::of(&init));
    trie.marked[root as usize] = true;
    let mut seen = FxHashSet::default();
    seen.insert((init.pack(), root));
    let mut frontier = vec![(init.pack(), root)];
    for level in 0..depth {
        let last = level + 1 == depth;
        let mut next = Vec::new();
        for batch in frontier.chunks(BATCH) {
            if last {
                // the final level only contributes sequences, so only the
                // observed pairs need to range over their outcomes
                let segments: Vec<FxHashSet<(u32, u16)>> = batch
                    .par_chunks(CHUNK)
                    .map(|chunk| {
                        let mut out = FxHashSet::default();
                        for (c, node) in chunk {
                            let c = c.unpack();
                            sys.for_each_round_varying(&c, &OBSERVED_PAIRS, |r| {
                                out.insert((*node, segment(r)));
                            });
                        }
                        out
                    })
                    .collect();
                for (node, seg) in segments.into_iter().flatten() {
                    trie.extend(node, seg);
                }
                continue;
            }
            // distinct rounds almost always reach distinct targets, so
            // deduplication is left to the shared set
            let targets: Vec<Vec<(u32, u16, PackedConfig)>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut out = Vec::new();
                    for (c, node) in chunk {
                        let c = c.unpack();
                        sys.for_each_round(&c, |r| {
                            out.push((*node, segment(r), r.target().canonical().pack()));
                        });
                    }
                    out
                })
                .collect();
            for (node, seg, target) in targets.into_iter().flatten() {
                let n = trie.extend(node, seg);
                if seen.insert((target, n)) {
                    if seen.len() > budget {
                        return Err(CutoffError::Budget(budget));
                    }
                    next.push((target, n));
                }
            }
        }
        frontier = next;
    }
    Ok(trie.sequences())
}

/// Observation sequences of lifted G_2 runs. Runs whose lifting is not
/// enabled in G_3 are cut at the first disabled round.
fn lifted_trace_set(
    p: &Params,
    depth: u32,
    budget: usize,
    lifting: Lifting,
) -> Result<BTreeSet<Vec<Observation>>, CutoffError> {
    let g2 = build_system(2, p)?;
    let g3 = build_system(3, p)?;
    let mut trie = Trie::new();
    let init = (g2.initial_config()?, g3.initial_config()?);
    let root = trie.push(0, Observation::of(&index_project(&init.1)));
    trie.marked[root as usize] = true;
    let mut seen = FxHashSet::default();
    seen.insert((init, root));
    let mut frontier = vec![(init, root)];
    for _ in 0..depth {
        let mut next = Vec::new();
        for ((c2, c3), node) in &frontier {
            for r2 in g2.round_successors(c2) {
                let Ok(r3) = g3.apply_round(c3, &lift_label(&r2.label, c3, lifting)) else {
                    continue;
                };
                let n = trie.extend(*node, segment(&project_round(&r3)));
                let item = ((r2.target().canonical(), r3.target().canonical()), n);
                if seen.insert(item) {
                    if seen.len() > budget {
                        return Err(CutoffError::Budget(budget));
                    }
                    next.push(item);
                }
            }
        }
        frontier = next;
    }
    Ok(trie.sequences())
}

/// Which construction a distinguishing sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    TwoProcess,
    ProjectedThree,
    LiftedTwo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub sequence: Vec<Observation>,
    /// The only construction producing the sequence.
    pub present_in: Side,
    /// The construction it was compared against.
    pub missing_from: Side,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seq: Vec<_> = self.sequence.iter().map(|o| o.to_string()).collect();
        write!(
            f,
            "{} (in {:?}, not in {:?})",
            seq.join(" "),
            self.present_in,
            self.missing_from
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceSetReport {
    pub depth: u32,
    pub two_process: usize,
    pub projected_three: usize,
    pub lifted_two: usize,
    pub equal: bool,
    pub witness: Option<Witness>,
}

fn first_difference(
    a: &BTreeSet<Vec<Observation>>,
    a_side: Side,
    b: &BTreeSet<Vec<Observation>>,
    b_side: Side,
) -> Option<Witness> {
    let only_a = a.difference(b).next().map(|s| (s, a_side, b_side));
    let only_b = b.difference(a).next().map(|s| (s, b_side, a_side));
    only_a.or(only_b).map(|(s, present_in, missing_from)| Witness {
        sequence: s.clone(),
        present_in,
        missing_from,
    })
}

/// Compares the observation sequences of G_2 with those of the
/// {1,2}-projection of G_3 and with those of lifted G_2 runs, all bounded
/// by `depth` rounds.
pub fn trace_sets_equal(depth: u32, p: &Params) -> Result<TraceSetReport, CutoffError> {
    trace_sets_equal_with(depth, p, Lifting::CrashThird, DEFAULT_BUDGET)
}

pub fn trace_sets_equal_with(
    depth: u32,
    p: &Params,
    lifting: Lifting,
    budget: usize,
) -> Result<TraceSetReport, CutoffError> {
    if depth > MAX_DEPTH {
        return Err(CutoffError::Depth(depth));
    }
    let g2 = build_system(2, p)?;
    let g3 = build_system(3, p)?;
    let ((two, three), lifted) = rayon::join(
        || {
            rayon::join(
                || trace_set(&g2, depth, budget),
                || trace_set(&g3, depth, budget),
            )
        },
        || lifted_trace_set(p, depth, budget, lifting),
    );
    let (two, three, lifted) = (two?, three?, lifted?);
    let witness = first_difference(&two, Side::TwoProcess, &three, Side::ProjectedThree)
        .or_else(|| first_difference(&two, Side::TwoProcess, &lifted, Side::LiftedTwo));
    Ok(TraceSetReport {
        depth,
        two_process: two.len(),
        projected_three: three.len(),
        lifted_two: lifted.len(),
        equal: witness.is_none(),
        witness,
    })
}

/// One-index smoke test: the Correct(1) sequences of G_1 and of G_2
/// projected to process 1 agree up to `depth` rounds.
pub fn one_index_sets_equal(depth: u32, p: &Params) -> Result<bool, CutoffError> {
    fn seqs(sys: &GenericSystem, depth: u32) -> Result<BTreeSet<Vec<bool>>, CutoffError> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![(sys.initial_config()?, vec![true])];
        out.insert(vec![true]);
        for _ in 0..depth {
            let mut next = FxHashSet::default();
            for (c, seq) in &frontier {
                for r in sys.round_successors(c) {
                    let mut s = seq.clone();
                    let correct = r.target().is_correct(0);
                    if s.last() != Some(&correct) {
                        s.push(correct);
                    }
                    out.insert(s.clone());
                    next.insert((*r.target(), s));
                }
            }
            frontier = next.into_iter().collect();
        }
        Ok(out)
    }
    Ok(seqs(&build_system(1, p)?, depth)? == seqs(&build_system(2, p)?, depth)?)
}
