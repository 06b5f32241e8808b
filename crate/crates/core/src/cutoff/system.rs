//! The symmetric N-process instance (N ≤ 3): every process runs the
//! heartbeat detector against every other process over point-to-point
//! buffers.

use std::fmt;

use serde::Serialize;

use super::CutoffError;
use crate::buffer::counter;
use crate::model::{Location, Params, ProcChoice, SubRound};

pub const MAX_N: usize = 3;
/// Buffers are stored in one byte, so `Δ + 1 <= 8`.
pub const MAX_DELTA: u32 = 7;

/// Receiver-side detector state for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct PairState {
    pub timeout: u8,
    pub wait_time: u8,
    pub suspected: bool,
    pub delivered: bool,
}

/// A configuration of the N-process system. Entries for indices `>= n` and
/// self-pairs stay at their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GenericConfig {
    pub n: u8,
    pub subround: SubRound,
    pub loc: [Location; MAX_N],
    pub timer: [u8; MAX_N],
    /// `buf[s][r]`: messages in transit from `s` to `r`, counter encoded.
    pub buf: [[u8; MAX_N]; MAX_N],
    /// `pair[r][s]`: what `r` knows about `s`.
    pub pair: [[PairState; MAX_N]; MAX_N],
}

impl GenericConfig {
    /// All-default configuration of size `n` at a round boundary.
    pub fn blank(n: usize) -> Self {
        GenericConfig {
            n: n as u8,
            subround: SubRound::Sched,
            loc: [Location::Working; MAX_N],
            timer: [0; MAX_N],
            buf: [[0; MAX_N]; MAX_N],
            pair: [[PairState::default(); MAX_N]; MAX_N],
        }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// Representative of a round-boundary configuration with every
    /// component that no later step reads reset: delivery flags (the next
    /// Schedule overwrites them), and the timer, incoming buffers and wait
    /// counters of crashed processes. Configurations with the same
    /// representative have the same futures and the same observations.
    pub fn canonical(&self) -> GenericConfig {
        let mut out = *self;
        for r in 0..self.n() {
            let crashed = self.loc[r] == Location::Crashed;
            if crashed {
                out.timer[r] = 0;
            }
            for s in 0..self.n() {
                out.pair[r][s].delivered = false;
                if crashed && s != r {
                    out.buf[s][r] = 0;
                    out.pair[r][s].wait_time = 0;
                }
            }
        }
        out
    }

    /// Exact byte packing, for compact hashing. Self pairs are never
    /// touched and are not stored.
    pub fn pack(&self) -> PackedConfig {
        let mut out = [0u8; 32];
        out[0] = self.n | (self.subround.index() as u8) << 2;
        for i in 0..MAX_N {
            out[1] |= u8::from(self.loc[i] == Location::Crashed) << i;
        }
        out[2..2 + MAX_N].copy_from_slice(&self.timer);
        let mut k = 5;
        for (i, j) in SELF_FREE {
            let q = &self.pair[i][j];
            out[k] = self.buf[i][j];
            out[k + 1] = q.timeout;
            out[k + 2] = q.wait_time;
            out[k + 3] = u8::from(q.suspected) | u8::from(q.delivered) << 1;
            k += 4;
        }
        PackedConfig(out)
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.loc[i] == Location::Working && self.timer[i] == 0
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.loc[i] == Location::Working
    }

    /// `r` suspects `s`.
    pub fn suspects(&self, r: usize, s: usize) -> bool {
        self.pair[r][s].suspected
    }

    /// Ordered pairs `(a, b)` with `a != b`, both below `n`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n();
        (0..n).flat_map(move |a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
    }
}

impl fmt::Display for GenericConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{ePC={}", self.subround)?;
        for i in 0..self.n() {
            write!(f, " p{}={}/{}", i + 1, self.loc[i], self.timer[i])?;
        }
        for (r, s) in self.pairs() {
            let q = &self.pair[r][s];
            write!(
                f,
                " {}<-{}:buf={},wait={},timeout={}{}",
                r + 1,
                s + 1,
                self.buf[s][r],
                q.wait_time,
                q.timeout,
                if q.suspected { ",suspected" } else { "" }
            )?;
        }
        f.write_str("}")
    }
}

/// Choices of one round: a schedule choice per process and, per ordered
/// pair, the set of ages removed from `buf[s][r]` (`recv[r][s]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenericLabel {
    pub sched: [ProcChoice; MAX_N],
    pub recv: [[u8; MAX_N]; MAX_N],
}

impl GenericLabel {
    pub fn idle() -> Self {
        GenericLabel {
            sched: [ProcChoice::Down; MAX_N],
            recv: [[0; MAX_N]; MAX_N],
        }
    }
}

impl fmt::Display for GenericLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |c: ProcChoice| match c {
            ProcChoice::Reset => "reset",
            ProcChoice::Tick => "tick",
            ProcChoice::Crash => "crash",
            ProcChoice::Down => "down",
        };
        let sched: Vec<_> = self.sched.iter().map(|&c| name(c)).collect();
        write!(f, "SCHED({})", sched.join(","))?;
        for (r, row) in self.recv.iter().enumerate() {
            for (s, &m) in row.iter().enumerate() {
                if m != 0 {
                    write!(f, " RECV{}<-{}({m})", r + 1, s + 1)?;
                }
            }
        }
        Ok(())
    }
}

/// Ordered pairs of distinct indices.
const SELF_FREE: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

/// A [`GenericConfig`] packed into 29 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PackedConfig([u8; 32]);

impl std::hash::Hash for PackedConfig {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for w in self.0.chunks_exact(8) {
            state.write_u64(u64::from_le_bytes(w.try_into().expect("8 bytes")));
        }
    }
}

impl PackedConfig {
    pub fn unpack(&self) -> GenericConfig {
        let b = &self.0;
        let mut c = GenericConfig::blank(usize::from(b[0] & 3));
        c.subround = SubRound::from_index(u128::from(b[0] >> 2));
        for i in 0..MAX_N {
            if b[1] >> i & 1 == 1 {
                c.loc[i] = Location::Crashed;
            }
            c.timer[i] = b[2 + i];
        }
        let mut k = 5;
        for (i, j) in SELF_FREE {
            c.buf[i][j] = b[k];
            c.pair[i][j] = PairState {
                timeout: b[k + 1],
                wait_time: b[k + 2],
                suspected: b[k + 3] & 1 == 1,
                delivered: b[k + 3] & 2 == 2,
            };
            k += 4;
        }
        c
    }
}

/// Computation step of receiver-side pair state.
fn compute_pair(mut q: PairState, receiver_active: bool) -> PairState {
    if receiver_active && !q.delivered {
        q.wait_time = (q.wait_time + 1).min(q.timeout);
        if !q.suspected && q.wait_time >= q.timeout {
            q.suspected = true;
        }
    }
    q
}

#[derive(Debug, Clone, Copy)]
struct PairOutcome {
    removed: u8,
    buf: u8,
    received: PairState,
    computed: PairState,
}

/// One round: its label and the configuration after each sub-round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GenericRound {
    pub label: GenericLabel,
    pub states: [GenericConfig; 4],
}

impl GenericRound {
    pub fn target(&self) -> &GenericConfig {
        &self.states[3]
    }
}

/// A bounded run: an initial configuration and its rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericTrace {
    pub initial: GenericConfig,
    pub rounds: Vec<GenericRound>,
}

impl GenericTrace {
    pub fn last(&self) -> &GenericConfig {
        self.rounds.last().map_or(&self.initial, |r| r.target())
    }

    pub fn labels(&self) -> Vec<GenericLabel> {
        self.rounds.iter().map(|r| r.label).collect()
    }
}

/// The successor relation of the N-process system.
#[derive(Debug, Clone)]
pub struct GenericSystem {
    n: usize,
    params: Params,
}

/// Builds the `n`-process system for `p`.
pub fn build_system(n: usize, p: &Params) -> Result<GenericSystem, CutoffError> {
    if !(1..=MAX_N).contains(&n) {
        return Err(CutoffError::ProcessCount(n));
    }
    if p.delta > MAX_DELTA || p.timeout_cap > u32::from(u8::MAX) || p.phi >= u32::from(u8::MAX) {
        return Err(CutoffError::Capacity(format!(
            "delta <= {MAX_DELTA}, phi < 255 and timeout_cap <= 255 required"
        )));
    }
    Ok(GenericSystem {
        n,
        params: p.clone(),
    })
}

impl GenericSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn initial(&self, timeout0: u32) -> Result<GenericConfig, CutoffError> {
        if timeout0 == 0 || timeout0 > self.params.timeout_cap {
            return Err(CutoffError::Timeout(timeout0));
        }
        let mut c = GenericConfig::blank(self.n);
        for (r, s) in c.pairs() {
            c.pair[r][s].timeout = timeout0 as u8;
        }
        Ok(c)
    }

    /// Initial configuration for the instance's concrete timeout.
    pub fn initial_config(&self) -> Result<GenericConfig, CutoffError> {
        self.initial(self.params.fixed_timeout()?)
    }

    fn choices(&self, c: &GenericConfig, i: usize) -> ([ProcChoice; 3], usize) {
        if c.loc[i] == Location::Crashed {
            return ([ProcChoice::Down; 3], 1);
        }
        if u32::from(c.timer[i]) < self.params.phi {
            ([ProcChoice::Reset, ProcChoice::Tick, ProcChoice::Crash], 3)
        } else {
            ([ProcChoice::Reset, ProcChoice::Crash, ProcChoice::Crash], 2)
        }
    }

    fn enabled(&self, c: &GenericConfig, i: usize, choice: ProcChoice) -> bool {
        let (options, len) = self.choices(c, i);
        options[..len].contains(&choice)
    }

    fn sched(&self, c: &GenericConfig, sched: &[ProcChoice; MAX_N]) -> GenericConfig {
        let delta = self.params.delta;
        let mut next = *c;
        for (i, &choice) in sched.iter().enumerate().take(self.n) {
            match choice {
                ProcChoice::Reset => next.timer[i] = 0,
                ProcChoice::Tick => next.timer[i] += 1,
                ProcChoice::Crash => next.loc[i] = Location::Crashed,
                ProcChoice::Down => {}
            }
        }
        for (s, r) in c.pairs() {
            next.buf[s][r] = if sched[r] == ProcChoice::Crash {
                0
            } else {
                counter::age(u64::from(c.buf[s][r]), delta) as u8
            };
            next.pair[r][s].delivered = false;
        }
        next.subround = SubRound::Snd;
        next
    }

    fn send(&self, c: &GenericConfig) -> GenericConfig {
        let mut next = *c;
        for (s, r) in c.pairs() {
            if c.is_active(s) {
                next.buf[s][r] = counter::send(u64::from(c.buf[s][r])) as u8;
            }
        }
        next.subround = SubRound::Rcv;
        next
    }

    /// Delivers `removed` from `buf[s][r]` into `c` (already in RCV).
    fn deliver(&self, c: &mut GenericConfig, r: usize, s: usize, removed: u8) {
        c.pair[r][s] = self.receive(c.pair[r][s], removed);
        c.buf[s][r] -= removed;
    }

    /// Pair state after `removed` messages arrive.
    fn receive(&self, mut q: PairState, removed: u8) -> PairState {
        if removed == 0 {
            return q;
        }
        q.delivered = true;
        q.wait_time = 0;
        if q.suspected {
            q.timeout = (u32::from(q.timeout) + 1).min(self.params.timeout_cap) as u8;
            q.suspected = false;
        }
        q
    }

    fn compute(&self, c: &GenericConfig) -> GenericConfig {
        let mut next = *c;
        for (r, s) in c.pairs() {
            next.pair[r][s] = compute_pair(c.pair[r][s], c.is_active(r));
        }
        next.subround = SubRound::Sched;
        next
    }

    /// Legal removal masks for `r` reading from `s` after the Send step.
    fn recv_options(&self, c: &GenericConfig, r: usize, s: usize) -> impl Iterator<Item = u8> {
        let (value, active) = (u64::from(c.buf[s][r]), c.is_active(r));
        let delta = self.params.delta;
        let all = active.then(|| counter::delivery_iter(value, delta).map(|(m, _)| m as u8));
        let idle = (!active).then_some(0);
        all.into_iter().flatten().chain(idle)
    }

    /// Calls `f` on every round from `c`, in label order.
    pub fn for_each_round(&self, c: &GenericConfig, mut f: impl FnMut(&GenericRound)) {
        debug_assert_eq!(c.subround, SubRound::Sched);
        let mut sched = [ProcChoice::Down; MAX_N];
        self.sched_rec(c, 0, &mut sched, None, &mut Vec::new(), &mut f);
    }

    /// Like [`Self::for_each_round`], but only the ordered pairs in
    /// `varying` range over all their receive outcomes; every other pair
    /// takes its first legal outcome. Each emitted round is a round of the
    /// system, and since pairs receive and compute independently, the
    /// emitted rounds restricted to the scheduling choices and the `varying`
    /// pairs cover every combination the full enumeration produces.
    pub fn for_each_round_varying(
        &self,
        c: &GenericConfig,
        varying: &[(usize, usize)],
        mut f: impl FnMut(&GenericRound),
    ) {
        debug_assert_eq!(c.subround, SubRound::Sched);
        let mut sched = [ProcChoice::Down; MAX_N];
        self.sched_rec(c, 0, &mut sched, Some(varying), &mut Vec::new(), &mut f);
    }

    fn sched_rec(
        &self,
        c: &GenericConfig,
        i: usize,
        sched: &mut [ProcChoice; MAX_N],
        varying: Option<&[(usize, usize)]>,
        scratch: &mut Vec<PairOutcome>,
        f: &mut impl FnMut(&GenericRound),
    ) {
        if i < self.n {
            let (options, len) = self.choices(c, i);
            for &choice in &options[..len] {
                sched[i] = choice;
                self.sched_rec(c, i + 1, sched, varying, scratch, f);
            }
            sched[i] = ProcChoice::Down;
            return;
        }
        let s1 = self.sched(c, sched);
        let s2 = self.send(&s1);
        // receive and compute act on each ordered pair independently, so
        // the outcomes of every pair are computed once and then combined
        scratch.clear();
        let mut ranges = [(0, 0, 0, 0); MAX_N * (MAX_N - 1)];
        let mut count = 0;
        for (r, s) in c.pairs() {
            let start = scratch.len();
            let active = s2.is_active(r);
            for m in self.recv_options(&s2, r, s) {
                let received = self.receive(s2.pair[r][s], m);
                scratch.push(PairOutcome {
                    removed: m,
                    buf: s2.buf[s][r] - m,
                    received,
                    computed: compute_pair(received, active),
                });
                if varying.is_some_and(|v| !v.contains(&(r, s))) {
                    break;
                }
            }
            ranges[count] = (r, s, start, scratch.len());
            count += 1;
        }
        let mut s3 = s2;
        s3.subround = SubRound::Comp;
        let mut s4 = s2;
        s4.subround = SubRound::Sched;
        let mut round = GenericRound {
            label: GenericLabel {
                sched: *sched,
                recv: [[0; MAX_N]; MAX_N],
            },
            states: [s1, s2, s3, s4],
        };
        Self::recv_rec(scratch, &ranges[..count], &mut round, f);
    }

    fn recv_rec(
        outcomes: &[PairOutcome],
        ranges: &[(usize, usize, usize, usize)],
        round: &mut GenericRound,
        f: &mut impl FnMut(&GenericRound),
    ) {
        let Some((&(r, s, start, end), rest)) = ranges.split_first() else {
            f(round);
            return;
        };
        for o in &outcomes[start..end] {
            round.label.recv[r][s] = o.removed;
            round.states[2].buf[s][r] = o.buf;
            round.states[2].pair[r][s] = o.received;
            round.states[3].buf[s][r] = o.buf;
            round.states[3].pair[r][s] = o.computed;
            Self::recv_rec(outcomes, rest, round, f);
        }
    }

    /// Every round from `c`, in label order.
    pub fn round_successors(&self, c: &GenericConfig) -> Vec<GenericRound> {
        let mut out = Vec::new();
        self.for_each_round(c, |r| out.push(*r));
        out
    }

    /// Applies one labelled round, rejecting choices that are not enabled.
    pub fn apply_round(
        &self,
        c: &GenericConfig,
        label: &GenericLabel,
    ) -> Result<GenericRound, CutoffError> {
        let disabled = |why: String| CutoffError::Disabled {
            label: label.to_string(),
            reason: why,
        };
        if c.subround != SubRound::Sched || c.n() != self.n {
            return Err(disabled(format!("configuration {c} is not a round boundary of G_{}", self.n)));
        }
        for i in 0..MAX_N {
            let ok = if i < self.n {
                self.enabled(c, i, label.sched[i])
            } else {
                label.sched[i] == ProcChoice::Down
            };
            if !ok {
                return Err(disabled(format!("process {} cannot take {:?}", i + 1, label.sched[i])));
            }
        }
        let s1 = self.sched(c, &label.sched);
        let s2 = self.send(&s1);
        for r in 0..MAX_N {
            for s in 0..MAX_N {
                let m = label.recv[r][s];
                let ok = if r < self.n && s < self.n && r != s {
                    self.recv_options(&s2, r, s).any(|o| o == m)
                } else {
                    m == 0
                };
                if !ok {
                    return Err(disabled(format!(
                        "process {} cannot receive {m} from process {}",
                        r + 1,
                        s + 1
                    )));
                }
            }
        }
        let mut s3 = s2;
        s3.subround = SubRound::Comp;
        for (r, s) in c.pairs() {
            self.deliver(&mut s3, r, s, label.recv[r][s]);
        }
        let s4 = self.compute(&s3);
        Ok(GenericRound {
            label: *label,
            states: [s1, s2, s3, s4],
        })
    }

    /// Checks the per-pair type invariants of `c`.
    pub fn check_type(&self, c: &GenericConfig) -> Result<(), CutoffError> {
        let p = &self.params;
        let fail = |msg: String| Err(CutoffError::Type(format!("{msg} in {c}")));
        if c.n() != self.n {
            return fail(format!("size {} instead of {}", c.n, self.n));
        }
        let blank = GenericConfig::blank(self.n);
        for i in 0..MAX_N {
            if i < self.n {
                if u32::from(c.timer[i]) > p.phi {
                    return fail(format!("timer of process {} above phi", i + 1));
                }
            } else if c.loc[i] != blank.loc[i] || c.timer[i] != 0 {
                return fail(format!("unused process {} is not blank", i + 1));
            }
            for j in 0..MAX_N {
                let live = i < self.n && j < self.n && i != j;
                if !live {
                    if c.buf[i][j] != 0 || c.pair[i][j] != PairState::default() {
                        return fail(format!("unused pair ({}, {}) is not blank", i + 1, j + 1));
                    }
                    continue;
                }
                if c.buf[i][j] >> (p.delta + 1) != 0 {
                    return fail(format!("buffer {} -> {} too wide", i + 1, j + 1));
                }
                let q = &c.pair[i][j];
                if q.timeout == 0
                    || u32::from(q.timeout) > p.timeout_cap
                    || q.wait_time > q.timeout
                {
                    return fail(format!("pair ({}, {}) clocks out of range", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    /// Configurations reachable within `depth` rounds, level by level, up to
    /// [`GenericConfig::canonical`].
    pub fn reachable(&self, depth: u32, budget: usize) -> Result<Vec<Vec<GenericConfig>>, CutoffError> {
        let init = self.initial_config()?;
        let mut seen = rustc_hash::FxHashSet::default();
        seen.insert(init);
        let mut levels = vec![vec![init]];
        for _ in 0..depth {
            let mut next = Vec::new();
            let mut over = false;
            for c in levels.last().expect("nonempty") {
                self.for_each_round(c, |round| {
                    let t = round.target().canonical();
                    if !over && seen.insert(t) {
                        over = seen.len() > budget;
                        next.push(t);
                    }
                });
                if over {
                    return Err(CutoffError::Budget(budget));
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        Ok(levels)
    }
}
