//! Domain types of the two-process (sender/receiver) reduction.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::buffer::{Buffer, BufferError, Encoding, MAX_DELTA};

/// Largest relative-speed bound; timers are packed into 8 bits.
pub const MAX_PHI: u32 = 255;
/// Largest value for `timeout`, `wait_time` and `hlfsc`; packed into 16 bits.
pub const MAX_COUNTER: u32 = u16::MAX as u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("delta must be in 1..={MAX_DELTA}, got {0}")]
    Delta(u32),
    #[error("phi must be in 1..={MAX_PHI}, got {0}")]
    Phi(u32),
    #[error("initial timeout must be at least 1")]
    ZeroTimeout,
    #[error("star_max must be at least 1 when the initial timeout is STAR")]
    StarMax,
    #[error("timeout_cap {cap} is below the largest initial timeout {needed}")]
    TimeoutCap { cap: u32, needed: u32 },
    #[error("{field} = {value} exceeds the supported maximum {MAX_COUNTER}")]
    Capacity { field: &'static str, value: u32 },
    #[error("guard {0} must be at least 1")]
    Guard(&'static str),
    #[error("initial timeout {timeout0} outside 1..={cap}")]
    InitialTimeout { timeout0: u32, cap: u32 },
    #[error("the initial timeout is STAR; a concrete value is required here")]
    StarNotConcrete,
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

/// Initial value of the receiver's timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeoutInit {
    Fixed(u32),
    /// Every value in `1..=star_max`.
    Star,
}

impl fmt::Display for TimeoutInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeoutInit::Fixed(n) => write!(f, "{n}"),
            TimeoutInit::Star => f.write_str("star"),
        }
    }
}

/// Guard constants of the liveness-to-safety reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Guards {
    /// Timeout threshold past which no false suspicion may occur.
    pub g: u32,
    /// Ghost-counter value at which a crashed sender must be suspected.
    pub g_prime: u32,
}

impl Guards {
    /// `g = 6Φ + Δ`, the known-safe initial timeout, and a conservative
    /// `g' = (Δ + Φ + 1) + (g + 1)(Φ + 1)`: the last in-flight message is
    /// delivered within `Δ + Φ` rounds of the crash, after which the receiver
    /// needs at most `g` local ticks spaced at most `Φ + 1` rounds apart.
    pub fn default_for(delta: u32, phi: u32) -> Self {
        let g = 6 * phi + delta;
        let g_prime = (delta + phi + 1) + (g + 1) * (phi + 1);
        Guards { g, g_prime }
    }
}

/// A verification instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Params {
    pub delta: u32,
    pub phi: u32,
    pub timeout_init: TimeoutInit,
    pub star_max: u32,
    pub allow_sender_crash: bool,
    pub allow_receiver_crash: bool,
    pub hlfsc_cap: u32,
    pub timeout_cap: u32,
    pub max_depth: Option<u32>,
    pub encoding: Encoding,
    pub guards: Guards,
}

impl Params {
    pub fn builder(delta: u32, phi: u32) -> ParamsBuilder {
        ParamsBuilder {
            delta,
            phi,
            timeout_init: None,
            star_max: None,
            allow_sender_crash: true,
            allow_receiver_crash: false,
            hlfsc_cap: None,
            timeout_cap: None,
            max_depth: None,
            encoding: Encoding::Counter,
            guard_g: None,
            guard_gprime: None,
        }
    }

    /// The initial timeouts this instance starts from.
    pub fn initial_timeouts(&self) -> Vec<u32> {
        match self.timeout_init {
            TimeoutInit::Fixed(t) => vec![t],
            TimeoutInit::Star => (1..=self.star_max).collect(),
        }
    }

    /// The concrete initial timeout, or an error under STAR.
    pub fn fixed_timeout(&self) -> Result<u32, ParamsError> {
        match self.timeout_init {
            TimeoutInit::Fixed(t) => Ok(t),
            TimeoutInit::Star => Err(ParamsError::StarNotConcrete),
        }
    }

    /// Copy of these parameters with a different concrete initial timeout.
    pub fn with_timeout(&self, timeout0: u32) -> Params {
        Params {
            timeout_init: TimeoutInit::Fixed(timeout0),
            ..self.clone()
        }
    }

    pub fn with_encoding(&self, encoding: Encoding) -> Params {
        Params {
            encoding,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamsBuilder {
    delta: u32,
    phi: u32,
    timeout_init: Option<TimeoutInit>,
    star_max: Option<u32>,
    allow_sender_crash: bool,
    allow_receiver_crash: bool,
    hlfsc_cap: Option<u32>,
    timeout_cap: Option<u32>,
    max_depth: Option<u32>,
    encoding: Encoding,
    guard_g: Option<u32>,
    guard_gprime: Option<u32>,
}

impl ParamsBuilder {
    pub fn timeout_init(mut self, t: TimeoutInit) -> Self {
        self.timeout_init = Some(t);
        self
    }

    pub fn timeout(self, t: u32) -> Self {
        self.timeout_init(TimeoutInit::Fixed(t))
    }

    pub fn star(mut self, star_max: u32) -> Self {
        self.timeout_init = Some(TimeoutInit::Star);
        self.star_max = Some(star_max);
        self
    }

    pub fn star_max(mut self, star_max: u32) -> Self {
        self.star_max = Some(star_max);
        self
    }

    pub fn allow_sender_crash(mut self, yes: bool) -> Self {
        self.allow_sender_crash = yes;
        self
    }

    pub fn allow_receiver_crash(mut self, yes: bool) -> Self {
        self.allow_receiver_crash = yes;
        self
    }

    pub fn hlfsc_cap(mut self, cap: u32) -> Self {
        self.hlfsc_cap = Some(cap);
        self
    }

    pub fn timeout_cap(mut self, cap: u32) -> Self {
        self.timeout_cap = Some(cap);
        self
    }

    pub fn max_depth(mut self, depth: Option<u32>) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn encoding(mut self, encoding: Encoding) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn guard_g(mut self, g: Option<u32>) -> Self {
        self.guard_g = g;
        self
    }

    pub fn guard_gprime(mut self, g_prime: Option<u32>) -> Self {
        self.guard_gprime = g_prime;
        self
    }

    /// Validates and fills in defaults.
    ///
    /// Defaults: initial timeout `g`; `timeout_cap = max(g + 1, largest
    /// initial timeout)`; `hlfsc_cap = g' + 1`.
    pub fn build(self) -> Result<Params, ParamsError> {
        if !(1..=MAX_DELTA).contains(&self.delta) {
            return Err(ParamsError::Delta(self.delta));
        }
        if !(1..=MAX_PHI).contains(&self.phi) {
            return Err(ParamsError::Phi(self.phi));
        }
        let defaults = Guards::default_for(self.delta, self.phi);
        let guards = Guards {
            g: self.guard_g.unwrap_or(defaults.g),
            g_prime: self.guard_gprime.unwrap_or(defaults.g_prime),
        };
        if guards.g == 0 {
            return Err(ParamsError::Guard("g"));
        }
        if guards.g_prime == 0 {
            return Err(ParamsError::Guard("g'"));
        }
        let timeout_init = self.timeout_init.unwrap_or(TimeoutInit::Fixed(defaults.g));
        let star_max = self.star_max.unwrap_or(0);
        let largest_init = match timeout_init {
            TimeoutInit::Fixed(0) => return Err(ParamsError::ZeroTimeout),
            TimeoutInit::Fixed(t) => t,
            TimeoutInit::Star if star_max == 0 => return Err(ParamsError::StarMax),
            TimeoutInit::Star => star_max,
        };
        let timeout_cap = self
            .timeout_cap
            .unwrap_or_else(|| (guards.g + 1).max(largest_init));
        if timeout_cap < largest_init {
            return Err(ParamsError::TimeoutCap {
                cap: timeout_cap,
                needed: largest_init,
            });
        }
        let hlfsc_cap = self.hlfsc_cap.unwrap_or(guards.g_prime + 1);
        for (field, value) in [("timeout_cap", timeout_cap), ("hlfsc_cap", hlfsc_cap)] {
            if value > MAX_COUNTER {
                return Err(ParamsError::Capacity { field, value });
            }
        }
        Ok(Params {
            delta: self.delta,
            phi: self.phi,
            timeout_init,
            star_max,
            allow_sender_crash: self.allow_sender_crash,
            allow_receiver_crash: self.allow_receiver_crash,
            hlfsc_cap,
            timeout_cap,
            max_depth: self.max_depth,
            encoding: self.encoding,
            guards,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Location {
    Working,
    /// Absorbing.
    Crashed,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Location::Working => "WORKING",
            Location::Crashed => "CRASHED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SubRound {
    #[serde(rename = "SCHED")]
    Sched,
    #[serde(rename = "SND")]
    Snd,
    #[serde(rename = "RCV")]
    Rcv,
    #[serde(rename = "COMP")]
    Comp,
}

impl SubRound {
    pub(crate) fn index(self) -> u128 {
        self as u128
    }

    pub(crate) fn from_index(i: u128) -> Self {
        match i {
            0 => SubRound::Sched,
            1 => SubRound::Snd,
            2 => SubRound::Rcv,
            _ => SubRound::Comp,
        }
    }
}

impl fmt::Display for SubRound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubRound::Sched => "SCHED",
            SubRound::Snd => "SND",
            SubRound::Rcv => "RCV",
            SubRound::Comp => "COMP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Process {
    Sender,
    Receiver,
}

/// Per-process choice made by the environment in the Schedule sub-round.
///
/// Variant order is the canonical successor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcChoice {
    /// Timer reset to 0: the process takes a step this round.
    Reset,
    /// Timer advanced by one: the process sits this round out.
    Tick,
    /// The process crashes now.
    Crash,
    /// Already crashed; nothing to decide.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SendKind {
    Active,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiveKind {
    /// Receiver inactive or crashed.
    Idle,
    /// Receiver active; the bit set of removed ages (0 for an empty receive).
    Deliver(u64),
}

/// One sub-round step. Together with the source state a label determines
/// the successor uniquely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransitionLabel {
    /// Schedule sender, schedule receiver, then age messages.
    Sched {
        sender: ProcChoice,
        receiver: ProcChoice,
    },
    Send(SendKind),
    Receive(ReceiveKind),
    Compute,
}

impl TransitionLabel {
    pub fn subround(&self) -> SubRound {
        match self {
            TransitionLabel::Sched { .. } => SubRound::Sched,
            TransitionLabel::Send(_) => SubRound::Snd,
            TransitionLabel::Receive(_) => SubRound::Rcv,
            TransitionLabel::Compute => SubRound::Comp,
        }
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn sched(f: &mut fmt::Formatter<'_>, who: char, c: ProcChoice) -> fmt::Result {
            match c {
                ProcChoice::Reset => write!(f, "SCHED_{who}(reset)"),
                ProcChoice::Tick => write!(f, "SCHED_{who}(tick)"),
                ProcChoice::Crash => write!(f, "CRASH_{who}"),
                ProcChoice::Down => write!(f, "DOWN_{who}"),
            }
        }
        match self {
            TransitionLabel::Sched { sender, receiver } => {
                sched(f, 'S', *sender)?;
                f.write_str("+")?;
                sched(f, 'R', *receiver)?;
                f.write_str("+AGE")
            }
            TransitionLabel::Send(SendKind::Active) => f.write_str("SEND(active)"),
            TransitionLabel::Send(SendKind::Skip) => f.write_str("SEND(skip)"),
            TransitionLabel::Receive(ReceiveKind::Idle) => f.write_str("RECEIVE(idle)"),
            TransitionLabel::Receive(ReceiveKind::Deliver(mask)) => {
                write!(f, "RECEIVE({mask})")
            }
            TransitionLabel::Compute => f.write_str("COMPUTE"),
        }
    }
}

impl serde::Serialize for TransitionLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One configuration of the two-process system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GlobalState {
    pub subround: SubRound,
    pub s_loc: Location,
    pub r_loc: Location,
    /// Rounds since the sender last took a step; 0 means active this round.
    pub s_timer: u32,
    pub r_timer: u32,
    pub buf: Buffer,
    /// Receiver-local ticks since the last delivery, saturating at `timeout`.
    pub wait_time: u32,
    pub timeout: u32,
    pub suspected: bool,
    pub delivered_this_round: bool,
    /// Ghost: rounds since the sender crashed while not suspected.
    pub hlfsc: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type invariant violated: {0}")]
pub struct TypeViolation(pub String);

/// Exact packing of a [`GlobalState`] minus its buffer encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(u128);

impl GlobalState {
    /// Builds the initial state for a concrete initial timeout.
    pub fn initial(p: &Params, timeout0: u32) -> Result<Self, ParamsError> {
        if timeout0 == 0 || timeout0 > p.timeout_cap {
            return Err(ParamsError::InitialTimeout {
                timeout0,
                cap: p.timeout_cap,
            });
        }
        Ok(GlobalState {
            subround: SubRound::Sched,
            s_loc: Location::Working,
            r_loc: Location::Working,
            s_timer: 0,
            r_timer: 0,
            buf: Buffer::empty(p.encoding, p.delta)?,
            wait_time: 0,
            timeout: timeout0,
            suspected: false,
            delivered_this_round: false,
            hlfsc: 0,
        })
    }

    /// `Correct(who)`: the process has not crashed.
    pub fn is_correct(&self, who: Process) -> bool {
        match who {
            Process::Sender => self.s_loc != Location::Crashed,
            Process::Receiver => self.r_loc != Location::Crashed,
        }
    }

    pub fn both_correct(&self) -> bool {
        self.is_correct(Process::Sender) && self.is_correct(Process::Receiver)
    }

    /// Checks every field bound of the state type.
    pub fn check_type(&self, p: &Params) -> Result<(), TypeViolation> {
        let fail = |msg: String| Err(TypeViolation(msg));
        if self.s_timer > p.phi || self.r_timer > p.phi {
            return fail(format!(
                "timers ({}, {}) exceed phi = {}",
                self.s_timer, self.r_timer, p.phi
            ));
        }
        if self.buf.delta() != p.delta || self.buf.value() >> (p.delta + 1) != 0 {
            return fail(format!("buffer {} exceeds the abstract width", self.buf));
        }
        if self.buf.encoding() != p.encoding {
            return fail(format!("buffer uses the {} encoding", self.buf.encoding()));
        }
        if self.wait_time > self.timeout {
            return fail(format!(
                "wait_time {} > timeout {}",
                self.wait_time, self.timeout
            ));
        }
        if self.timeout == 0 || self.timeout > p.timeout_cap {
            return fail(format!(
                "timeout {} outside 1..={}",
                self.timeout, p.timeout_cap
            ));
        }
        if self.hlfsc > p.hlfsc_cap {
            return fail(format!("hlfsc {} > cap {}", self.hlfsc, p.hlfsc_cap));
        }
        if !p.allow_receiver_crash && self.r_loc == Location::Crashed {
            return fail("receiver crashed with receiver crashes disabled".into());
        }
        if !p.allow_sender_crash && self.s_loc == Location::Crashed {
            return fail("sender crashed with sender crashes disabled".into());
        }
        Ok(())
    }

    /// Injective packing into 102 bits. Relies on the capacity limits
    /// enforced by [`ParamsBuilder::build`].
    pub fn key(&self) -> StateKey {
        let mut k: u128 = self.subround.index();
        k = k << 1 | (self.s_loc == Location::Crashed) as u128;
        k = k << 1 | (self.r_loc == Location::Crashed) as u128;
        k = k << 1 | self.suspected as u128;
        k = k << 1 | self.delivered_this_round as u128;
        k = k << 8 | self.s_timer as u128;
        k = k << 8 | self.r_timer as u128;
        k = k << 32 | self.buf.value() as u128;
        k = k << 16 | self.wait_time as u128;
        k = k << 16 | self.timeout as u128;
        k = k << 16 | self.hlfsc as u128;
        StateKey(k)
    }

    /// Inverse of [`GlobalState::key`].
    pub fn from_key(key: StateKey, p: &Params) -> Self {
        let mut k = key.0;
        let mut take = |bits: u32| {
            let v = k & ((1u128 << bits) - 1);
            k >>= bits;
            v
        };
        let hlfsc = take(16) as u32;
        let timeout = take(16) as u32;
        let wait_time = take(16) as u32;
        let buf = take(32) as u64;
        let r_timer = take(8) as u32;
        let s_timer = take(8) as u32;
        let delivered_this_round = take(1) == 1;
        let suspected = take(1) == 1;
        let r_crashed = take(1) == 1;
        let s_crashed = take(1) == 1;
        let subround = SubRound::from_index(take(2));
        let loc = |c: bool| {
            if c {
                Location::Crashed
            } else {
                Location::Working
            }
        };
        GlobalState {
            subround,
            s_loc: loc(s_crashed),
            r_loc: loc(r_crashed),
            s_timer,
            r_timer,
            buf: Buffer::from_value(p.encoding, p.delta, buf)
                .expect("packed buffer fits its delta"),
            wait_time,
            timeout,
            suspected,
            delivered_this_round,
            hlfsc,
        }
    }
}

impl fmt::Display for GlobalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{ePC={},s_loc={},r_loc={},s_timer={},r_timer={},buf={},wait_time={},timeout={},suspected={},delivered={},hlfsc={}}}",
            self.subround,
            self.s_loc,
            self.r_loc,
            self.s_timer,
            self.r_timer,
            self.buf,
            self.wait_time,
            self.timeout,
            self.suspected,
            self.delivered_this_round,
            self.hlfsc
        )
    }
}
