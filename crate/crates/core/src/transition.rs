//! Sub-round successor relation of the two-process system.
//!
//! A round is Schedule; Send; Receive; Computation. All nondeterminism sits
//! in Schedule (crash and timer choices) and Receive (which in-transit
//! messages get delivered); Send and Computation are deterministic.

use thiserror::Error;

use crate::buffer::{Buffer, BufferError};
use crate::model::{
    GlobalState, Location, Params, ProcChoice, ReceiveKind, SendKind, SubRound, TransitionLabel,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("expected a state in sub-round {expected}, found {found}")]
    WrongSubRound { expected: SubRound, found: SubRound },
    #[error("label {label} is not enabled: {reason}")]
    Disabled {
        label: TransitionLabel,
        reason: &'static str,
    },
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

/// The four sub-round steps of one global round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundStep {
    pub steps: [(TransitionLabel, GlobalState); 4],
}

impl RoundStep {
    pub fn target(&self) -> &GlobalState {
        &self.steps[3].1
    }

    pub fn labels(&self) -> [TransitionLabel; 4] {
        self.steps.map(|(l, _)| l)
    }
}

fn expect(s: &GlobalState, expected: SubRound) -> Result<(), TransitionError> {
    if s.subround == expected {
        Ok(())
    } else {
        Err(TransitionError::WrongSubRound {
            expected,
            found: s.subround,
        })
    }
}

fn proc_choices(loc: Location, timer: u32, phi: u32, may_crash: bool) -> Vec<ProcChoice> {
    if loc == Location::Crashed {
        return vec![ProcChoice::Down];
    }
    let mut out = vec![ProcChoice::Reset];
    if timer < phi {
        out.push(ProcChoice::Tick);
    }
    if may_crash {
        out.push(ProcChoice::Crash);
    }
    out
}

fn schedule(loc: &mut Location, timer: &mut u32, choice: ProcChoice) {
    match choice {
        ProcChoice::Reset => *timer = 0,
        ProcChoice::Tick => *timer += 1,
        ProcChoice::Crash => *loc = Location::Crashed,
        ProcChoice::Down => {}
    }
}

fn sender_active(s: &GlobalState) -> bool {
    s.s_loc == Location::Working && s.s_timer == 0
}

fn receiver_active(s: &GlobalState) -> bool {
    s.r_loc == Location::Working && s.r_timer == 0
}

fn apply_sched(
    s: &GlobalState,
    sender: ProcChoice,
    receiver: ProcChoice,
    p: &Params,
) -> Result<GlobalState, TransitionError> {
    let mut next = *s;
    schedule(&mut next.s_loc, &mut next.s_timer, sender);
    schedule(&mut next.r_loc, &mut next.r_timer, receiver);
    next.buf = next.buf.age();
    if sender == ProcChoice::Crash {
        next.hlfsc = 0;
    }
    if receiver == ProcChoice::Crash {
        next.buf = Buffer::empty(p.encoding, p.delta)?;
    }
    next.delivered_this_round = false;
    next.subround = SubRound::Snd;
    Ok(next)
}

/// Schedule sub-round: the product of the sender's and the receiver's
/// choices, each followed by message aging. Sorted by label.
pub fn sched_successors(
    s: &GlobalState,
    p: &Params,
) -> Result<Vec<(TransitionLabel, GlobalState)>, TransitionError> {
    expect(s, SubRound::Sched)?;
    let senders = proc_choices(s.s_loc, s.s_timer, p.phi, p.allow_sender_crash);
    let receivers = proc_choices(s.r_loc, s.r_timer, p.phi, p.allow_receiver_crash);
    let mut out = Vec::with_capacity(senders.len() * receivers.len());
    for &sender in &senders {
        for &receiver in &receivers {
            out.push((
                TransitionLabel::Sched { sender, receiver },
                apply_sched(s, sender, receiver, p)?,
            ));
        }
    }
    Ok(out)
}

/// Send sub-round: an active sender adds a fresh message.
pub fn send_step(s: &GlobalState) -> Result<(TransitionLabel, GlobalState), TransitionError> {
    expect(s, SubRound::Snd)?;
    let mut next = *s;
    next.subround = SubRound::Rcv;
    let kind = if sender_active(s) {
        next.buf = s.buf.send()?;
        SendKind::Active
    } else {
        SendKind::Skip
    };
    Ok((TransitionLabel::Send(kind), next))
}

fn apply_delivery(s: &GlobalState, removed: u64, remaining: Buffer, p: &Params) -> GlobalState {
    let mut next = *s;
    next.subround = SubRound::Comp;
    next.buf = remaining;
    next.delivered_this_round = removed != 0;
    if removed != 0 {
        next.wait_time = 0;
        if s.suspected {
            next.timeout = (s.timeout + 1).min(p.timeout_cap);
            next.suspected = false;
        }
    }
    next
}

/// Receive sub-round: one successor per legal delivery for an active
/// receiver, otherwise a single idle step.
pub fn receive_successors(
    s: &GlobalState,
    p: &Params,
) -> Result<Vec<(TransitionLabel, GlobalState)>, TransitionError> {
    expect(s, SubRound::Rcv)?;
    if !receiver_active(s) {
        let mut next = *s;
        next.subround = SubRound::Comp;
        return Ok(vec![(TransitionLabel::Receive(ReceiveKind::Idle), next)]);
    }
    Ok(s.buf
        .deliveries()
        .into_iter()
        .map(|d| {
            (
                TransitionLabel::Receive(ReceiveKind::Deliver(d.removed)),
                apply_delivery(s, d.removed, d.remaining, p),
            )
        })
        .collect())
}

/// Computation sub-round: the receiver's timeout check plus the ghost
/// counter update. Closes the round.
pub fn comp_step(
    s: &GlobalState,
    p: &Params,
) -> Result<(TransitionLabel, GlobalState), TransitionError> {
    expect(s, SubRound::Comp)?;
    let mut next = *s;
    if receiver_active(s) && !s.delivered_this_round {
        next.wait_time = (s.wait_time + 1).min(s.timeout);
        if !s.suspected && next.wait_time >= s.timeout {
            next.suspected = true;
        }
    }
    // ghost condition is read before the suspicion check above takes effect
    if s.s_loc == Location::Crashed && s.r_loc == Location::Working && !s.suspected {
        next.hlfsc = (s.hlfsc + 1).min(p.hlfsc_cap);
    }
    next.subround = SubRound::Sched;
    Ok((TransitionLabel::Compute, next))
}

/// Sub-round successors of `s`, whichever sub-round it is in.
pub fn successors(
    s: &GlobalState,
    p: &Params,
) -> Result<Vec<(TransitionLabel, GlobalState)>, TransitionError> {
    match s.subround {
        SubRound::Sched => sched_successors(s, p),
        SubRound::Snd => Ok(vec![send_step(s)?]),
        SubRound::Rcv => receive_successors(s, p),
        SubRound::Comp => Ok(vec![comp_step(s, p)?]),
    }
}

/// Full-round successors with their four-step fragments, in canonical
/// (label-lexicographic) order.
pub fn round_successors(s: &GlobalState, p: &Params) -> Result<Vec<RoundStep>, TransitionError> {
    let mut out = Vec::new();
    for (l_sched, s1) in sched_successors(s, p)? {
        let (l_snd, s2) = send_step(&s1)?;
        for (l_rcv, s3) in receive_successors(&s2, p)? {
            let (l_comp, s4) = comp_step(&s3, p)?;
            out.push(RoundStep {
                steps: [(l_sched, s1), (l_snd, s2), (l_rcv, s3), (l_comp, s4)],
            });
        }
    }
    Ok(out)
}

/// Round successor states only.
pub fn round_targets(s: &GlobalState, p: &Params) -> Result<Vec<GlobalState>, TransitionError> {
    Ok(round_successors(s, p)?
        .into_iter()
        .map(|r| *r.target())
        .collect())
}

/// Applies one labelled sub-round step, rejecting labels that are not
/// enabled in `s`.
pub fn apply_label(
    s: &GlobalState,
    label: TransitionLabel,
    p: &Params,
) -> Result<GlobalState, TransitionError> {
    expect(s, label.subround())?;
    let disabled = |reason| Err(TransitionError::Disabled { label, reason });
    match label {
        TransitionLabel::Sched { sender, receiver } => {
            if !proc_choices(s.s_loc, s.s_timer, p.phi, p.allow_sender_crash).contains(&sender) {
                return disabled("sender choice not available");
            }
            if !proc_choices(s.r_loc, s.r_timer, p.phi, p.allow_receiver_crash).contains(&receiver)
            {
                return disabled("receiver choice not available");
            }
            apply_sched(s, sender, receiver, p)
        }
        TransitionLabel::Send(kind) => {
            let (actual, next) = send_step(s)?;
            if actual != TransitionLabel::Send(kind) {
                return disabled("send activity does not match the sender timer");
            }
            Ok(next)
        }
        TransitionLabel::Receive(ReceiveKind::Idle) => {
            if receiver_active(s) {
                return disabled("an active receiver must take a receive step");
            }
            let mut next = *s;
            next.subround = SubRound::Comp;
            Ok(next)
        }
        TransitionLabel::Receive(ReceiveKind::Deliver(mask)) => {
            if !receiver_active(s) {
                return disabled("receiver is not active");
            }
            match s.buf.deliveries().into_iter().find(|d| d.removed == mask) {
                Some(d) => Ok(apply_delivery(s, d.removed, d.remaining, p)),
                None => disabled("not a legal delivery for this buffer"),
            }
        }
        TransitionLabel::Compute => Ok(comp_step(s, p)?.1),
    }
}
