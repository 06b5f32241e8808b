//! The sender→receiver message buffer.
//!
//! Only "alive" messages flow from the sender to the receiver and the
//! receiver's computation never looks at their contents, so the buffer is
//! represented by which message *ages* are present. Two interchangeable
//! encodings are provided:
//!
//! * [`Encoding::Predicate`]: one boolean per age index, updated pointwise.
//! * [`Encoding::Counter`]: a natural number whose bit `k` is set iff a
//!   message of age `k` is in transit, updated with Presburger arithmetic.
//!
//! Both apply the old-message abstraction: ages `>= delta` collapse into a
//! single slot at index `delta` that no longer grows. The abstract buffer is
//! therefore `delta + 1` bits wide.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Largest supported message-delay bound. The counter fits in a `u32` and
/// the packed state key reserves 32 bits for it.
pub const MAX_DELTA: u32 = 31;

/// Storage width for raw (unabstracted) aging.
pub const MAX_RAW_WIDTH: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("delta must be in 1..={MAX_DELTA}, got {0}")]
    DeltaOutOfRange(u32),
    #[error("a fresh message is already in the buffer (bit 0 set in {0})")]
    FreshSlotOccupied(u64),
    #[error("age {age} is outside the abstract buffer 0..={delta}")]
    AgeOutOfRange { age: u32, delta: u32 },
    #[error("value {value} does not fit a buffer with delta = {delta}")]
    ValueOutOfRange { value: u64, delta: u32 },
    #[error("raw aging of {value} overflows width {width_cap}")]
    Overflow { value: u64, width_cap: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Encoding {
    Predicate,
    Counter,
}

impl Encoding {
    pub const ALL: [Encoding; 2] = [Encoding::Predicate, Encoding::Counter];
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Predicate => "predicate",
            Encoding::Counter => "counter",
        })
    }
}

/// Presburger-style operations on the counter encoding.
///
/// These are free functions over a bare `u64` so the N-process system in
/// [`crate::cutoff`] can reuse them without carrying a [`Buffer`] per pair.
pub mod counter {
    /// Adds a fresh message: `buf + 1`. Caller guarantees bit 0 is clear.
    pub fn send(value: u64) -> u64 {
        debug_assert!(value & 1 == 0);
        value + 1
    }

    /// Increases every age by one under the old-message abstraction.
    pub fn age(value: u64, delta: u32) -> u64 {
        let old = 1u64 << delta;
        let almost_old = 1u64 << (delta - 1);
        if value < old {
            value * 2
        } else if value >= old + almost_old {
            value * 2 - (old << 1)
        } else {
            value * 2 - (old << 1) + old
        }
    }

    /// Every legal delivery from `value`, as `(removed, remaining)` pairs in
    /// ascending order of `removed`. The old slot is always removed when set.
    pub fn deliveries(value: u64, delta: u32) -> Vec<(u64, u64)> {
        delivery_iter(value, delta).collect()
    }

    /// Allocation-free form of [`deliveries`].
    pub fn delivery_iter(value: u64, delta: u32) -> impl Iterator<Item = (u64, u64)> {
        let mandatory = value & (1u64 << delta);
        let optional = value & !mandatory;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let sub = next?;
            next = (sub != optional).then(|| sub.wrapping_sub(optional) & optional);
            let removed = sub | mandatory;
            Some((removed, value - removed))
        })
    }
}

/// Age predicate: `exists[k]` tells whether a message of age `k` is in
/// transit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgePredicate {
    delta: u8,
    exists: [bool; MAX_RAW_WIDTH as usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgeCounter {
    delta: u8,
    value: u64,
}

/// One outcome of the receiver's Receive step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    /// Bit set of removed ages; doubles as the delivery-choice id in labels.
    pub removed: u64,
    pub remaining: Buffer,
}

impl Delivery {
    pub fn delivered(&self) -> bool {
        self.removed != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Buffer {
    Predicate(AgePredicate),
    Counter(AgeCounter),
}

fn check_delta(delta: u32) -> Result<(), BufferError> {
    if (1..=MAX_DELTA).contains(&delta) {
        Ok(())
    } else {
        Err(BufferError::DeltaOutOfRange(delta))
    }
}

impl AgePredicate {
    fn empty(delta: u8) -> Self {
        Self {
            delta,
            exists: [false; MAX_RAW_WIDTH as usize],
        }
    }

    fn from_bits(delta: u8, value: u64) -> Self {
        let mut p = Self::empty(delta);
        for (k, slot) in p.exists.iter_mut().enumerate() {
            *slot = value >> k & 1 == 1;
        }
        p
    }

    fn bits(&self) -> u64 {
        self.exists
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .fold(0, |acc, (k, _)| acc | 1 << k)
    }

    fn send(&self) -> Self {
        let mut next = *self;
        next.exists[0] = true;
        next
    }

    fn age(&self) -> Self {
        let delta = self.delta as usize;
        let mut next = Self::empty(self.delta);
        // ages 0..=delta-2 move up by one; age 0 becomes empty
        for x in 0..delta.saturating_sub(1) {
            next.exists[x + 1] = self.exists[x];
        }
        next.exists[delta] = self.exists[delta] || self.exists[delta - 1];
        next
    }

    fn age_raw(&self) -> Self {
        let mut next = Self::empty(self.delta);
        for x in 0..MAX_RAW_WIDTH as usize - 1 {
            next.exists[x + 1] = self.exists[x];
        }
        next
    }

    /// Enumerates removal sets index by index from the highest age down, so
    /// outcomes come out in ascending order of the removed set's value.
    fn deliveries(&self) -> Vec<(u64, Self)> {
        fn go(
            p: &AgePredicate,
            idx: usize,
            removed: &mut [bool],
            out: &mut Vec<(u64, AgePredicate)>,
        ) {
            if idx == 0 {
                let mut remaining = *p;
                let mut mask = 0u64;
                for (k, &r) in removed.iter().enumerate() {
                    if r {
                        remaining.exists[k] = false;
                        mask |= 1 << k;
                    }
                }
                out.push((mask, remaining));
                return;
            }
            let k = idx - 1;
            let must = k == p.delta as usize && p.exists[k];
            if !must {
                removed[k] = false;
                go(p, k, removed, out);
            }
            if p.exists[k] {
                removed[k] = true;
                go(p, k, removed, out);
                removed[k] = false;
            }
        }
        let mut out = Vec::new();
        let width = self.delta as usize + 1;
        let mut removed = vec![false; width];
        go(self, width, &mut removed, &mut out);
        out
    }
}

impl Buffer {
    /// The empty buffer: all age slots clear.
    pub fn empty(encoding: Encoding, delta: u32) -> Result<Self, BufferError> {
        Self::from_value(encoding, delta, 0)
    }

    /// Builds a buffer from its counter natural.
    pub fn from_value(encoding: Encoding, delta: u32, value: u64) -> Result<Self, BufferError> {
        check_delta(delta)?;
        if value >> (delta + 1) != 0 {
            return Err(BufferError::ValueOutOfRange { value, delta });
        }
        Ok(Self::from_value_unchecked(encoding, delta as u8, value))
    }

    /// Builds a buffer from a predicate vector indexed by age.
    pub fn from_predicate(delta: u32, exists: &[bool]) -> Result<Self, BufferError> {
        check_delta(delta)?;
        if exists.len() > delta as usize + 1 && exists[delta as usize + 1..].iter().any(|&e| e) {
            return Err(BufferError::AgeOutOfRange {
                age: exists.iter().rposition(|&e| e).unwrap_or(0) as u32,
                delta,
            });
        }
        let mut p = AgePredicate::empty(delta as u8);
        for (k, &e) in exists.iter().take(delta as usize + 1).enumerate() {
            p.exists[k] = e;
        }
        Ok(Buffer::Predicate(p))
    }

    fn from_value_unchecked(encoding: Encoding, delta: u8, value: u64) -> Self {
        match encoding {
            Encoding::Counter => Buffer::Counter(AgeCounter { delta, value }),
            Encoding::Predicate => Buffer::Predicate(AgePredicate::from_bits(delta, value)),
        }
    }

    pub fn encoding(&self) -> Encoding {
        match self {
            Buffer::Predicate(_) => Encoding::Predicate,
            Buffer::Counter(_) => Encoding::Counter,
        }
    }

    pub fn delta(&self) -> u32 {
        match self {
            Buffer::Predicate(p) => p.delta as u32,
            Buffer::Counter(c) => c.delta as u32,
        }
    }

    /// The counter natural denoted by this buffer, whatever its encoding.
    pub fn value(&self) -> u64 {
        match self {
            Buffer::Predicate(p) => p.bits(),
            Buffer::Counter(c) => c.value,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.value() == 0
    }

    /// Predicate view, one entry per abstract age `0..=delta`.
    pub fn ages(&self) -> Vec<bool> {
        let v = self.value();
        (0..=self.delta()).map(|k| v >> k & 1 == 1).collect()
    }

    /// Largest age with a message in transit.
    pub fn oldest_age(&self) -> Option<u32> {
        let v = self.value();
        (v != 0).then(|| 63 - v.leading_zeros())
    }

    /// Adds a fresh (age 0) message.
    pub fn send(&self) -> Result<Self, BufferError> {
        if self.value() & 1 == 1 {
            return Err(BufferError::FreshSlotOccupied(self.value()));
        }
        Ok(match self {
            Buffer::Predicate(p) => Buffer::Predicate(p.send()),
            Buffer::Counter(c) => Buffer::Counter(AgeCounter {
                delta: c.delta,
                value: counter::send(c.value),
            }),
        })
    }

    /// Increases every message age by one, collapsing old messages into the
    /// slot at index `delta`.
    pub fn age(&self) -> Self {
        match self {
            Buffer::Predicate(p) => Buffer::Predicate(p.age()),
            Buffer::Counter(c) => Buffer::Counter(AgeCounter {
                delta: c.delta,
                value: counter::age(c.value, c.delta as u32),
            }),
        }
    }

    /// Increases every age by one without the abstraction (a plain shift).
    ///
    /// The result may have bits above `delta`; it is only meaningful as an
    /// input to further raw operations or to [`Buffer::value`].
    pub fn age_raw(&self, width_cap: u32) -> Result<Self, BufferError> {
        let value = self.value();
        let width_cap = width_cap.min(MAX_RAW_WIDTH);
        if value != 0 && 64 - value.leading_zeros() >= width_cap {
            return Err(BufferError::Overflow { value, width_cap });
        }
        Ok(match self {
            Buffer::Predicate(p) => Buffer::Predicate(p.age_raw()),
            Buffer::Counter(c) => Buffer::Counter(AgeCounter {
                delta: c.delta,
                value: c.value * 2,
            }),
        })
    }

    /// All outcomes of an active receiver's Receive step, in ascending order
    /// of the removed set. Every outcome has the old slot clear.
    pub fn deliveries(&self) -> Vec<Delivery> {
        match self {
            Buffer::Predicate(p) => p
                .deliveries()
                .into_iter()
                .map(|(removed, remaining)| Delivery {
                    removed,
                    remaining: Buffer::Predicate(remaining),
                })
                .collect(),
            Buffer::Counter(c) => counter::deliveries(c.value, c.delta as u32)
                .into_iter()
                .map(|(removed, remaining)| Delivery {
                    removed,
                    remaining: Buffer::Counter(AgeCounter {
                        delta: c.delta,
                        value: remaining,
                    }),
                })
                .collect(),
        }
    }

    /// Whether a message of age `k` is in transit.
    pub fn query_age(&self, k: u32) -> Result<bool, BufferError> {
        if k > self.delta() {
            return Err(BufferError::AgeOutOfRange {
                age: k,
                delta: self.delta(),
            });
        }
        Ok(match self {
            Buffer::Predicate(p) => p.exists[k as usize],
            Buffer::Counter(c) => c.value >> k & 1 == 1,
        })
    }

    /// Same abstract content in `target` encoding.
    pub fn convert(&self, target: Encoding) -> Self {
        if self.encoding() == target {
            return *self;
        }
        Self::from_value_unchecked(target, self.delta() as u8, self.value())
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.value(), self.delta())
    }
}

/// Reports carry the counter natural plus delta regardless of encoding.
impl Serialize for Buffer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Buffer", 2)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("delta", &self.delta())?;
        s.end()
    }
}
