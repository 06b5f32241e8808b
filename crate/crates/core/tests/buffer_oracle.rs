//! Buffer operations against a brute-force model of in-flight messages,
//! and the two encodings against each other.

use std::collections::BTreeSet;

use fdcheck_core::buffer::counter;
use fdcheck_core::{Buffer, Encoding};
use proptest::prelude::*;

/// Concrete ages of in-flight messages (at most one per age, since the
/// sender adds at most one message per round).
type Ages = BTreeSet<u32>;

/// Abstraction: a message of age `a` sets bit `min(a, delta)`.
fn alpha(ages: &Ages, delta: u32) -> u64 {
    ages.iter().fold(0, |acc, &a| acc | 1 << a.min(delta))
}

fn grow(ages: &Ages) -> Ages {
    ages.iter().map(|a| a + 1).collect()
}

/// Every subset of raw ages `0..=delta + 2`, which covers every abstract
/// value and every way the old slot can be populated.
fn raw_configs(delta: u32) -> impl Iterator<Item = Ages> {
    let width = delta + 3;
    (0u64..1 << width).map(move |m| (0..width).filter(|k| m >> k & 1 == 1).collect())
}

#[test]
fn age_matches_multiset_oracle() {
    for delta in 1..=4 {
        for ages in raw_configs(delta) {
            let before = alpha(&ages, delta);
            let expected = alpha(&grow(&ages), delta);
            assert_eq!(counter::age(before, delta), expected, "delta={delta} ages={ages:?}");
            for enc in Encoding::ALL {
                let b = Buffer::from_value(enc, delta, before).unwrap();
                assert_eq!(b.age().value(), expected, "{enc} delta={delta} ages={ages:?}");
            }
        }
    }
}

#[test]
fn deliveries_match_multiset_oracle() {
    // a delivery removes any subset of the messages, and must remove every
    // message of age >= delta
    for delta in 1..=4 {
        for ages in raw_configs(delta) {
            let v = alpha(&ages, delta);
            let list: Vec<u32> = ages.iter().copied().collect();
            let mut expected = BTreeSet::new();
            for m in 0u64..1 << list.len() {
                let removed: Ages = (0..list.len())
                    .filter(|i| m >> i & 1 == 1)
                    .map(|i| list[i])
                    .collect();
                if ages.iter().any(|&a| a >= delta && !removed.contains(&a)) {
                    continue;
                }
                let kept: Ages = ages.difference(&removed).copied().collect();
                expected.insert((alpha(&removed, delta), alpha(&kept, delta)));
            }
            let got: BTreeSet<(u64, u64)> = counter::deliveries(v, delta).into_iter().collect();
            assert_eq!(got, expected, "delta={delta} ages={ages:?}");
        }
    }
}

#[test]
fn send_matches_multiset_oracle() {
    for delta in 1..=4 {
        for ages in raw_configs(delta).filter(|a| !a.contains(&0)) {
            let mut after = ages.clone();
            after.insert(0);
            let v = alpha(&ages, delta);
            assert_eq!(counter::send(v), alpha(&after, delta));
        }
    }
}

#[test]
fn pinned_values() {
    assert_eq!(counter::age(6, 2), 4);
    assert_eq!(counter::age(5, 2), 6);
    let raw = Buffer::from_value(Encoding::Counter, 2, 6).unwrap().age_raw(64).unwrap();
    assert_eq!(raw.value(), 12);
    let raw = Buffer::from_value(Encoding::Predicate, 2, 6).unwrap().age_raw(64).unwrap();
    assert_eq!(raw.value(), 12);
}

fn assert_same(p: &Buffer, c: &Buffer, ctx: &str) {
    assert_eq!(p.value(), c.value(), "{ctx}");
    assert_eq!(p.ages(), c.ages(), "{ctx}");
    assert_eq!(p.is_empty(), c.is_empty(), "{ctx}");
    assert_eq!(p.oldest_age(), c.oldest_age(), "{ctx}");
    for k in 0..=p.delta() + 1 {
        assert_eq!(p.query_age(k).ok(), c.query_age(k).ok(), "{ctx} query {k}");
    }
}

#[test]
fn encodings_agree_exhaustively() {
    for delta in 1..=6 {
        for v in 0..1u64 << (delta + 1) {
            let p = Buffer::from_value(Encoding::Predicate, delta, v).unwrap();
            let c = Buffer::from_value(Encoding::Counter, delta, v).unwrap();
            let ctx = format!("delta={delta} value={v}");
            assert_same(&p, &c, &ctx);
            assert_same(&p.age(), &c.age(), &format!("{ctx} age"));
            match (p.send(), c.send()) {
                (Ok(ps), Ok(cs)) => assert_same(&ps, &cs, &format!("{ctx} send")),
                (Err(a), Err(b)) => assert_eq!(a, b),
                other => panic!("{ctx}: send disagrees: {other:?}"),
            }
            match (p.age_raw(64), c.age_raw(64)) {
                (Ok(pr), Ok(cr)) => assert_eq!(pr.value(), cr.value(), "{ctx} raw"),
                other => panic!("{ctx}: raw aging disagrees: {other:?}"),
            }
            let pd = p.deliveries();
            let cd = c.deliveries();
            assert_eq!(pd.len(), cd.len(), "{ctx}");
            for (a, b) in pd.iter().zip(&cd) {
                assert_eq!(a.removed, b.removed, "{ctx}");
                assert_same(&a.remaining, &b.remaining, &format!("{ctx} deliver {}", a.removed));
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Send,
    Age,
    Deliver(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Send), Just(Op::Age), (0usize..64).prop_map(Op::Deliver)]
}

proptest! {
    /// Any operation sequence keeps the two encodings in lockstep and the
    /// buffer within its abstract width.
    #[test]
    fn encodings_in_lockstep(delta in 1u32..=8, ops in prop::collection::vec(op(), 0..40)) {
        let mut p = Buffer::empty(Encoding::Predicate, delta).unwrap();
        let mut c = Buffer::empty(Encoding::Counter, delta).unwrap();
        for o in ops {
            match o {
                Op::Send => {
                    if let (Ok(ps), Ok(cs)) = (p.send(), c.send()) {
                        p = ps;
                        c = cs;
                    } else {
                        prop_assert!(p.send().is_err() && c.send().is_err());
                    }
                }
                Op::Age => {
                    p = p.age();
                    c = c.age();
                }
                Op::Deliver(i) => {
                    let pd = p.deliveries();
                    let cd = c.deliveries();
                    prop_assert_eq!(pd.len(), cd.len());
                    let k = i % pd.len();
                    prop_assert_eq!(pd[k].removed, cd[k].removed);
                    p = pd[k].remaining;
                    c = cd[k].remaining;
                }
            }
            prop_assert_eq!(p.value(), c.value());
            prop_assert!(c.value() >> (delta + 1) == 0);
        }
    }

    /// Aging never loses a message and never reorders ages.
    #[test]
    fn aging_preserves_presence(delta in 1u32..=8, v in any::<u64>()) {
        let v = v & ((1 << (delta + 1)) - 1);
        let aged = counter::age(v, delta);
        prop_assert_eq!(v == 0, aged == 0);
        prop_assert_eq!(aged & 1, 0);
        prop_assert!(aged.count_ones() <= v.count_ones());
    }

    /// Deliveries partition the buffer and always clear the old slot.
    #[test]
    fn deliveries_partition(delta in 1u32..=8, v in any::<u64>()) {
        let v = v & ((1 << (delta + 1)) - 1);
        let all = counter::deliveries(v, delta);
        prop_assert_eq!(all.len(), 1 << (v & !(1 << delta)).count_ones());
        for (removed, remaining) in all {
            prop_assert_eq!(removed | remaining, v);
            prop_assert_eq!(removed & remaining, 0);
            prop_assert_eq!(remaining >> delta, 0);
        }
    }
}
