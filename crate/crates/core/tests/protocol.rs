use std::collections::BTreeMap;

use proptest::prelude::*;
use vecagree_core::reduction::{count_bits, majority_with_tie, reduce_run, strict_majority, ReductionError, TiePolicy};
use vecagree_core::{
    merge_vectors, new_process, Envelope, KindTag, MessageKind, Phase, ProcessId, ProtocolError, Value, ValueVector,
    VectorRole,
};

fn p(i: usize) -> ProcessId {
    ProcessId::from_slot(i - 1)
}

fn bits(s: &str) -> ValueVector {
    ValueVector::from_slots(
        s.chars()
            .map(|c| match c {
                '0' => Some(Value::bit(false)),
                '1' => Some(Value::bit(true)),
                _ => None,
            })
            .collect(),
    )
}

/// Projections of one true input vector, so any two are mergeable.
fn projection(truth: &[u8], mask: u16) -> ValueVector {
    ValueVector::from_slots(
        truth.iter().enumerate().map(|(i, &b)| (mask >> i & 1 == 1).then(|| Value::new([b]).unwrap())).collect(),
    )
}

#[test]
fn merge_examples() {
    assert_eq!(merge_vectors(&bits("1_0__"), &bits("_1__1")).unwrap(), bits("110_1"));
    assert_eq!(merge_vectors(&bits("_____"), &bits("10101")).unwrap(), bits("10101"));
    assert!(matches!(
        merge_vectors(&bits("1____"), &bits("0____")),
        Err(ProtocolError::ConflictingValue { originator }) if originator == p(1)
    ));
    assert!(matches!(merge_vectors(&bits("1____"), &bits("1___")), Err(ProtocolError::LengthMismatch { .. })));
}

#[test]
fn vector_roles() {
    assert!(bits("11_01").satisfies(VectorRole::FirstProposal));
    assert!(!bits("11001").satisfies(VectorRole::FirstProposal));
    assert!(bits("11001").satisfies(VectorRole::SecondProposal));
    assert!(bits("11_01").satisfies(VectorRole::Decision));
    assert!(!bits("1__01").satisfies(VectorRole::Decision));
    assert_eq!(bits("11_01").first_empty(), Some(p(3)));
}

proptest! {
    #[test]
    fn merge_is_a_join(truth in prop::collection::vec(0u8..4, 5..9), a: u16, b: u16, c: u16) {
        let n = truth.len();
        let keep = (1u16 << n) - 1;
        let (x, y, z) = (projection(&truth, a & keep), projection(&truth, b & keep), projection(&truth, c & keep));
        prop_assert_eq!(x.merge(&y).unwrap(), y.merge(&x).unwrap());
        prop_assert_eq!(x.merge(&y).unwrap().merge(&z).unwrap(), x.merge(&y.merge(&z).unwrap()).unwrap());
        prop_assert_eq!(x.merge(&x).unwrap(), x.clone());
        prop_assert_eq!(x.merge(&y).unwrap(), projection(&truth, (a | b) & keep));
        prop_assert_eq!(x.merge(&ValueVector::empty(n)).unwrap(), x);
    }

    #[test]
    fn conflicting_slot_always_rejected(n in 5usize..9, slot in 0usize..5) {
        let mut a = ValueVector::empty(n);
        let mut b = ValueVector::empty(n);
        a.set(p(slot + 1), Value::bit(true));
        b.set(p(slot + 1), Value::bit(false));
        prop_assert!(a.merge(&b).is_err());
    }

    #[test]
    fn majority_is_permutation_invariant(slots in prop::collection::vec(prop::option::of(any::<bool>()), 5..12), seed: u64) {
        let v = ValueVector::from_slots(slots.iter().map(|s| s.map(Value::bit)).collect());
        let mut shuffled = slots.clone();
        let mut rng = seed;
        for i in (1..shuffled.len()).rev() {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (rng >> 33) as usize % (i + 1));
        }
        let w = ValueVector::from_slots(shuffled.iter().map(|s| s.map(Value::bit)).collect());
        prop_assert_eq!(strict_majority(&v).ok(), strict_majority(&w).ok());
        for tie in [false, true] {
            prop_assert_eq!(majority_with_tie(&v, TiePolicy::new(tie)).ok(), majority_with_tie(&w, TiePolicy::new(tie)).ok());
        }
    }

    #[test]
    fn majority_matches_counts(slots in prop::collection::vec(prop::option::of(any::<bool>()), 5..12)) {
        let v = ValueVector::from_slots(slots.iter().map(|s| s.map(Value::bit)).collect());
        let ones = slots.iter().filter(|s| **s == Some(true)).count();
        let zeros = slots.iter().filter(|s| **s == Some(false)).count();
        match strict_majority(&v) {
            Err(ReductionError::EmptyVector) => prop_assert_eq!(ones + zeros, 0),
            Ok(None) => prop_assert_eq!(ones, zeros),
            Ok(Some(b)) => prop_assert_eq!(b, ones > zeros),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

#[test]
fn majority_examples() {
    assert_eq!(strict_majority(&bits("11001")).unwrap(), Some(true));
    assert_eq!(strict_majority(&bits("1100_")).unwrap(), None);
    assert!(!majority_with_tie(&bits("1100_"), TiePolicy::new(false)).unwrap());
    assert!(majority_with_tie(&bits("1100_"), TiePolicy::new(true)).unwrap());
    assert_eq!(count_bits(&bits("1_0_0")).unwrap(), (2, 1));
    let odd = ValueVector::from_slots(vec![Some(Value::new("x").unwrap()), None, None, None, None]);
    assert_eq!(count_bits(&odd), Err(ReductionError::NotBinary { slot: 0 }));
}

#[test]
fn reduce_run_unanimity() {
    let mut d = BTreeMap::new();
    d.insert(p(1), bits("1100_"));
    d.insert(p(2), bits("1100_"));
    for tie in [false, true] {
        let r = reduce_run(&d, TiePolicy::new(tie)).unwrap();
        assert!(r.unanimous);
        assert_eq!(r.bits[&p(1)], tie);
    }
    d.insert(p(3), bits("11101"));
    assert!(!reduce_run(&d, TiePolicy::new(false)).unwrap().unanimous);
    assert!(reduce_run(&d, TiePolicy::new(true)).unwrap().unanimous);
    assert!(reduce_run(&BTreeMap::new(), TiePolicy::default()).unwrap().unanimous);
}

#[test]
fn process_sizes_and_ids() {
    assert!(matches!(new_process(p(1), 4, Value::bit(true), 0), Err(ProtocolError::InvalidSystemSize(4))));
    assert!(new_process(p(6), 5, Value::bit(true), 0).is_err());
    assert!(ProcessId::new(0, 5).is_err());
    assert!(ProcessId::new(6, 5).is_err());
    assert_eq!(ProcessId::new(5, 5).unwrap(), p(5));
}

#[test]
fn start_round_broadcasts_input() {
    let mut s = new_process(p(2), 5, Value::bit(true), 0).unwrap();
    let out = s.start_round().unwrap();
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|e| e.originator == p(2) && e.sender == p(2) && e.kind.tag() == KindTag::InitialValue));
    let mut dests: Vec<_> = out.iter().map(|e| e.destination).collect();
    dests.sort();
    assert_eq!(dests, vec![p(1), p(3), p(4), p(5)]);
    assert!(s.has_originated(KindTag::InitialValue));
    assert_eq!(s.phase(), Phase::Initial);
}

fn initial(from: usize, via: usize, to: usize, round: u64) -> Envelope {
    Envelope {
        originator: p(from),
        sender: p(via),
        destination: p(to),
        round,
        kind: MessageKind::InitialValue(Value::bit(from % 2 == 1)),
    }
}

#[test]
fn direct_receipt_is_relayed_to_the_rest() {
    let mut s = new_process(p(1), 5, Value::bit(true), 0).unwrap();
    let out = s.handle_delivery(&initial(3, 3, 1, 0)).unwrap();
    let mut dests: Vec<_> = out.iter().map(|e| e.destination).collect();
    dests.sort();
    assert_eq!(dests, vec![p(2), p(4), p(5)]);
    assert!(out.iter().all(|e| e.sender == p(1) && e.originator == p(3)));
    assert!(s.handle_delivery(&initial(3, 2, 1, 0)).unwrap().is_empty());
}

#[test]
fn proposal_after_n_minus_one_values() {
    let mut s = new_process(p(1), 5, Value::bit(true), 0).unwrap();
    s.start_round().unwrap();
    let mut sent = Vec::new();
    for o in [2, 3, 4] {
        sent.extend(s.handle_delivery(&initial(o, o, 1, 0)).unwrap());
    }
    assert_eq!(s.phase(), Phase::Proposals);
    let first = s.own_first().expect("first proposal formed");
    assert_eq!(first.first_empty(), Some(p(5)));
    assert!(first.satisfies(VectorRole::FirstProposal));
    assert_eq!(sent.iter().filter(|e| e.kind.tag() == KindTag::FirstProposal).count(), 4);
}

#[test]
fn misaddressed_and_self_envelopes_rejected() {
    let mut s = new_process(p(1), 5, Value::bit(true), 0).unwrap();
    assert!(matches!(s.handle_delivery(&initial(3, 3, 2, 0)), Err(ProtocolError::WrongDestination { .. })));
    assert!(matches!(s.handle_delivery(&initial(1, 3, 1, 0)), Err(ProtocolError::MalformedEnvelope(_))));
}

#[test]
fn stale_rounds_dropped_and_future_rounds_held() {
    let mut s = new_process(p(1), 5, Value::bit(true), 3).unwrap();
    assert!(s.handle_delivery(&initial(2, 2, 1, 2)).unwrap().is_empty());
    assert!(s.handle_delivery(&initial(2, 2, 1, 4)).unwrap().is_empty());
    assert_eq!(s.future_envelopes().len(), 1);
    assert!(s.known_values()[1].is_none());
}

proptest! {
    #[test]
    fn initial_phase_deliveries_commute(
        deliveries in prop::collection::btree_set((2usize..=5, 2usize..=7), 1..16).prop_map(|s| s.into_iter().collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let n = 7;
        let mut sorted = deliveries.clone();
        sorted.sort();
        let run = |order: &[(usize, usize)]| {
            let mut s = new_process(p(1), n, Value::bit(true), 0).unwrap();
            s.start_round().unwrap();
            for &(o, via) in order {
                s.handle_delivery(&initial(o, via, 1, 0)).unwrap();
            }
            s
        };
        let a = run(&deliveries);
        let b = run(&sorted);
        prop_assert_eq!(a.phase(), Phase::Initial);
        prop_assert_eq!(a, b);
    }
}
