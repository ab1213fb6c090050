//! Binary agreement from an agreed vector of bits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ProcessId, ValueVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error("vector has no present slots")]
    EmptyVector,
    #[error("slot {slot} holds a non-binary value")]
    NotBinary { slot: usize },
}

/// The bit returned on an exact tie.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TiePolicy {
    pub tie_value: bool,
}

impl TiePolicy {
    pub fn new(tie_value: bool) -> Self {
        TiePolicy { tie_value }
    }
}

/// Counts `(zeros, ones)` over the present slots.
pub fn count_bits(v: &ValueVector) -> Result<(usize, usize), ReductionError> {
    let (mut zeros, mut ones) = (0, 0);
    for (slot, s) in v.slots().iter().enumerate() {
        if let Some(x) = s {
            match x.as_bit() {
                Some(true) => ones += 1,
                Some(false) => zeros += 1,
                None => return Err(ReductionError::NotBinary { slot }),
            }
        }
    }
    if zeros + ones == 0 {
        return Err(ReductionError::EmptyVector);
    }
    Ok((zeros, ones))
}

/// Strict majority over present slots, or `None` on a tie.
pub fn strict_majority(v: &ValueVector) -> Result<Option<bool>, ReductionError> {
    let (zeros, ones) = count_bits(v)?;
    Ok(match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => Some(true),
        std::cmp::Ordering::Less => Some(false),
        std::cmp::Ordering::Equal => None,
    })
}

/// Strict majority over present slots, with ties resolved by `policy`.
pub fn majority_with_tie(v: &ValueVector, policy: TiePolicy) -> Result<bool, ReductionError> {
    Ok(strict_majority(v)?.unwrap_or(policy.tie_value))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub bits: BTreeMap<ProcessId, bool>,
    pub unanimous: bool,
}

/// Applies [`majority_with_tie`] to every decided vector.
pub fn reduce_run(
    decisions: &BTreeMap<ProcessId, ValueVector>,
    policy: TiePolicy,
) -> Result<ReductionReport, ReductionError> {
    let mut bits = BTreeMap::new();
    for (&p, v) in decisions {
        bits.insert(p, majority_with_tie(v, policy)?);
    }
    let mut values = bits.values();
    let unanimous = match values.next() {
        Some(first) => values.all(|b| b == first),
        None => true,
    };
    Ok(ReductionReport { bits, unanimous })
}
