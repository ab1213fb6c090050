//! Fully synchronous system with dynamic link faults.
//!
//! Every (f1, f2) pair of fault sets is one configuration: round 1 sends each
//! input with the links of f1 dropping messages, then two rounds of
//! knowledge-vector broadcasts run with the links of f2 dropping messages.

mod profile;
mod sweep;

pub use profile::{assignment_splits, drop_profile, find_input_assignment, AssignmentSplit, DropProfile};
pub use sweep::{compare_algorithms, sweep, table_csv, AlgorithmComparison, SweepConfig, Tally};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ProcessId, Value, ValueVector};
use crate::reduction::{majority_with_tie, TiePolicy};

/// Default system size for the sweep.
pub const SYNC_N: usize = 5;
/// Largest system the bitmask representation supports.
pub const MAX_SYNC_N: usize = 8;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("synchronous system size must be in 3..={MAX_SYNC_N}, got {0}")]
    InvalidSize(usize),
    #[error("a link needs distinct endpoints, got {0} -> {0}")]
    SelfLink(ProcessId),
    #[error("cannot choose {k} of {links} links")]
    TooManyLinks { k: usize, links: usize },
    #[error("fault set index {index} out of range (0..{count})")]
    NoSuchFaultSet { index: usize, count: usize },
    #[error("unclassifiable outcome: {0}")]
    UnclassifiableOutcome(String),
    #[error("checkpoint is corrupt: {0}")]
    CheckpointCorrupt(String),
    #[error("checkpoint was written with different parameters: {0}")]
    CheckpointMismatch(String),
    #[error("no input assignment reproduces the target split; {} nearest reported", nearest.len())]
    NoMatch { nearest: Vec<AssignmentSplit> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_size(n: usize) -> Result<(), SyncError> {
    if (3..=MAX_SYNC_N).contains(&n) {
        Ok(())
    } else {
        Err(SyncError::InvalidSize(n))
    }
}

/// A directed link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId {
    pub src: ProcessId,
    pub dst: ProcessId,
}

impl LinkId {
    pub fn new(src: ProcessId, dst: ProcessId) -> Result<Self, SyncError> {
        if src == dst {
            return Err(SyncError::SelfLink(src));
        }
        Ok(LinkId { src, dst })
    }

    /// Position in the `(src, dst)` ordering of [`all_links`].
    pub fn index(self, n: usize) -> usize {
        let (s, d) = (self.src.slot(), self.dst.slot());
        s * (n - 1) + if d > s { d - 1 } else { d }
    }
}

impl std::fmt::Display for LinkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

/// All `n * (n - 1)` directed links sorted by `(src, dst)`.
pub fn all_links(n: usize) -> Vec<LinkId> {
    let mut out = Vec::with_capacity(n * (n - 1));
    for s in ProcessId::all(n) {
        for d in ProcessId::all(n).filter(|&d| d != s) {
            out.push(LinkId { src: s, dst: d });
        }
    }
    out
}

/// A set of faulty links, as a bitmask over the [`all_links`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultSet(u64);

impl FaultSet {
    pub fn from_bits(bits: u64) -> Self {
        FaultSet(bits)
    }

    pub fn from_links(n: usize, links: &[LinkId]) -> Result<Self, SyncError> {
        check_size(n)?;
        Ok(FaultSet(links.iter().fold(0, |m, l| m | 1 << l.index(n))))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, n: usize, link: LinkId) -> bool {
        self.0 >> link.index(n) & 1 == 1
    }

    pub fn links(self, n: usize) -> Vec<LinkId> {
        all_links(n).into_iter().enumerate().filter(|(i, _)| self.0 >> i & 1 == 1).map(|(_, l)| l).collect()
    }

    /// Per source, the destinations its messages still reach.
    pub fn delivery_masks(self, n: usize) -> [u8; MAX_SYNC_N] {
        let mut out = [0u8; MAX_SYNC_N];
        for (i, l) in all_links(n).into_iter().enumerate() {
            if self.0 >> i & 1 == 0 {
                out[l.src.slot()] |= 1 << l.dst.slot();
            }
        }
        out
    }

    pub fn display(self, n: usize) -> String {
        let links: Vec<String> = self.links(n).iter().map(|l| l.to_string()).collect();
        format!("{{{}}}", links.join(", "))
    }
}

/// Every `k`-subset of `n_links` links in lexicographic order of link indices.
pub fn enumerate_fault_sets(n_links: usize, k: usize) -> Result<Vec<FaultSet>, SyncError> {
    if k > n_links || n_links > 64 {
        return Err(SyncError::TooManyLinks { k, links: n_links });
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(FaultSet(idx.iter().fold(0, |m, &i| m | 1 << i)));
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n_links - k) else {
            return Ok(out);
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Each process takes the strict majority of the bits it knows; a tie
    /// leaves it undecided.
    Direct,
    /// Each process decides its knowledge vector and reduces it to a bit with
    /// the tie value.
    ViaVector,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Algorithm::Direct),
            "via-vector" => Ok(Algorithm::ViaVector),
            _ => Err(format!("unknown algorithm '{s}' (expected direct or via-vector)")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Direct => "direct",
            Algorithm::ViaVector => "via-vector",
        })
    }
}

/// Outcome classes of the binary agreement rows, named for N = 5: "five"
/// means all N inputs and "four" means N - 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Row {
    FiveInputsFiveAgreed,
    FourInputsFiveAgreed,
    FourInputsNoAgreement,
}

type Masks = [u8; MAX_SYNC_N];

/// One synchronous round: every process sends its knowledge on every link
/// that delivers, receivers take the union.
fn exchange(n: usize, know: &Masks, delivers: &Masks) -> Masks {
    let mut next = *know;
    for s in 0..n {
        let k = know[s];
        let mut m = delivers[s];
        while m != 0 {
            let d = m.trailing_zeros() as usize;
            next[d] |= k;
            m &= m - 1;
        }
    }
    next
}

/// Knowledge after round 1 under `f1`: bit j of entry i means process i
/// holds process j's input.
fn after_first_step(n: usize, f1: &Masks) -> Masks {
    let mut own = [0u8; MAX_SYNC_N];
    for (i, k) in own.iter_mut().enumerate().take(n) {
        *k = 1 << i;
    }
    exchange(n, &own, f1)
}

/// Knowledge after both step-2 rounds under `f2`.
fn after_second_step(n: usize, k1: &Masks, f2: &Masks) -> Masks {
    let k2 = exchange(n, k1, f2);
    exchange(n, &k2, f2)
}

/// Final knowledge masks for one configuration.
pub fn final_knowledge(n: usize, f1: FaultSet, f2: FaultSet) -> Result<Vec<u8>, SyncError> {
    check_size(n)?;
    let k1 = after_first_step(n, &f1.delivery_masks(n));
    Ok(after_second_step(n, &k1, &f2.delivery_masks(n))[..n].to_vec())
}

/// The compact per-configuration result the sweep tallies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Summary {
    agreed: bool,
    /// Present slots of the common vector, when there is one.
    inputs: u32,
    ones: u8,
    zeros: u8,
}

fn summarize(n: usize, know: &Masks, ones_mask: u8, algorithm: Algorithm, tie: TiePolicy) -> Summary {
    let agreed = know[1..n].iter().all(|&k| k == know[0]);
    let (mut ones, mut zeros) = (0u8, 0u8);
    for &k in &know[..n] {
        let o = (k & ones_mask).count_ones();
        let z = k.count_ones() - o;
        let bit = match o.cmp(&z) {
            std::cmp::Ordering::Greater => Some(true),
            std::cmp::Ordering::Less => Some(false),
            std::cmp::Ordering::Equal => match algorithm {
                Algorithm::Direct => None,
                Algorithm::ViaVector => Some(tie.tie_value),
            },
        };
        match bit {
            Some(true) => ones += 1,
            Some(false) => zeros += 1,
            None => {}
        }
    }
    Summary { agreed, inputs: if agreed { know[0].count_ones() } else { 0 }, ones, zeros }
}

fn classify_summary(n: usize, s: &Summary) -> Result<Table1Row, SyncError> {
    if !s.agreed {
        return Err(SyncError::UnclassifiableOutcome("final vectors differ".into()));
    }
    let decided = (s.ones + s.zeros) as usize;
    let unanimous = decided == n && (s.ones == 0 || s.zeros == 0);
    match s.inputs as usize {
        i if i == n && unanimous => Ok(Table1Row::FiveInputsFiveAgreed),
        i if i == n - 1 && unanimous => Ok(Table1Row::FourInputsFiveAgreed),
        i if i == n - 1 && decided < n => Ok(Table1Row::FourInputsNoAgreement),
        i => Err(SyncError::UnclassifiableOutcome(format!("{i} inputs in the common vector"))),
    }
}

fn ones_mask(inputs: &[bool]) -> u8 {
    inputs.iter().enumerate().filter(|(_, &b)| b).fold(0, |m, (i, _)| m | 1 << i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigOutcome {
    pub f1: FaultSet,
    pub f2: FaultSet,
    pub algorithm: Algorithm,
    pub final_vectors: Vec<ValueVector>,
    pub vector_agreed: bool,
    /// Present slots of the common vector; the smallest per-process count
    /// when the vectors differ.
    pub inputs_in_vector: usize,
    pub binary_decisions: Vec<Option<bool>>,
    /// `None` when [`classify`] rejects the outcome.
    pub classification: Option<Table1Row>,
}

/// Simulates one configuration with the default tie value.
pub fn run_config(
    inputs: &[bool],
    f1: FaultSet,
    f2: FaultSet,
    algorithm: Algorithm,
) -> Result<ConfigOutcome, SyncError> {
    run_config_with(inputs, f1, f2, algorithm, TiePolicy::default())
}

pub fn run_config_with(
    inputs: &[bool],
    f1: FaultSet,
    f2: FaultSet,
    algorithm: Algorithm,
    tie: TiePolicy,
) -> Result<ConfigOutcome, SyncError> {
    let n = inputs.len();
    let know = final_knowledge(n, f1, f2)?;
    let final_vectors: Vec<ValueVector> = know
        .iter()
        .map(|&k| ValueVector::from_slots((0..n).map(|j| (k >> j & 1 == 1).then(|| Value::bit(inputs[j]))).collect()))
        .collect();
    let binary_decisions = final_vectors
        .iter()
        .map(|v| match algorithm {
            Algorithm::Direct => crate::reduction::strict_majority(v).ok().flatten(),
            Algorithm::ViaVector => majority_with_tie(v, tie).ok(),
        })
        .collect();
    let vector_agreed = final_vectors.windows(2).all(|w| w[0] == w[1]);
    let inputs_in_vector = final_vectors.iter().map(ValueVector::present_count).min().unwrap_or(0);
    let mut out = ConfigOutcome {
        f1,
        f2,
        algorithm,
        final_vectors,
        vector_agreed,
        inputs_in_vector,
        binary_decisions,
        classification: None,
    };
    out.classification = classify(&out).ok();
    Ok(out)
}

/// Assigns an outcome to its Table 1 row.
pub fn classify(outcome: &ConfigOutcome) -> Result<Table1Row, SyncError> {
    let n = outcome.final_vectors.len();
    let ones = outcome.binary_decisions.iter().filter(|d| **d == Some(true)).count() as u8;
    let zeros = outcome.binary_decisions.iter().filter(|d| **d == Some(false)).count() as u8;
    let s = Summary {
        agreed: outcome.vector_agreed,
        inputs: if outcome.vector_agreed { outcome.inputs_in_vector as u32 } else { 0 },
        ones,
        zeros,
    };
    classify_summary(n, &s)
}

/// Parses a string of `0`/`1` characters.
pub fn parse_input_bits(s: &str) -> Result<Vec<bool>, String> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(format!("'{c}' is not a bit")),
        })
        .collect()
}

pub fn format_input_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_index_matches_order() {
        for n in 3..=6 {
            for (i, l) in all_links(n).into_iter().enumerate() {
                assert_eq!(l.index(n), i);
            }
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_fault_sets(20, 4).unwrap().len(), 4845);
        assert_eq!(enumerate_fault_sets(20, 0).unwrap(), vec![FaultSet(0)]);
        assert_eq!(enumerate_fault_sets(20, 4).unwrap()[0], FaultSet(0b1111));
        assert_eq!(enumerate_fault_sets(5, 2).unwrap().len(), 10);
        assert!(enumerate_fault_sets(3, 4).is_err());
    }

    #[test]
    fn no_faults_spread_everything() {
        let out = run_config(&[true, true, false, false, true], FaultSet(0), FaultSet(0), Algorithm::Direct).unwrap();
        assert!(out.vector_agreed);
        assert_eq!(out.inputs_in_vector, 5);
        assert_eq!(out.classification, Some(Table1Row::FiveInputsFiveAgreed));
        assert!(out.binary_decisions.iter().all(|d| *d == Some(true)));
    }

    #[test]
    fn unanimous_inputs_never_tie() {
        let sets = enumerate_fault_sets(20, 4).unwrap();
        for (i, &f1) in sets.iter().enumerate().step_by(97) {
            let f2 = sets[(i * 31) % sets.len()];
            let out = run_config(&[false; 5], f1, f2, Algorithm::Direct).unwrap();
            assert!(out.binary_decisions.iter().all(|d| *d == Some(false)));
        }
    }
}
