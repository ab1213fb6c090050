use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    after_first_step, after_second_step, all_links, check_size, enumerate_fault_sets, format_input_bits, Masks,
    SyncError,
};

/// Per-slot counts of configurations whose final vectors miss that slot.
/// These depend only on the fault sets, never on the input bits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropProfile {
    pub n: usize,
    pub total: u64,
    pub vector_agreement: u64,
    /// `common[i]`: the processes agree on a vector that misses slot `i`.
    pub common: Vec<u64>,
    /// `any_process[i]`: at least one process ends without slot `i`.
    pub any_process: Vec<u64>,
}

impl DropProfile {
    fn empty(n: usize) -> Self {
        DropProfile { n, common: vec![0; n], any_process: vec![0; n], ..Default::default() }
    }

    fn merge(mut self, other: DropProfile) -> Self {
        self.total += other.total;
        self.vector_agreement += other.vector_agreement;
        for i in 0..self.n {
            self.common[i] += other.common[i];
            self.any_process[i] += other.any_process[i];
        }
        self
    }

    /// Configurations with an agreed vector of `n - 1` inputs, if every
    /// agreed vector misses at most one slot.
    pub fn common_total(&self) -> u64 {
        self.common.iter().sum()
    }
}

/// Sweeps every (f1, f2) pair of `faulty_links`-sets and records which slots
/// are missing at the end.
pub fn drop_profile(n: usize, faulty_links: usize) -> Result<DropProfile, SyncError> {
    check_size(n)?;
    let sets = enumerate_fault_sets(all_links(n).len(), faulty_links)?;
    let masks: Vec<Masks> = sets.iter().map(|s| s.delivery_masks(n)).collect();
    let full = (1u16 << n) as u8 - 1;
    Ok(masks
        .par_iter()
        .map(|f1| {
            let mut p = DropProfile::empty(n);
            let k1 = after_first_step(n, f1);
            for f2 in &masks {
                let know = after_second_step(n, &k1, f2);
                let k = &know[..n];
                p.total += 1;
                let missing_any = k.iter().fold(0u8, |m, &x| m | (!x & full));
                if k.iter().all(|&x| x == k[0]) {
                    p.vector_agreement += 1;
                    for i in (0..n).filter(|&i| k[0] >> i & 1 == 0) {
                        p.common[i] += 1;
                    }
                }
                for i in (0..n).filter(|&i| missing_any >> i & 1 == 1) {
                    p.any_process[i] += 1;
                }
            }
            p
        })
        .reduce(|| DropProfile::empty(n), DropProfile::merge))
}

/// Predicted (agreed, tie) split for one input assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentSplit {
    pub inputs: String,
    pub agreed: u64,
    pub tie: u64,
}

/// The predicted split for all `2^n` assignments over the drop counts `d`:
/// dropping slot `i` ties when the other bits split evenly.
pub fn assignment_splits(d: &[u64]) -> Vec<AssignmentSplit> {
    let n = d.len();
    (0u32..1 << n)
        .map(|a| {
            let bits: Vec<bool> = (0..n).map(|i| a >> i & 1 == 1).collect();
            let ones = bits.iter().filter(|&&b| b).count();
            let mut tie = 0;
            for (i, &di) in d.iter().enumerate() {
                let rest_ones = ones - bits[i] as usize;
                if 2 * rest_ones == n - 1 {
                    tie += di;
                }
            }
            AssignmentSplit { inputs: format_input_bits(&bits), agreed: d.iter().sum::<u64>() - tie, tie }
        })
        .collect()
}

/// Assignments whose predicted split equals `target` exactly. On failure the
/// error lists the assignments at the smallest L1 distance.
pub fn find_input_assignment(d: &[u64], target: (u64, u64)) -> Result<Vec<AssignmentSplit>, SyncError> {
    let splits = assignment_splits(d);
    let dist = |s: &AssignmentSplit| s.agreed.abs_diff(target.0) + s.tie.abs_diff(target.1);
    let hits: Vec<_> = splits.iter().filter(|s| dist(s) == 0).cloned().collect();
    if !hits.is_empty() {
        return Ok(hits);
    }
    let best = splits.iter().map(dist).min().unwrap_or(0);
    Err(SyncError::NoMatch { nearest: splits.into_iter().filter(|s| dist(s) == best).collect() })
}
