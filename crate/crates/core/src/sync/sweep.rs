use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    after_first_step, after_second_step, all_links, check_size, classify_summary, enumerate_fault_sets,
    format_input_bits, ones_mask, summarize, Algorithm, Masks, Summary, SyncError, Table1Row, MAX_SYNC_N,
};
use crate::reduction::TiePolicy;

/// Counts over a set of configurations. Tallies merge by addition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub vector_agreement: u64,
    pub five_inputs_five_agreed: u64,
    pub four_inputs_five_agreed: u64,
    pub four_inputs_no_agreement: u64,
    /// Configurations whose final vectors differ, or whose common vector
    /// fits no row.
    pub unclassifiable: u64,
    /// Configurations where at least three processes decide the same bit.
    pub at_least_three_agree: u64,
    /// Binary decision multisets, keyed `"<ones>/<zeros>/<undecided>"`.
    pub decision_profiles: BTreeMap<String, u64>,
}

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        self.total += other.total;
        self.vector_agreement += other.vector_agreement;
        self.five_inputs_five_agreed += other.five_inputs_five_agreed;
        self.four_inputs_five_agreed += other.four_inputs_five_agreed;
        self.four_inputs_no_agreement += other.four_inputs_no_agreement;
        self.unclassifiable += other.unclassifiable;
        self.at_least_three_agree += other.at_least_three_agree;
        for (k, v) in &other.decision_profiles {
            *self.decision_profiles.entry(k.clone()).or_default() += v;
        }
    }

    pub fn count(&self, row: Table1Row) -> u64 {
        match row {
            Table1Row::FiveInputsFiveAgreed => self.five_inputs_five_agreed,
            Table1Row::FourInputsFiveAgreed => self.four_inputs_five_agreed,
            Table1Row::FourInputsNoAgreement => self.four_inputs_no_agreement,
        }
    }

    /// Every configuration lands in exactly one row or in `unclassifiable`.
    pub fn is_consistent(&self) -> bool {
        self.five_inputs_five_agreed
            + self.four_inputs_five_agreed
            + self.four_inputs_no_agreement
            + self.unclassifiable
            == self.total
            && self.decision_profiles.values().sum::<u64>() == self.total
    }
}

/// Hot-loop accumulator; converted to a [`Tally`] per partition.
struct Acc {
    n: usize,
    tally: Tally,
    profiles: [[u64; MAX_SYNC_N + 1]; MAX_SYNC_N + 1],
}

impl Acc {
    fn new(n: usize) -> Self {
        Acc { n, tally: Tally::default(), profiles: [[0; MAX_SYNC_N + 1]; MAX_SYNC_N + 1] }
    }

    fn add(&mut self, s: &Summary) {
        let t = &mut self.tally;
        t.total += 1;
        t.vector_agreement += s.agreed as u64;
        match classify_summary(self.n, s) {
            Ok(Table1Row::FiveInputsFiveAgreed) => t.five_inputs_five_agreed += 1,
            Ok(Table1Row::FourInputsFiveAgreed) => t.four_inputs_five_agreed += 1,
            Ok(Table1Row::FourInputsNoAgreement) => t.four_inputs_no_agreement += 1,
            Err(_) => t.unclassifiable += 1,
        }
        t.at_least_three_agree += (s.ones >= 3 || s.zeros >= 3) as u64;
        self.profiles[s.ones as usize][s.zeros as usize] += 1;
    }

    fn finish(mut self) -> Tally {
        for (o, row) in self.profiles.iter().enumerate() {
            for (z, &c) in row.iter().enumerate() {
                if c > 0 {
                    let u = self.n - o - z;
                    self.tally.decision_profiles.insert(format!("{o}/{z}/{u}"), c);
                }
            }
        }
        self.tally
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub inputs: Vec<bool>,
    pub algorithm: Algorithm,
    pub tie: TiePolicy,
    /// Faulty links per fault set; `n - 1` by default.
    pub faulty_links: usize,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` instead of starting over.
    pub resume: bool,
    /// Run only this f1 partition.
    pub only_f1: Option<usize>,
}

impl SweepConfig {
    pub fn new(inputs: Vec<bool>, algorithm: Algorithm) -> Self {
        let k = inputs.len().saturating_sub(1);
        SweepConfig {
            inputs,
            algorithm,
            tie: TiePolicy::default(),
            faulty_links: k,
            workers: 0,
            checkpoint: None,
            resume: false,
            only_f1: None,
        }
    }

    fn params(&self) -> CheckpointParams {
        CheckpointParams {
            inputs: format_input_bits(&self.inputs),
            algorithm: self.algorithm,
            tie_value: self.tie.tie_value,
            faulty_links: self.faulty_links,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct CheckpointParams {
    inputs: String,
    algorithm: Algorithm,
    tie_value: bool,
    faulty_links: usize,
}

const CHECKPOINT_FORMAT: &str = "vecagree-sweep-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: CheckpointParams,
    f1_count: usize,
    /// Completed f1 partitions, one bit each, hex encoded little-endian.
    completed: String,
    tally: Tally,
}

struct Progress {
    done: Vec<bool>,
    tally: Tally,
}

fn encode_bitmap(done: &[bool]) -> String {
    let mut bytes = vec![0u8; done.len().div_ceil(8)];
    for (i, _) in done.iter().enumerate().filter(|(_, &d)| d) {
        bytes[i / 8] |= 1 << (i % 8);
    }
    hex::encode(bytes)
}

fn decode_bitmap(s: &str, len: usize) -> Result<Vec<bool>, SyncError> {
    let bytes = hex::decode(s).map_err(|e| SyncError::CheckpointCorrupt(format!("bitmap: {e}")))?;
    if bytes.len() != len.div_ceil(8) {
        return Err(SyncError::CheckpointCorrupt(format!("bitmap has {} bytes for {len} partitions", bytes.len())));
    }
    let out: Vec<bool> = (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    if (len..bytes.len() * 8).any(|i| bytes[i / 8] >> (i % 8) & 1 == 1) {
        return Err(SyncError::CheckpointCorrupt("bits set past the last partition".into()));
    }
    Ok(out)
}

fn load_checkpoint(path: &Path, cfg: &SweepConfig, f1_count: usize, per_f1: u64) -> Result<Progress, SyncError> {
    let text = std::fs::read_to_string(path)?;
    let cp: Checkpoint =
        serde_json::from_str(&text).map_err(|e| SyncError::CheckpointCorrupt(format!("{}: {e}", path.display())))?;
    if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
        return Err(SyncError::CheckpointCorrupt(format!("unknown format {} v{}", cp.format, cp.version)));
    }
    if cp.params != cfg.params() {
        return Err(SyncError::CheckpointMismatch(format!(
            "checkpoint has {:?}, requested {:?}",
            cp.params,
            cfg.params()
        )));
    }
    if cp.f1_count != f1_count {
        return Err(SyncError::CheckpointCorrupt(format!("{} partitions, expected {f1_count}", cp.f1_count)));
    }
    let done = decode_bitmap(&cp.completed, f1_count)?;
    let expected = done.iter().filter(|&&d| d).count() as u64 * per_f1;
    if cp.tally.total != expected || !cp.tally.is_consistent() {
        return Err(SyncError::CheckpointCorrupt(format!(
            "tally covers {} configurations, completed partitions cover {expected}",
            cp.tally.total
        )));
    }
    Ok(Progress { done, tally: cp.tally })
}

fn store_checkpoint(path: &Path, cfg: &SweepConfig, p: &Progress) -> Result<(), SyncError> {
    let cp = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        params: cfg.params(),
        f1_count: p.done.len(),
        completed: encode_bitmap(&p.done),
        tally: p.tally.clone(),
    };
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string(&cp).expect("checkpoint serializes").as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn partition(n: usize, k1: &Masks, f2s: &[Masks], ones: u8, cfg: &SweepConfig) -> Tally {
    let mut acc = Acc::new(n);
    for f2 in f2s {
        let know = after_second_step(n, k1, f2);
        acc.add(&summarize(n, &know, ones, cfg.algorithm, cfg.tie));
    }
    acc.finish()
}

/// Runs every (f1, f2) pair, or the single partition `cfg.only_f1`.
///
/// Work is split by f1; a checkpoint is written after each completed
/// partition. The tally does not depend on the worker count.
pub fn sweep(cfg: &SweepConfig) -> Result<Tally, SyncError> {
    let n = cfg.inputs.len();
    check_size(n)?;
    let sets = enumerate_fault_sets(all_links(n).len(), cfg.faulty_links)?;
    let masks: Vec<Masks> = sets.iter().map(|s| s.delivery_masks(n)).collect();
    let ones = ones_mask(&cfg.inputs);
    if let Some(i) = cfg.only_f1 {
        let f1 = masks.get(i).ok_or(SyncError::NoSuchFaultSet { index: i, count: sets.len() })?;
        return Ok(partition(n, &after_first_step(n, f1), &masks, ones, cfg));
    }
    let per_f1 = masks.len() as u64;
    let progress = match &cfg.checkpoint {
        Some(path) if cfg.resume && path.exists() => load_checkpoint(path, cfg, masks.len(), per_f1)?,
        _ => Progress { done: vec![false; masks.len()], tally: Tally::default() },
    };
    let todo: Vec<usize> = (0..masks.len()).filter(|&i| !progress.done[i]).collect();
    let progress = Mutex::new(progress);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SyncError::Io(std::io::Error::other(e.to_string())))?;
    pool.install(|| {
        todo.par_iter().try_for_each(|&i| {
            let t = partition(n, &after_first_step(n, &masks[i]), &masks, ones, cfg);
            let mut p = progress.lock().expect("no worker panics while holding the lock");
            p.tally.merge(&t);
            p.done[i] = true;
            match &cfg.checkpoint {
                Some(path) => store_checkpoint(path, cfg, &p),
                None => Ok(()),
            }
        })
    })?;
    Ok(progress.into_inner().expect("workers have finished").tally)
}

/// The tally as a two-column CSV using the Table 1 row labels.
pub fn table_csv(n: usize, faulty_links: usize, sets: u64, tally: &Tally) -> String {
    let links = n * (n - 1);
    let keep = links - faulty_links;
    let rows = [
        (format!("Combinations with {faulty_links} Faulty Links = {links}C{keep}"), sets),
        (format!("Configurations Explored = {links}C{keep} x {links}C{keep}"), tally.total),
        ("Configurations with Agreement".to_string(), tally.vector_agreement),
        (format!("From {n} Initial Inputs with {n} Agreed Processes"), tally.five_inputs_five_agreed),
        (format!("From {} Initial Inputs with {n} Agreed Processes", n - 1), tally.four_inputs_five_agreed),
        (format!("From {} Initial Inputs with No Agreement", n - 1), tally.four_inputs_no_agreement),
    ];
    let mut out = String::from("row,count\n");
    for (label, count) in rows {
        out.push_str(&format!("{label},{count}\n"));
    }
    out
}

/// Per-configuration comparison of the two algorithms over a full sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub total: u64,
    /// Configurations the two algorithms place in different rows.
    pub differing: u64,
    /// Configurations the direct algorithm leaves tied.
    pub tie_class: u64,
    /// Differing configurations outside the tie class plus tie-class
    /// configurations that do not differ.
    pub mismatches: u64,
    /// Configurations with vector agreement whose vector reduction is not
    /// unanimous for tie value 0 or 1.
    pub lift_exceptions: u64,
}

impl AlgorithmComparison {
    fn merge(mut self, o: AlgorithmComparison) -> Self {
        self.total += o.total;
        self.differing += o.differing;
        self.tie_class += o.tie_class;
        self.mismatches += o.mismatches;
        self.lift_exceptions += o.lift_exceptions;
        self
    }
}

/// Classifies every configuration under both algorithms and checks that a
/// shared vector always reduces to a shared bit.
pub fn compare_algorithms(inputs: &[bool], faulty_links: usize) -> Result<AlgorithmComparison, SyncError> {
    let n = inputs.len();
    check_size(n)?;
    let sets = enumerate_fault_sets(all_links(n).len(), faulty_links)?;
    let masks: Vec<Masks> = sets.iter().map(|s| s.delivery_masks(n)).collect();
    let ones = ones_mask(inputs);
    let unanimous = |s: &Summary| (s.ones + s.zeros) as usize == n && (s.ones == 0 || s.zeros == 0);
    Ok(masks
        .par_iter()
        .map(|f1| {
            let mut c = AlgorithmComparison::default();
            let k1 = after_first_step(n, f1);
            for f2 in &masks {
                let know = after_second_step(n, &k1, f2);
                let direct = summarize(n, &know, ones, Algorithm::Direct, TiePolicy::default());
                let lifted: Vec<Summary> = [false, true]
                    .iter()
                    .map(|&t| summarize(n, &know, ones, Algorithm::ViaVector, TiePolicy::new(t)))
                    .collect();
                let d = classify_summary(n, &direct).ok();
                let v = classify_summary(n, &lifted[0]).ok();
                let tie = d == Some(Table1Row::FourInputsNoAgreement);
                c.total += 1;
                c.differing += (d != v) as u64;
                c.tie_class += tie as u64;
                c.mismatches += ((d != v) != tie) as u64;
                if direct.agreed && !lifted.iter().all(unanimous) {
                    c.lift_exceptions += 1;
                }
            }
            c
        })
        .reduce(AlgorithmComparison::default, AlgorithmComparison::merge))
}
