use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::types::*;
use super::ProtocolError;

/// Which completion rule ended a process's Proposals phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionRule {
    /// `N-2` equal foreign first proposals.
    EqualFirst,
    /// `N-2` foreign second proposals.
    Second,
}

/// Snapshot of how a process entered the Decision phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Completion {
    pub rule: CompletionRule,
    pub vector: ValueVector,
}

impl Completion {
    pub fn is_full(&self) -> bool {
        self.vector.is_full()
    }
}

/// When a process may apply the blend rules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendGate {
    /// Both blend rules wait until first proposals from at least `N-2`
    /// foreign originators have each arrived from `N-2` distinct senders.
    #[default]
    OriginatorQuorum,
    /// A differing first proposal triggers a blend once it has arrived from
    /// at least `N-2` distinct senders. Second proposals are not gated.
    SenderQuorum,
    /// Blend on the first differing or second proposal handled.
    Ungated,
}

impl std::str::FromStr for BlendGate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sender-quorum" => Ok(BlendGate::SenderQuorum),
            "originator-quorum" => Ok(BlendGate::OriginatorQuorum),
            "ungated" => Ok(BlendGate::Ungated),
            _ => Err(format!("unknown blend gate '{s}' (expected sender-quorum, originator-quorum or ungated)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Received {
    kind: MessageKind,
    /// Bitmask of distinct senders a copy arrived from.
    senders: u64,
    handled: bool,
}

/// One process's registers, phase and message bookkeeping.
///
/// All transitions go through [`ProcessState::start_round`] and
/// [`ProcessState::handle_delivery`]; every other method is a read-only view
/// or a rule helper that those two call.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProcessState {
    id: ProcessId,
    n: usize,
    round: u64,
    input: Value,
    phase: Phase,
    known_values: Vec<Option<Value>>,
    /// First value seen for each slot in any payload, for consistency checks.
    attributed: Vec<Option<Value>>,
    own_first: Option<ValueVector>,
    current_v: Option<ValueVector>,
    second_sent: bool,
    received: Vec<[Option<Received>; 4]>,
    deferred: VecDeque<(ProcessId, KindTag)>,
    future: Vec<Envelope>,
    output: Option<ValueVector>,
    seen_vf_seed: bool,
    completion: Option<Completion>,
    originated: [bool; 4],
    gate: BlendGate,
}

impl ProcessState {
    pub fn new(id: ProcessId, n: usize, input: Value, round: u64) -> Result<Self, ProtocolError> {
        if !(MIN_PROCESSES..=MAX_PROCESSES).contains(&n) {
            return Err(ProtocolError::InvalidSystemSize(n));
        }
        if id.get() > n {
            return Err(ProtocolError::InvalidProcessId { index: id.get(), n });
        }
        let mut known_values = vec![None; n];
        known_values[id.slot()] = Some(input.clone());
        Ok(ProcessState {
            id,
            n,
            round,
            input,
            phase: Phase::Initial,
            attributed: known_values.clone(),
            known_values,
            own_first: None,
            current_v: None,
            second_sent: false,
            received: vec![Default::default(); n],
            deferred: VecDeque::new(),
            future: Vec::new(),
            output: None,
            seen_vf_seed: false,
            completion: None,
            originated: [false; 4],
            gate: BlendGate::default(),
        })
    }

    pub fn with_gate(mut self, gate: BlendGate) -> Self {
        self.gate = gate;
        self
    }

    pub fn gate(&self) -> BlendGate {
        self.gate
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn round(&self) -> u64 {
        self.round
    }
    pub fn input(&self) -> &Value {
        &self.input
    }
    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn known_values(&self) -> &[Option<Value>] {
        &self.known_values
    }
    pub fn own_first(&self) -> Option<&ValueVector> {
        self.own_first.as_ref()
    }
    pub fn current_v(&self) -> Option<&ValueVector> {
        self.current_v.as_ref()
    }
    pub fn second_sent(&self) -> bool {
        self.second_sent
    }
    pub fn output(&self) -> Option<&ValueVector> {
        self.output.as_ref()
    }
    pub fn seen_vf_seed(&self) -> bool {
        self.seen_vf_seed
    }
    pub fn completion(&self) -> Option<&Completion> {
        self.completion.as_ref()
    }
    pub fn deferred_len(&self) -> usize {
        self.deferred.len()
    }
    /// Envelopes for later rounds, kept but never processed.
    pub fn future_envelopes(&self) -> &[Envelope] {
        &self.future
    }
    pub fn has_originated(&self, tag: KindTag) -> bool {
        self.originated[tag.index()]
    }

    /// Number of distinct senders a message from `originator` arrived from.
    pub fn sender_count(&self, originator: ProcessId, tag: KindTag) -> u32 {
        self.record(originator, tag).map_or(0, |r| r.senders.count_ones())
    }

    /// Whether a message from `originator` of kind `tag` has been handled.
    pub fn is_handled(&self, originator: ProcessId, tag: KindTag) -> bool {
        self.record(originator, tag).is_some_and(|r| r.handled)
    }

    fn record(&self, originator: ProcessId, tag: KindTag) -> Option<&Received> {
        self.received.get(originator.slot())?[tag.index()].as_ref()
    }

    fn handled_foreign(&self, tag: KindTag) -> impl Iterator<Item = (ProcessId, &MessageKind)> + '_ {
        let me = self.id;
        self.received.iter().enumerate().filter_map(move |(slot, recs)| {
            let p = ProcessId::from_slot(slot);
            match &recs[tag.index()] {
                Some(r) if r.handled && p != me => Some((p, &r.kind)),
                _ => None,
            }
        })
    }

    fn handled_count(&self, tag: KindTag) -> usize {
        self.handled_foreign(tag).count()
    }

    fn quorum(&self) -> usize {
        self.n - 2
    }

    fn envelope(&self, destination: ProcessId, kind: MessageKind) -> Envelope {
        Envelope { originator: self.id, sender: self.id, destination, round: self.round, kind }
    }

    fn originate(&mut self, kind: MessageKind, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        let tag = kind.tag();
        if self.originated[tag.index()] {
            return Err(ProtocolError::DuplicateOrigination { originator: self.id, kind: tag });
        }
        self.originated[tag.index()] = true;
        for d in ProcessId::all(self.n).filter(|&d| d != self.id) {
            out.push(self.envelope(d, kind.clone()));
        }
        Ok(())
    }

    /// Broadcasts the initial value to every other process.
    pub fn start_round(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        let mut out = Vec::with_capacity(self.n - 1);
        self.originate(MessageKind::InitialValue(self.input.clone()), &mut out)?;
        Ok(out)
    }

    /// Handles one delivered envelope and returns everything it emits.
    pub fn handle_delivery(&mut self, env: &Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        let mut out = Vec::new();
        self.handle_delivery_into(env, &mut out)?;
        Ok(out)
    }

    /// Like [`handle_delivery`](Self::handle_delivery) but appends emissions to `out`.
    pub fn handle_delivery_into(&mut self, env: &Envelope, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        if env.destination != self.id {
            return Err(ProtocolError::WrongDestination { expected: self.id, got: env.destination });
        }
        if env.originator == self.id
            || env.sender == self.id
            || env.originator.get() > self.n
            || env.sender.get() > self.n
        {
            return Err(ProtocolError::MalformedEnvelope(env.to_string()));
        }
        if env.round < self.round {
            return Ok(());
        }
        if env.round > self.round {
            self.future.push(env.clone());
            return Ok(());
        }
        if env.is_direct() {
            for d in ProcessId::all(self.n).filter(|&d| d != self.id && d != env.originator) {
                out.push(Envelope { sender: self.id, destination: d, ..env.clone() });
            }
        }
        self.record_receipt(env)?;
        self.drain(out)?;
        Ok(())
    }

    /// Hashes the part of the state that can influence future transitions.
    ///
    /// Equal behavior hashes (up to collisions) mean equal responses to every
    /// future delivery. Known and attributed values are omitted because they
    /// are functions of the recorded payloads, and sender masks only enter as
    /// a saturating count for first proposals.
    pub fn behavior_hash<H: std::hash::Hasher>(&self, h: &mut H) {
        use std::hash::Hash;
        let q = self.quorum() as u32;
        (self.id, self.phase, &self.own_first, &self.current_v, self.second_sent).hash(h);
        for (slot, recs) in self.received.iter().enumerate() {
            for (tag, rec) in KindTag::ALL.iter().zip(recs) {
                let Some(rec) = rec else { continue };
                let senders = match tag {
                    KindTag::FirstProposal => rec.senders.count_ones().min(q),
                    _ => 0,
                };
                (slot, tag.index(), &rec.kind, rec.handled, senders).hash(h);
            }
        }
        (&self.deferred, &self.future, &self.output, &self.completion, self.originated, self.gate).hash(h);
    }

    fn record_receipt(&mut self, env: &Envelope) -> Result<(), ProtocolError> {
        let tag = env.kind.tag();
        let o = env.originator;
        if let Some(rec) = &mut self.received[o.slot()][tag.index()] {
            if rec.kind != env.kind {
                return Err(match tag {
                    KindTag::InitialValue => ProtocolError::ConflictingValue { originator: o },
                    _ => ProtocolError::DuplicateOrigination { originator: o, kind: tag },
                });
            }
            rec.senders |= env.sender.bit();
            return Ok(());
        }
        self.check_payload(o, &env.kind)?;
        self.received[o.slot()][tag.index()] =
            Some(Received { kind: env.kind.clone(), senders: env.sender.bit(), handled: false });
        self.deferred.push_back((o, tag));
        Ok(())
    }

    fn check_payload(&mut self, originator: ProcessId, kind: &MessageKind) -> Result<(), ProtocolError> {
        let (role, slots): (Option<VectorRole>, Vec<(usize, &Value)>) = match kind {
            MessageKind::InitialValue(v) => (None, vec![(originator.slot(), v)]),
            MessageKind::FirstProposal(v) => (Some(VectorRole::FirstProposal), present(v)),
            MessageKind::SecondProposal(v) => (Some(VectorRole::SecondProposal), present(v)),
            MessageKind::DecisionSeed(v) => (Some(VectorRole::Decision), present(v)),
        };
        if let Some(role) = role {
            let v = kind.vector().expect("vector kinds carry a vector");
            if v.len() != self.n || !v.satisfies(role) {
                return Err(ProtocolError::InvalidPayload { originator, kind: kind.tag(), vector: v.to_string() });
            }
        }
        for (slot, value) in slots {
            match &self.attributed[slot] {
                Some(known) if known != value => {
                    return Err(ProtocolError::ConflictingValue { originator: ProcessId::from_slot(slot) })
                }
                Some(_) => {}
                None => self.attributed[slot] = Some(value.clone()),
            }
        }
        Ok(())
    }

    fn admissible(&self, originator: ProcessId, tag: KindTag) -> bool {
        if self.phase < tag.phase() {
            return false;
        }
        let prev = match tag {
            KindTag::InitialValue => return true,
            KindTag::FirstProposal => KindTag::InitialValue,
            KindTag::SecondProposal | KindTag::DecisionSeed => KindTag::FirstProposal,
        };
        self.is_handled(originator, prev)
    }

    fn drain(&mut self, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        while let Some(pos) = self.deferred.iter().position(|&(o, t)| self.admissible(o, t)) {
            let (o, t) = self.deferred.remove(pos).expect("position is in range");
            self.handle(o, t, out)?;
        }
        if self.phase >= Phase::Proposals {
            self.try_blend(out)?;
        }
        Ok(())
    }

    fn handle(&mut self, originator: ProcessId, tag: KindTag, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        let rec = self.received[originator.slot()][tag.index()].as_mut().expect("deferred entries are recorded");
        rec.handled = true;
        let kind = rec.kind.clone();
        match kind {
            MessageKind::InitialValue(v) => {
                self.known_values[originator.slot()] = Some(v);
                if self.phase == Phase::Initial && self.handled_count(KindTag::InitialValue) >= self.quorum() {
                    self.make_first_proposal(out)?;
                }
            }
            MessageKind::FirstProposal(_) | MessageKind::SecondProposal(_) => {
                self.try_complete_proposals(out)?;
                self.try_blend(out)?;
            }
            MessageKind::DecisionSeed(v) => {
                if v.is_full() {
                    self.seen_vf_seed = true;
                    if self.phase == Phase::Decision && self.current_v.as_ref().is_some_and(|c| !c.is_full()) {
                        self.current_v = Some(v);
                    }
                }
                if self.phase == Phase::Decision && self.handled_count(KindTag::DecisionSeed) >= self.quorum() {
                    self.decide();
                }
            }
        }
        Ok(())
    }

    /// Enters Proposals and broadcasts the first proposal built from the
    /// values known so far. Exactly one slot must still be unknown.
    fn make_first_proposal(&mut self, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        let v = ValueVector::from_slots(self.known_values.clone());
        if !v.satisfies(VectorRole::FirstProposal) {
            return Err(ProtocolError::InvalidPayload {
                originator: self.id,
                kind: KindTag::FirstProposal,
                vector: v.to_string(),
            });
        }
        self.phase = Phase::Proposals;
        self.own_first = Some(v.clone());
        self.current_v = Some(v.clone());
        self.originate(MessageKind::FirstProposal(v), out)
    }

    /// Completion rules 1 and 2, in that order of precedence.
    fn try_complete_proposals(&mut self, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        if self.phase != Phase::Proposals {
            return Ok(());
        }
        let q = self.quorum();
        let mut chosen = None;
        let firsts: Vec<&ValueVector> =
            self.handled_foreign(KindTag::FirstProposal).filter_map(|(_, k)| k.vector()).collect();
        for candidate in &firsts {
            if firsts.iter().filter(|v| *v == candidate).count() >= q {
                chosen = Some(((*candidate).clone(), CompletionRule::EqualFirst));
                break;
            }
        }
        if chosen.is_none() {
            let seconds: Vec<&ValueVector> =
                self.handled_foreign(KindTag::SecondProposal).filter_map(|(_, k)| k.vector()).collect();
            if seconds.len() >= q {
                chosen = Some((seconds[0].clone(), CompletionRule::Second));
            }
        }
        let Some((vector, rule)) = chosen else { return Ok(()) };
        self.phase = Phase::Decision;
        self.current_v = Some(vector.clone());
        self.completion = Some(Completion { rule, vector: vector.clone() });
        self.originate(MessageKind::DecisionSeed(vector), out)
    }

    /// Blend rules 2 and 1, subject to the configured [`BlendGate`].
    fn try_blend(&mut self, out: &mut Vec<Envelope>) -> Result<(), ProtocolError> {
        if self.second_sent || self.phase < Phase::Proposals {
            return Ok(());
        }
        let q = self.quorum() as u32;
        if self.gate == BlendGate::OriginatorQuorum {
            let ready = ProcessId::all(self.n)
                .filter(|&p| p != self.id && self.sender_count(p, KindTag::FirstProposal) >= q)
                .count();
            if ready < self.quorum() {
                return Ok(());
            }
        }
        let mut full = self.handled_foreign(KindTag::SecondProposal).find_map(|(_, k)| k.vector().cloned());
        if full.is_none() {
            let own = self.own_first.as_ref().expect("own first proposal exists in Proposals");
            let per_sender = self.gate == BlendGate::SenderQuorum;
            let other = self
                .handled_foreign(KindTag::FirstProposal)
                .filter(|(p, _)| !per_sender || self.sender_count(*p, KindTag::FirstProposal) >= q)
                .find_map(|(_, k)| k.vector().filter(|v| *v != own).cloned());
            if let Some(other) = other {
                full = Some(own.merge(&other)?);
            }
        }
        let Some(full) = full else { return Ok(()) };
        debug_assert!(full.is_full());
        self.second_sent = true;
        self.originate(MessageKind::SecondProposal(full), out)
    }

    fn decide(&mut self) {
        debug_assert!(self.output.is_none());
        let cur = self.current_v.clone().expect("current vector exists in Decision");
        self.output = Some(cur);
        self.phase = Phase::Decided;
    }
}

fn present(v: &ValueVector) -> Vec<(usize, &Value)> {
    v.slots().iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|x| (i, x))).collect()
}
