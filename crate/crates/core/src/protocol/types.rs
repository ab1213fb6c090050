use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProtocolError;

/// Smallest system size the protocol supports.
pub const MIN_PROCESSES: usize = 5;

/// Largest system size; sender sets are tracked as `u64` bitmasks.
pub const MAX_PROCESSES: usize = 64;

/// 1-based process identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(u16);

impl ProcessId {
    /// Creates an id checked against the system size `n`.
    pub fn new(index: usize, n: usize) -> Result<Self, ProtocolError> {
        if index == 0 || index > n {
            return Err(ProtocolError::InvalidProcessId { index, n });
        }
        Ok(ProcessId(index as u16))
    }

    /// Id from a 0-based slot index. Panics if `slot` does not fit.
    pub fn from_slot(slot: usize) -> Self {
        assert!(slot < MAX_PROCESSES, "slot {slot} out of range");
        ProcessId(slot as u16 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// 0-based slot index into vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn bit(self) -> u64 {
        1u64 << self.slot()
    }

    /// All ids `P1..=Pn`.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> {
        (0..n).map(ProcessId::from_slot)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// An opaque, non-empty initial value.
///
/// Values are cheap to clone. The binary specialization uses the ASCII
/// bytes `"0"` and `"1"`, so a bit string such as `11001` maps directly to
/// five inputs.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(Arc<[u8]>);

impl Value {
    pub fn new(bytes: impl AsRef<[u8]>) -> Result<Self, ProtocolError> {
        let bytes = bytes.as_ref();
        if bytes.is_empty() {
            return Err(ProtocolError::EmptyValue);
        }
        Ok(Value(Arc::from(bytes)))
    }

    pub fn bit(b: bool) -> Self {
        Value(Arc::from(if b { &b"1"[..] } else { &b"0"[..] }))
    }

    /// The bit carried by a binary value, if this is one.
    pub fn as_bit(&self) -> Option<bool> {
        match &*self.0 {
            b"0" => Some(false),
            b"1" => Some(true),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Parses a bit string like `11001` into binary values.
    pub fn parse_bits(s: &str) -> Result<Vec<Value>, ProtocolError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Value::bit(false)),
                '1' => Ok(Value::bit(true)),
                _ => Err(ProtocolError::NotABit(c)),
            })
            .collect()
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => f.write_str(s),
            Err(_) => write!(f, "0x{}", hex::encode(&self.0)),
        }
    }
}

const HEX_PREFIX: &str = "hex:";

// Text values serialize as themselves. Anything that is not valid UTF-8, or
// that would be confused with the escape prefix, is written as `hex:<bytes>`.
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(s) if !s.starts_with(HEX_PREFIX) => ser.serialize_str(s),
            _ => ser.serialize_str(&format!("{HEX_PREFIX}{}", hex::encode(&self.0))),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        let bytes = match s.strip_prefix(HEX_PREFIX) {
            Some(h) => hex::decode(h).map_err(serde::de::Error::custom)?,
            None => s.into_bytes(),
        };
        Value::new(bytes).map_err(serde::de::Error::custom)
    }
}

/// Which invariant a vector is expected to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorRole {
    /// Exactly one empty slot.
    FirstProposal,
    /// No empty slots.
    SecondProposal,
    /// At most one empty slot.
    Decision,
}

/// N slots of initial values, `None` standing for the null marker.
///
/// Slots are shared between clones and copied on write.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(Arc<Vec<Option<Value>>>);

impl ValueVector {
    pub fn empty(n: usize) -> Self {
        ValueVector(Arc::new(vec![None; n]))
    }

    pub fn from_slots(slots: Vec<Option<Value>>) -> Self {
        ValueVector(Arc::new(slots))
    }

    /// A full vector holding `values` in order.
    pub fn full(values: &[Value]) -> Self {
        ValueVector(Arc::new(values.iter().cloned().map(Some).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, p: ProcessId) -> Option<&Value> {
        self.0.get(p.slot()).and_then(|s| s.as_ref())
    }

    pub fn set(&mut self, p: ProcessId, v: Value) {
        Arc::make_mut(&mut self.0)[p.slot()] = Some(v);
    }

    pub fn slots(&self) -> &[Option<Value>] {
        &self.0
    }

    pub fn empty_count(&self) -> usize {
        self.0.iter().filter(|s| s.is_none()).count()
    }

    pub fn present_count(&self) -> usize {
        self.len() - self.empty_count()
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|s| s.is_some())
    }

    /// The first empty slot, if any.
    pub fn first_empty(&self) -> Option<ProcessId> {
        self.0.iter().position(|s| s.is_none()).map(ProcessId::from_slot)
    }

    pub fn satisfies(&self, role: VectorRole) -> bool {
        let e = self.empty_count();
        match role {
            VectorRole::FirstProposal => e == 1,
            VectorRole::SecondProposal => e == 0,
            VectorRole::Decision => e <= 1,
        }
    }

    /// Slot-wise union; fails if some slot holds two different values.
    pub fn merge(&self, other: &ValueVector) -> Result<ValueVector, ProtocolError> {
        if self.len() != other.len() {
            return Err(ProtocolError::LengthMismatch { left: self.len(), right: other.len() });
        }
        let mut out = Vec::with_capacity(self.len());
        for (i, (a, b)) in self.0.iter().zip(other.0.iter()).enumerate() {
            out.push(match (a, b) {
                (Some(x), Some(y)) if x != y => {
                    return Err(ProtocolError::ConflictingValue { originator: ProcessId::from_slot(i) })
                }
                (Some(x), _) => Some(x.clone()),
                (None, y) => y.clone(),
            });
        }
        Ok(ValueVector(Arc::new(out)))
    }
}

/// Free-function form of [`ValueVector::merge`].
pub fn merge_vectors(a: &ValueVector, b: &ValueVector) -> Result<ValueVector, ProtocolError> {
    a.merge(b)
}

impl fmt::Debug for ValueVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ValueVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match s {
                Some(v) => write!(f, "{v}")?,
                None => f.write_str("∅")?,
            }
        }
        f.write_str(")")
    }
}

/// Payload-free discriminant of [`MessageKind`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    InitialValue = 0,
    FirstProposal = 1,
    SecondProposal = 2,
    DecisionSeed = 3,
}

impl KindTag {
    pub const ALL: [KindTag; 4] =
        [KindTag::InitialValue, KindTag::FirstProposal, KindTag::SecondProposal, KindTag::DecisionSeed];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Earliest phase in which messages of this kind are handled.
    pub fn phase(self) -> Phase {
        match self {
            KindTag::InitialValue => Phase::Initial,
            KindTag::FirstProposal | KindTag::SecondProposal => Phase::Proposals,
            KindTag::DecisionSeed => Phase::Decision,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KindTag::InitialValue => "initial_value",
            KindTag::FirstProposal => "first_proposal",
            KindTag::SecondProposal => "second_proposal",
            KindTag::DecisionSeed => "decision_seed",
        }
    }
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "payload")]
pub enum MessageKind {
    InitialValue(Value),
    FirstProposal(ValueVector),
    SecondProposal(ValueVector),
    DecisionSeed(ValueVector),
}

impl MessageKind {
    pub fn tag(&self) -> KindTag {
        match self {
            MessageKind::InitialValue(_) => KindTag::InitialValue,
            MessageKind::FirstProposal(_) => KindTag::FirstProposal,
            MessageKind::SecondProposal(_) => KindTag::SecondProposal,
            MessageKind::DecisionSeed(_) => KindTag::DecisionSeed,
        }
    }

    pub fn vector(&self) -> Option<&ValueVector> {
        match self {
            MessageKind::InitialValue(_) => None,
            MessageKind::FirstProposal(v) | MessageKind::SecondProposal(v) | MessageKind::DecisionSeed(v) => Some(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Envelope {
    pub originator: ProcessId,
    pub sender: ProcessId,
    pub destination: ProcessId,
    pub round: u64,
    pub kind: MessageKind,
}

impl Envelope {
    pub fn is_direct(&self) -> bool {
        self.sender == self.originator
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{} {}", self.sender, self.destination, self.kind.tag())?;
        if !self.is_direct() {
            write!(f, " (from {})", self.originator)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Proposals,
    Decision,
    Decided,
}
