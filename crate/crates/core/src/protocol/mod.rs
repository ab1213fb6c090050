//! Single-process state machine of the vector consensus protocol.

mod process;
mod types;

pub use process::{BlendGate, Completion, CompletionRule, ProcessState};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("system size {0} outside supported range {MIN_PROCESSES}..={MAX_PROCESSES}")]
    InvalidSystemSize(usize),
    #[error("process index {index} out of range 1..={n}")]
    InvalidProcessId { index: usize, n: usize },
    #[error("values must be non-empty")]
    EmptyValue,
    #[error("'{0}' is not a bit")]
    NotABit(char),
    #[error("{originator} originated two different {kind} messages")]
    DuplicateOrigination { originator: ProcessId, kind: KindTag },
    #[error("conflicting values attributed to {originator}")]
    ConflictingValue { originator: ProcessId },
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{kind} from {originator} carries invalid vector {vector}")]
    InvalidPayload { originator: ProcessId, kind: KindTag, vector: String },
    #[error("envelope for {got} delivered to {expected}")]
    WrongDestination { expected: ProcessId, got: ProcessId },
    #[error("malformed envelope {0}")]
    MalformedEnvelope(String),
}

/// Creates a process in the Initial phase.
pub fn new_process(id: ProcessId, n: usize, input: Value, round: u64) -> Result<ProcessState, ProtocolError> {
    ProcessState::new(id, n, input, round)
}
