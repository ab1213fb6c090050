//! Crash-tolerant vector consensus.
//!
//! - [`protocol`]: the per-process state machine.
//! - [`sim`]: an asynchronous message buffer with crash injection and schedulers.
//! - [`explorer`]: property checks, random campaigns, scripted scenarios and a
//!   bounded exhaustive search.
//! - [`sync`]: the synchronous link-fault sweep over all pairs of 4-link fault sets.
//! - [`reduction`]: binary agreement computed from an agreed vector.

pub mod digest;
pub mod explorer;
pub mod protocol;
pub mod reduction;
pub mod sim;
pub mod sync;

pub use protocol::{
    merge_vectors, new_process, BlendGate, Completion, CompletionRule, Envelope, KindTag, MessageKind, Phase,
    ProcessId, ProcessState, ProtocolError, Value, ValueVector, VectorRole,
};
