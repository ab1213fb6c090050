//! Canonical byte encoding and SHA-256 digests.
//!
//! Layout: round as `u64` LE, originator `u16` LE, kind tag `u8`, then the
//! payload. A value is a `u32` LE length followed by its bytes. A vector is
//! its slot count as `u16` LE, then per slot a tag byte (`0` empty, `1`
//! present) and, for present slots, the value.

use sha2::{Digest, Sha256};

use crate::protocol::{Envelope, MessageKind, Value, ValueVector};

pub fn encode_value(buf: &mut Vec<u8>, v: &Value) {
    buf.extend_from_slice(&(v.as_bytes().len() as u32).to_le_bytes());
    buf.extend_from_slice(v.as_bytes());
}

pub fn encode_vector(buf: &mut Vec<u8>, v: &ValueVector) {
    buf.extend_from_slice(&(v.len() as u16).to_le_bytes());
    for slot in v.slots() {
        match slot {
            None => buf.push(0),
            Some(x) => {
                buf.push(1);
                encode_value(buf, x);
            }
        }
    }
}

pub fn encode_kind(buf: &mut Vec<u8>, k: &MessageKind) {
    buf.push(k.tag() as u8);
    match k {
        MessageKind::InitialValue(v) => encode_value(buf, v),
        MessageKind::FirstProposal(v) | MessageKind::SecondProposal(v) | MessageKind::DecisionSeed(v) => {
            encode_vector(buf, v)
        }
    }
}

/// Encodes the message identity and payload: round, originator, kind.
pub fn encode_message(buf: &mut Vec<u8>, env: &Envelope) {
    buf.extend_from_slice(&env.round.to_le_bytes());
    buf.extend_from_slice(&(env.originator.get() as u16).to_le_bytes());
    encode_kind(buf, &env.kind);
}

/// Full envelope encoding: message followed by sender and destination.
pub fn encode_envelope(buf: &mut Vec<u8>, env: &Envelope) {
    encode_message(buf, env);
    buf.extend_from_slice(&(env.sender.get() as u16).to_le_bytes());
    buf.extend_from_slice(&(env.destination.get() as u16).to_le_bytes());
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a message payload, identical for direct and retransmitted copies.
pub fn payload_digest(env: &Envelope) -> String {
    let mut buf = Vec::new();
    encode_message(&mut buf, env);
    sha256_hex(&buf)
}
