use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Choice, CrashSpec, RunResult, Sim, SimError, TraceEvent};
use crate::digest::payload_digest;
use crate::protocol::{BlendGate, KindTag, ProcessId, Value};

/// One line of an exported trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    /// `"deliver"` or `"null"`.
    pub event: String,
    pub destination: ProcessId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub originator: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<KindTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_digest: Option<String>,
}

impl From<&TraceEvent> for TraceRecord {
    fn from(ev: &TraceEvent) -> Self {
        match ev {
            TraceEvent::Null { step, destination } => TraceRecord {
                step: *step,
                event: "null".into(),
                destination: *destination,
                sender: None,
                originator: None,
                round: None,
                kind: None,
                payload_digest: None,
            },
            TraceEvent::Deliver { step, envelope } => TraceRecord {
                step: *step,
                event: "deliver".into(),
                destination: envelope.destination,
                sender: Some(envelope.sender),
                originator: Some(envelope.originator),
                round: Some(envelope.round),
                kind: Some(envelope.kind.tag()),
                payload_digest: Some(payload_digest(envelope)),
            },
        }
    }
}

pub fn write_trace_jsonl(events: &[TraceEvent], mut w: impl Write) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, &TraceRecord::from(ev))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl(r: impl BufRead) -> std::io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}

/// Re-executes a recorded trace from the initial configuration.
pub fn replay(
    n: usize,
    inputs: &[Value],
    crash: CrashSpec,
    round: u64,
    records: &[TraceRecord],
) -> Result<RunResult, SimError> {
    replay_with_gate(n, inputs, crash, round, BlendGate::default(), records)
}

/// [`replay`] for a run that used a non-default blend gate.
pub fn replay_with_gate(
    n: usize,
    inputs: &[Value],
    crash: CrashSpec,
    round: u64,
    gate: BlendGate,
    records: &[TraceRecord],
) -> Result<RunResult, SimError> {
    let mut sim = Sim::with_gate(n, inputs, crash, round, gate)?;
    for rec in records {
        let choice = if rec.event == "null" {
            Choice::Null(rec.destination)
        } else {
            let i = sim
                .buffer()
                .iter()
                .position(|p| {
                    let e = &p.env;
                    e.destination == rec.destination
                        && Some(e.sender) == rec.sender
                        && Some(e.originator) == rec.originator
                        && Some(e.round) == rec.round
                        && Some(e.kind.tag()) == rec.kind
                        && rec.payload_digest.as_deref().is_none_or(|d| d == payload_digest(e))
                })
                .ok_or_else(|| SimError::NoSuchMessage(format!("trace step {}", rec.step)))?;
            Choice::Deliver(i)
        };
        sim.deliver(choice)?;
    }
    Ok(sim.result())
}
