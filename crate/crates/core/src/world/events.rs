use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// ids: [task]
    Spawned,
    /// ids: [agent, task]
    Assigned,
    /// ids: [task, requesters...]
    Conflict,
    /// ids: [agent]
    Waited,
    /// ids: [agent]
    Replanned,
    /// ids: [agent, task]
    Completed,
}

/// One line of the replay log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub kind: EventKind,
    pub ids: Vec<usize>,
}

impl EventRecord {
    pub fn new(tick: u64, kind: EventKind, ids: Vec<usize>) -> Self {
        Self { tick, kind, ids }
    }
}

/// Writes events as line-delimited JSON.
pub fn write_jsonl<W: Write>(mut out: W, events: &[EventRecord]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
