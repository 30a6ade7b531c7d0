//! Line-delimited JSON event log. One self-describing object per line, tagged
//! by its `event` field. See `docs/event-log.md` for the schema.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{GenerationMetrics, UpdateMetrics};
use crate::types::{AdvantageBundle, GenerationRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStart {
        command: String,
        config: serde_json::Value,
    },
    Generation {
        episode: u64,
        instance_id: String,
        record: GenerationRecord,
    },
    Episode {
        episode: u64,
        instance_id: String,
        advantages: Vec<AdvantageBundle>,
        objective: f64,
    },
    Update(UpdateMetrics),
    Evaluation(GenerationMetrics),
    LlmExchange {
        timestamp_ms: u64,
        request_id: String,
        role: String,
        attempt: u32,
        request_bytes: usize,
        response_bytes: usize,
        status: Option<u16>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    RunEnd {
        updates: usize,
        params_fingerprint: String,
    },
}

impl Event {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

pub trait EventSink: Send + Sync {
    fn emit(&self, event: &Event);
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: &Event) {}
}

#[derive(Default)]
pub struct MemorySink {
    events: Mutex<Vec<Event>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.lock().expect("sink poisoned").clone()
    }
}

impl EventSink for MemorySink {
    fn emit(&self, event: &Event) {
        self.events.lock().expect("sink poisoned").push(event.clone());
    }
}

/// Appends one JSON line per event to a file.
pub struct JsonlSink {
    out: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn flush(&self) -> Result<()> {
        self.out.lock().expect("sink poisoned").flush()?;
        Ok(())
    }
}

impl EventSink for JsonlSink {
    fn emit(&self, event: &Event) {
        // serialization of these types cannot fail; a write error surfaces on flush
        if let Ok(line) = event.to_line() {
            let mut out = self.out.lock().expect("sink poisoned");
            let _ = writeln!(out, "{line}");
        }
    }
}

impl Drop for JsonlSink {
    fn drop(&mut self) {
        if let Ok(mut out) = self.out.lock() {
            let _ = out.flush();
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Event>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(Event::from_line)
        .collect()
}
