use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::transport::{ChatRequest, TransportError, Usage};
use super::Role;

/// Audit record of one dispatched call, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub role: Role,
    pub endpoint: String,
    pub template: String,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TransportError>,
    pub started_at: String,
    pub finished_at: String,
    pub attempts: u32,
    pub retry_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

pub trait TranscriptSink: Send + Sync {
    fn record(&self, t: &Transcript);
}

#[derive(Debug, Default)]
pub struct MemorySink {
    records: Mutex<Vec<Transcript>>,
}

impl MemorySink {
    pub fn records(&self) -> Vec<Transcript> {
        self.records.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TranscriptSink for MemorySink {
    fn record(&self, t: &Transcript) {
        self.records.lock().unwrap().push(t.clone());
    }
}

/// Appends one JSON line per transcript.
pub struct JsonlSink {
    out: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl TranscriptSink for JsonlSink {
    fn record(&self, t: &Transcript) {
        let mut out = self.out.lock().unwrap();
        let line = serde_json::to_string(t).expect("transcript serializes");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            log::error!("failed to write transcript: {e}");
        }
    }
}
