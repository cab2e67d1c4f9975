//! Record/replay backend.
//!
//! A transcript is a JSON-lines file of `{request_digest, response_text,
//! prompt_tokens, completion_tokens}`. The scripted provider answers only
//! requests whose digest appears in the transcript; anything else is a
//! [`GatewayError::TranscriptMiss`]. The recording wrapper produces such
//! transcripts from any live provider.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{request_digest, ChatProvider, ChatRequest, ChatResponse, GatewayError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Replays a previously recorded transcript, keyed by request digest.
pub struct ScriptedProvider {
    entries: HashMap<String, TranscriptEntry>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Self {
        let mut map = HashMap::with_capacity(entries.len());
        for entry in entries {
            map.insert(entry.request_digest.clone(), entry);
        }
        ScriptedProvider { entries: map }
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                GatewayError::Config(format!(
                    "bad transcript line {} in {}: {e}",
                    lineno + 1,
                    path.display()
                ))
            })?;
            entries.push(entry);
        }
        Ok(ScriptedProvider::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let digest = request_digest(req);
        match self.entries.get(&digest) {
            Some(entry) => Ok(ChatResponse {
                text: entry.response_text.clone(),
                usage: TokenUsage::new(entry.prompt_tokens, entry.completion_tokens),
            }),
            None => Err(GatewayError::TranscriptMiss { digest }),
        }
    }
}

/// Wraps any provider and captures every exchange as transcript entries.
pub struct RecordingProvider {
    inner: Arc<dyn ChatProvider>,
    recorded: Mutex<Vec<TranscriptEntry>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn ChatProvider>) -> Self {
        RecordingProvider {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.recorded.lock().expect("record lock").clone()
    }

    /// Write the captured transcript as JSON lines.
    pub fn write_transcript(&self, path: &Path) -> Result<(), GatewayError> {
        let mut file = std::fs::File::create(path)?;
        for entry in self.recorded.lock().expect("record lock").iter() {
            let line = serde_json::to_string(entry).expect("entry serializes");
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}

impl ChatProvider for RecordingProvider {
    fn name(&self) -> &'static str {
        // Transparent wrapper: the result file names the real backend.
        self.inner.name()
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let resp = self.inner.generate(req)?;
        self.recorded
            .lock()
            .expect("record lock")
            .push(TranscriptEntry {
                request_digest: request_digest(req),
                response_text: resp.text.clone(),
                prompt_tokens: resp.usage.prompt_tokens,
                completion_tokens: resp.usage.completion_tokens,
            });
        Ok(resp)
    }
}
