//! Uniform access to text/multimodal generation and text embedding.
//!
//! Backends implement [`ChatProvider`] / [`EmbeddingProvider`]; the
//! [`Gateway`] wraps them with token accounting and an audit trail so a
//! whole simulation run can be replayed and costed. Three backends ship
//! here: a hash-driven mock, a record/replay transcript provider, and a
//! generic HTTP chat-completion client.

mod http;
mod mock;
mod scripted;

pub use http::{
    FrameExtractor, HttpEmbedder, HttpProvider, HttpProviderConfig, ImageFileExtractor, NoDecode,
};
pub use mock::{MockEmbedder, MockProvider};
pub use scripted::{RecordingProvider, ScriptedProvider, TranscriptEntry};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case::MediaKind;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("no transcript entry for request digest {digest}")]
    TranscriptMiss { digest: String },
    #[error("provider configuration error: {0}")]
    Config(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Retry only makes sense for transient transport-level failures.
    /// A transcript miss or config error will fail identically forever.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Transport(_) | GatewayError::RateLimited(_) | GatewayError::Protocol(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            text: text.into(),
        }
    }
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
        }
    }
    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

/// Hard cap on frames attached per video.
pub const FRAME_CAP: u32 = 30;

/// Resolved media payload attached to a request: either concrete frame
/// indices into the source media, or a textual surrogate for offline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaAttachment {
    pub media_id: String,
    pub kind: MediaKind,
    pub payload: AttachmentPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttachmentPayload {
    Frames(Vec<u32>),
    Surrogate(String),
}

impl MediaAttachment {
    pub fn frames(
        media_id: &str,
        kind: MediaKind,
        indices: Vec<u32>,
    ) -> Result<Self, GatewayError> {
        if kind == MediaKind::Video && indices.len() > FRAME_CAP as usize {
            return Err(GatewayError::Config(format!(
                "video attachment {media_id:?} carries {} frame indices (cap {FRAME_CAP})",
                indices.len()
            )));
        }
        Ok(MediaAttachment {
            media_id: media_id.to_string(),
            kind,
            payload: AttachmentPayload::Frames(indices),
        })
    }

    pub fn surrogate(media_id: &str, kind: MediaKind, text: &str) -> Self {
        MediaAttachment {
            media_id: media_id.to_string(),
            kind,
            payload: AttachmentPayload::Surrogate(text.to_string()),
        }
    }
}

/// Uniform-sampling frame selection under a hard cap.
///
/// For `frame_count <= cap` every frame index is returned; otherwise the
/// `cap` indices `floor(i * frame_count / cap)` for `i in 0..cap`, which
/// are strictly increasing.
pub fn sample_frames(frame_count: u32, cap: u32) -> Vec<u32> {
    assert!(cap >= 1, "frame cap must be at least 1");
    if frame_count <= cap {
        (0..frame_count).collect()
    } else {
        (0..cap)
            .map(|i| (u64::from(i) * u64::from(frame_count) / u64::from(cap)) as u32)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Only consulted by the mock backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            max_output_tokens: 2048,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub attachments: Vec<MediaAttachment>,
    pub params: GenerationParams,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, params: GenerationParams) -> Self {
        ChatRequest {
            messages,
            attachments: Vec::new(),
            params,
        }
    }

    pub fn with_attachments(mut self, attachments: Vec<MediaAttachment>) -> Self {
        self.attachments = attachments;
        self
    }

    /// Concatenated message text, as seen by providers that ignore roles.
    pub fn flattened_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        TokenUsage {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// Text embedding with its Euclidean norm cached at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt();
        EmbeddingVector { values, norm }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }
}

/// Chat-completion backend. Implementations must be safe for concurrent
/// calls; per-request state is never shared.
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Text-embedding backend with a fixed output dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Hex SHA-256 over the canonical JSON serialization of a request. This is
/// the key scripted transcripts are matched on.
pub fn request_digest(req: &ChatRequest) -> String {
    let canonical = serde_json::to_string(req).expect("request serializes");
    text_digest(&canonical)
}

/// Hex SHA-256 of a text.
pub fn text_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in hash {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("write to string");
    }
    out
}

/// Monotone totals accumulated by a [`Gateway`] over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub chat_calls: u64,
    pub embed_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl LedgerTotals {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Default)]
struct TokenLedger {
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl TokenLedger {
    fn add_chat(&self, usage: TokenUsage) {
        self.chat_calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_tokens
            .fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(usage.completion_tokens, Ordering::Relaxed);
    }

    fn add_embed(&self) {
        self.embed_calls.fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> LedgerTotals {
        LedgerTotals {
            chat_calls: self.chat_calls.load(Ordering::Relaxed),
            embed_calls: self.embed_calls.load(Ordering::Relaxed),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

/// One generate call in the audit trail. Full texts are only retained when
/// the gateway was built with `log_full`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    /// What the call was for (template id or "chat").
    pub label: String,
    pub request_digest: String,
    pub response_digest: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
}

/// Provider pair plus run-scoped accounting. Create one gateway per case
/// (providers can be shared via `Arc`) so ledgers and audit logs stay
/// per-run.
pub struct Gateway {
    chat: Arc<dyn ChatProvider>,
    embedder: Arc<dyn EmbeddingProvider>,
    params: GenerationParams,
    ledger: TokenLedger,
    audit: Mutex<Vec<AuditEntry>>,
    log_full: bool,
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatProvider>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Gateway {
            chat,
            embedder,
            params: GenerationParams::default(),
            ledger: TokenLedger::default(),
            audit: Mutex::new(Vec::new()),
            log_full: false,
        }
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_full_audit(mut self, log_full: bool) -> Self {
        self.log_full = log_full;
        self
    }

    pub fn params(&self) -> GenerationParams {
        self.params
    }

    pub fn provider_name(&self) -> &'static str {
        self.chat.name()
    }

    pub fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.generate_labeled("chat", req)
    }

    pub fn generate_labeled(
        &self,
        label: &str,
        req: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let resp = self.chat.generate(req)?;
        self.ledger.add_chat(resp.usage);
        let mut audit = self.audit.lock().expect("audit lock");
        let seq = audit.len() as u64;
        let req_text = req.flattened_text();
        audit.push(AuditEntry {
            seq,
            label: label.to_string(),
            request_digest: request_digest(req),
            response_digest: text_digest(&resp.text),
            prompt_tokens: resp.usage.prompt_tokens,
            completion_tokens: resp.usage.completion_tokens,
            request_text: self.log_full.then_some(req_text),
            response_text: self.log_full.then(|| resp.text.clone()),
        });
        Ok(resp)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Config("embed called with no texts".into()));
        }
        let vectors = self.embedder.embed(texts)?;
        self.ledger.add_embed();
        Ok(vectors)
    }

    pub fn embedding_dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn ledger(&self) -> LedgerTotals {
        self.ledger.snapshot()
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedProvider;

    impl ChatProvider for FixedProvider {
        fn name(&self) -> &'static str {
            "fixed"
        }
        fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            let usage = if req.flattened_text().contains("second") {
                TokenUsage::new(50, 10)
            } else {
                TokenUsage::new(100, 20)
            };
            Ok(ChatResponse {
                text: "ok".into(),
                usage,
            })
        }
    }

    fn gateway() -> Gateway {
        Gateway::new(Arc::new(FixedProvider), Arc::new(MockEmbedder::new(8, 1)))
    }

    #[test]
    fn ledger_is_additive() {
        let gw = gateway();
        let req1 = ChatRequest::new(
            vec![ChatMessage::user("first")],
            GenerationParams::default(),
        );
        let req2 = ChatRequest::new(
            vec![ChatMessage::user("second")],
            GenerationParams::default(),
        );
        gw.generate(&req1).unwrap();
        gw.generate(&req2).unwrap();
        let totals = gw.ledger();
        assert_eq!(totals.chat_calls, 2);
        assert_eq!(totals.prompt_tokens, 150);
        assert_eq!(totals.completion_tokens, 30);
    }

    #[test]
    fn ledger_is_monotone() {
        let gw = gateway();
        let req = ChatRequest::new(vec![ChatMessage::user("x")], GenerationParams::default());
        let mut last = gw.ledger();
        for _ in 0..5 {
            gw.generate(&req).unwrap();
            let now = gw.ledger();
            assert!(now.chat_calls > last.chat_calls);
            assert!(now.prompt_tokens >= last.prompt_tokens);
            last = now;
        }
    }

    #[test]
    fn audit_records_digests_in_order() {
        let gw = gateway();
        let req = ChatRequest::new(vec![ChatMessage::user("x")], GenerationParams::default());
        gw.generate_labeled("stage1", &req).unwrap();
        gw.generate_labeled("stage4", &req).unwrap();
        let audit = gw.audit_log();
        assert_eq!(audit.len(), 2);
        assert_eq!(audit[0].seq, 0);
        assert_eq!(audit[0].label, "stage1");
        assert_eq!(audit[1].label, "stage4");
        assert_eq!(audit[0].request_digest, request_digest(&req));
        assert!(audit[0].request_text.is_none());
    }

    #[test]
    fn sample_frames_examples() {
        assert_eq!(sample_frames(12, 30), (0..12).collect::<Vec<_>>());
        let sampled = sample_frames(120, 30);
        assert_eq!(sampled.len(), 30);
        assert_eq!(sampled[0], 0);
        assert_eq!(sampled[1], 4);
        assert_eq!(sampled[29], 116);
    }

    #[test]
    fn sample_frames_31_over_30_is_strictly_increasing_within_bounds() {
        let sampled = sample_frames(31, 30);
        assert_eq!(sampled.len(), 30);
        assert_eq!(sampled[0], 0);
        for pair in sampled.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert!(*sampled.last().unwrap() < 31);
    }

    #[test]
    fn sample_frames_zero_count_is_empty() {
        assert!(sample_frames(0, 30).is_empty());
    }

    #[test]
    fn video_attachment_rejects_more_than_cap_frames() {
        let err = MediaAttachment::frames("v1", MediaKind::Video, (0..31).collect());
        assert!(err.is_err());
        assert!(MediaAttachment::frames("v1", MediaKind::Video, (0..30).collect()).is_ok());
    }

    #[test]
    fn request_digest_is_stable_and_content_sensitive() {
        let req1 = ChatRequest::new(vec![ChatMessage::user("a")], GenerationParams::default());
        let req2 = ChatRequest::new(vec![ChatMessage::user("a")], GenerationParams::default());
        let req3 = ChatRequest::new(vec![ChatMessage::user("b")], GenerationParams::default());
        assert_eq!(request_digest(&req1), request_digest(&req2));
        assert_ne!(request_digest(&req1), request_digest(&req3));
    }

    #[test]
    fn embed_rejects_empty_input() {
        let gw = gateway();
        assert!(gw.embed(&[]).is_err());
    }
}
