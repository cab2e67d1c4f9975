//! Generic HTTP chat-completion backend.
//!
//! Speaks the common `{model, messages[], temperature, max_tokens}` JSON
//! protocol with images inlined as base64 data URLs, which most vendors
//! accept behind one shape. The endpoint, model name and auth header come
//! from configuration; the API key is read from an environment variable,
//! never from a flag.
//!
//! Video pixel decoding sits behind the [`FrameExtractor`] boundary.
//! Offline builds ship no codecs: media that cannot be decoded falls back
//! to its surrogate text.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::{
    AttachmentPayload, ChatProvider, ChatRequest, ChatResponse, ChatRole, EmbeddingProvider,
    EmbeddingVector, GatewayError, MediaAttachment, TokenUsage,
};

/// Pluggable media-to-pixels boundary. Returns `(mime, bytes)` per frame,
/// or `None` when the media cannot be decoded here.
pub trait FrameExtractor: Send + Sync {
    fn extract(&self, attachment: &MediaAttachment) -> Option<Vec<(String, Vec<u8>)>>;
}

/// Extractor that never decodes; every attachment degrades to surrogate text.
pub struct NoDecode;

impl FrameExtractor for NoDecode {
    fn extract(&self, _attachment: &MediaAttachment) -> Option<Vec<(String, Vec<u8>)>> {
        None
    }
}

/// Reads still images straight from the filesystem (the media id is
/// expected to resolve via the recorded uri inside the surrogate payload
/// convention `file:<path>`); videos are not decoded.
pub struct ImageFileExtractor;

impl FrameExtractor for ImageFileExtractor {
    fn extract(&self, attachment: &MediaAttachment) -> Option<Vec<(String, Vec<u8>)>> {
        if attachment.kind != crate::case::MediaKind::Image {
            return None;
        }
        let AttachmentPayload::Surrogate(text) = &attachment.payload else {
            return None;
        };
        let path = text.strip_prefix("file:")?;
        let bytes = std::fs::read(path).ok()?;
        let mime = match path.rsplit('.').next() {
            Some("png") => "image/png",
            Some("gif") => "image/gif",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        Some(vec![(mime.to_string(), bytes)])
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    /// Bearer token, already resolved from the environment.
    pub api_key: Option<String>,
}

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    config: HttpProviderConfig,
    extractor: Arc<dyn FrameExtractor>,
}

const BASE64_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

fn base64_encode(data: &[u8]) -> String {
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [
            chunk[0],
            *chunk.get(1).unwrap_or(&0),
            *chunk.get(2).unwrap_or(&0),
        ];
        let n = (u32::from(b[0]) << 16) | (u32::from(b[1]) << 8) | u32::from(b[2]);
        out.push(BASE64_CHARS[(n >> 18) as usize & 63] as char);
        out.push(BASE64_CHARS[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            BASE64_CHARS[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            BASE64_CHARS[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

impl HttpProvider {
    pub fn new(
        config: HttpProviderConfig,
        extractor: Arc<dyn FrameExtractor>,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpProvider {
            client,
            config,
            extractor,
        })
    }

    fn role_str(role: ChatRole) -> &'static str {
        match role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }

    fn build_body(&self, req: &ChatRequest) -> serde_json::Value {
        let mut messages: Vec<serde_json::Value> = Vec::with_capacity(req.messages.len());
        let last_user_idx = req
            .messages
            .iter()
            .rposition(|m| m.role == ChatRole::User)
            .unwrap_or(req.messages.len().saturating_sub(1));

        for (i, msg) in req.messages.iter().enumerate() {
            if i == last_user_idx && !req.attachments.is_empty() {
                // Attachments ride on the last user turn as content parts.
                let mut parts = vec![serde_json::json!({"type": "text", "text": msg.text})];
                for att in &req.attachments {
                    match self.extractor.extract(att) {
                        Some(frames) => {
                            for (mime, bytes) in frames {
                                parts.push(serde_json::json!({
                                    "type": "image_url",
                                    "image_url": {"url": format!("data:{mime};base64,{}", base64_encode(&bytes))},
                                }));
                            }
                        }
                        None => {
                            let note = match &att.payload {
                                AttachmentPayload::Surrogate(text) => {
                                    format!("[{} {}: {}]", att.media_id, "visual summary", text)
                                }
                                AttachmentPayload::Frames(idx) => format!(
                                    "[{}: {} sampled frames, not decoded]",
                                    att.media_id,
                                    idx.len()
                                ),
                            };
                            parts.push(serde_json::json!({"type": "text", "text": note}));
                        }
                    }
                }
                messages
                    .push(serde_json::json!({"role": Self::role_str(msg.role), "content": parts}));
            } else {
                messages.push(
                    serde_json::json!({"role": Self::role_str(msg.role), "content": msg.text}),
                );
            }
        }

        serde_json::json!({
            "model": self.config.model_id,
            "messages": messages,
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_output_tokens,
        })
    }
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<CompletionChoice>,
    #[serde(default)]
    usage: Option<UsageReply>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct UsageReply {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &'static str {
        "http"
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = self.build_body(req);
        let mut last_err = GatewayError::Transport("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * u64::from(attempt)));
            }
            let mut builder = self.client.post(&self.config.endpoint_url).json(&body);
            if let Some(key) = &self.config.api_key {
                builder = builder.bearer_auth(key);
            }
            let resp = match builder.send() {
                Ok(r) => r,
                Err(e) => {
                    last_err = GatewayError::Transport(e.to_string());
                    continue;
                }
            };
            let status = resp.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last_err = GatewayError::RateLimited(format!("http status {status}"));
                continue;
            }
            if !status.is_success() {
                return Err(GatewayError::Transport(format!(
                    "http status {status}: {}",
                    resp.text().unwrap_or_default()
                )));
            }
            let reply: CompletionReply = resp
                .json()
                .map_err(|e| GatewayError::Protocol(e.to_string()))?;
            let choice = reply
                .choices
                .into_iter()
                .next()
                .ok_or_else(|| GatewayError::Protocol("empty choices".into()))?;
            let usage = reply.usage.unwrap_or_default();
            return Ok(ChatResponse {
                text: choice.message.content,
                usage: TokenUsage::new(usage.prompt_tokens, usage.completion_tokens),
            });
        }
        Err(last_err)
    }
}

/// Generic embeddings endpoint: `{model, input[]}` in,
/// `{data: [{embedding: [..]}]}` out.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    api_key: Option<String>,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(
        url: String,
        model_id: String,
        api_key: Option<String>,
        dim: usize,
        timeout_s: u64,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            url,
            model_id,
            api_key,
            dim,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingsReply {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let body = serde_json::json!({"model": self.model_id, "input": texts});
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(GatewayError::Transport(format!(
                "http status {}",
                resp.status()
            )));
        }
        let reply: EmbeddingsReply = resp
            .json()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        if reply.data.len() != texts.len() {
            return Err(GatewayError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                reply.data.len()
            )));
        }
        let vectors: Vec<EmbeddingVector> = reply
            .data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding))
            .collect();
        for v in &vectors {
            if v.dimension() != self.dim {
                return Err(GatewayError::Protocol(format!(
                    "embedding dimension {} does not match configured {}",
                    v.dimension(),
                    self.dim
                )));
            }
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base64_matches_known_vectors() {
        assert_eq!(base64_encode(b""), "");
        assert_eq!(base64_encode(b"f"), "Zg==");
        assert_eq!(base64_encode(b"fo"), "Zm8=");
        assert_eq!(base64_encode(b"foo"), "Zm9v");
        assert_eq!(base64_encode(b"foobar"), "Zm9vYmFy");
    }

    #[test]
    fn body_inlines_surrogates_when_not_decodable() {
        let provider = HttpProvider::new(
            HttpProviderConfig {
                endpoint_url: "http://localhost:1/v1/chat/completions".into(),
                model_id: "m".into(),
                timeout_s: 1,
                max_retries: 0,
                api_key: None,
            },
            Arc::new(NoDecode),
        )
        .unwrap();
        let req = ChatRequest::new(
            vec![super::super::ChatMessage::user("look at this")],
            super::super::GenerationParams::default(),
        )
        .with_attachments(vec![MediaAttachment::surrogate(
            "vid1",
            crate::case::MediaKind::Video,
            "flashing light at 2%",
        )]);
        let body = provider.build_body(&req);
        let text = body.to_string();
        assert!(text.contains("flashing light at 2%"));
        assert!(text.contains("\"temperature\":0.7"));
        assert!(text.contains("\"max_tokens\":2048"));
    }
}
