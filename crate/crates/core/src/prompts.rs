//! Prompt templates, fenced-JSON extraction and the schema-retry wrapper.
//!
//! Templates ship as versioned text assets under `assets/prompts/` with
//! `{snake_case}` placeholders. Each template that asks for JSON has a
//! matching schema id; validation checks required keys and enumerated
//! values only — extra keys from chatty models are tolerated.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, MediaAttachment};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: missing binding {name:?}")]
    MissingBinding {
        template: &'static str,
        name: String,
    },
    #[error("no parseable JSON in model output (offset {offset}): {message}")]
    Parse { offset: usize, message: String },
    #[error("schema {schema} violated: {message}")]
    Schema {
        schema: &'static str,
        message: String,
    },
    #[error("template {template}: no schema-valid reply after {attempts} calls")]
    SchemaFailure {
        template: &'static str,
        attempts: u32,
        last_raw: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The shipped template set. Schema ids mirror template ids one-to-one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    Baseline,
    Persona,
    Stage1,
    Stage2Select,
    Stage2Perceive,
    Stage3,
    Stage4,
    Summary,
    Reflect,
    Classify,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::Baseline,
        TemplateId::Persona,
        TemplateId::Stage1,
        TemplateId::Stage2Select,
        TemplateId::Stage2Perceive,
        TemplateId::Stage3,
        TemplateId::Stage4,
        TemplateId::Summary,
        TemplateId::Reflect,
        TemplateId::Classify,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Baseline => "baseline",
            TemplateId::Persona => "persona",
            TemplateId::Stage1 => "stage1",
            TemplateId::Stage2Select => "stage2_select",
            TemplateId::Stage2Perceive => "stage2_perceive",
            TemplateId::Stage3 => "stage3",
            TemplateId::Stage4 => "stage4",
            TemplateId::Summary => "summary",
            TemplateId::Reflect => "reflect",
            TemplateId::Classify => "classify",
        }
    }

    /// Template body as shipped. The template-id to file mapping is
    /// `assets/prompts/<id>.txt`.
    pub fn body(&self) -> &'static str {
        match self {
            TemplateId::Baseline => include_str!("../assets/prompts/baseline.txt"),
            TemplateId::Persona => include_str!("../assets/prompts/persona.txt"),
            TemplateId::Stage1 => include_str!("../assets/prompts/stage1.txt"),
            TemplateId::Stage2Select => include_str!("../assets/prompts/stage2_select.txt"),
            TemplateId::Stage2Perceive => include_str!("../assets/prompts/stage2_perceive.txt"),
            TemplateId::Stage3 => include_str!("../assets/prompts/stage3.txt"),
            TemplateId::Stage4 => include_str!("../assets/prompts/stage4.txt"),
            TemplateId::Summary => include_str!("../assets/prompts/summary.txt"),
            TemplateId::Reflect => include_str!("../assets/prompts/reflect.txt"),
            TemplateId::Classify => include_str!("../assets/prompts/classify.txt"),
        }
    }

    /// Placeholder names appearing in the template body, in order of first
    /// occurrence.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut seen = Vec::new();
        for cap in PLACEHOLDER.captures_iter(self.body()) {
            let name = cap.get(1).expect("group").as_str();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Whether replies to this template are validated as JSON. Classify
    /// and persona are plain text.
    pub fn has_schema(&self) -> bool {
        !matches!(self, TemplateId::Persona | TemplateId::Classify)
    }
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("valid regex"));

pub type Bindings = BTreeMap<String, String>;

/// Convenience constructor for a bindings map.
pub fn bindings(pairs: &[(&str, &str)]) -> Bindings {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Substitute every placeholder in one pass. Placeholders never recurse
/// into substituted values, so render is injective in its bindings as long
/// as the delimiter pattern does not appear in values.
pub fn render(id: TemplateId, bindings: &Bindings) -> Result<String, PromptError> {
    let body = id.body();
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for cap in PLACEHOLDER.captures_iter(body) {
        let whole = cap.get(0).expect("match");
        let name = cap.get(1).expect("group").as_str();
        let value = bindings
            .get(name)
            .ok_or_else(|| PromptError::MissingBinding {
                template: id.as_str(),
                name: name.to_string(),
            })?;
        out.push_str(&body[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&body[last..]);
    Ok(out)
}

/// Parse the first fenced ```json block; with no fence, fall back to
/// parsing the whole text.
pub fn extract_json(text: &str) -> Result<Value, PromptError> {
    extract_json_raw(text).map(|(value, _)| value)
}

/// Like [`extract_json`] but also returns the exact source slice that
/// parsed, which callers reuse verbatim in downstream prompts.
pub fn extract_json_raw(text: &str) -> Result<(Value, String), PromptError> {
    if let Some(open) = text.find("```json") {
        let body_start = open + "```json".len();
        let rest = &text[body_start..];
        let body = match rest.find("```") {
            Some(close) => &rest[..close],
            None => rest,
        };
        let trimmed = body.trim();
        return match serde_json::from_str::<Value>(trimmed) {
            Ok(v) => Ok((v, trimmed.to_string())),
            Err(e) => Err(PromptError::Parse {
                offset: body_start,
                message: e.to_string(),
            }),
        };
    }
    let trimmed = text.trim();
    match serde_json::from_str::<Value>(trimmed) {
        Ok(v) => Ok((v, trimmed.to_string())),
        Err(e) => Err(PromptError::Parse {
            offset: 0,
            message: e.to_string(),
        }),
    }
}

fn require_str(v: &Value, key: &str, schema: &'static str) -> Result<(), PromptError> {
    match v.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(()),
        Some(Value::String(_)) => Err(PromptError::Schema {
            schema,
            message: format!("key {key:?} is empty"),
        }),
        Some(_) => Err(PromptError::Schema {
            schema,
            message: format!("key {key:?} is not a string"),
        }),
        None => Err(PromptError::Schema {
            schema,
            message: format!("missing required key {key:?}"),
        }),
    }
}

fn require_string_array(
    v: &Value,
    key: &str,
    schema: &'static str,
    min: usize,
    max: Option<usize>,
) -> Result<(), PromptError> {
    let arr = v
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| PromptError::Schema {
            schema,
            message: format!("missing array key {key:?}"),
        })?;
    if arr.len() < min || max.is_some_and(|m| arr.len() > m) {
        return Err(PromptError::Schema {
            schema,
            message: format!("array {key:?} has {} items", arr.len()),
        });
    }
    if !arr
        .iter()
        .all(|x| x.as_str().is_some_and(|s| !s.trim().is_empty()))
    {
        return Err(PromptError::Schema {
            schema,
            message: format!("array {key:?} contains non-string or empty items"),
        });
    }
    Ok(())
}

fn require_object(v: &Value, key: &str, schema: &'static str) -> Result<(), PromptError> {
    if v.get(key).is_some_and(Value::is_object) {
        Ok(())
    } else {
        Err(PromptError::Schema {
            schema,
            message: format!("missing object key {key:?}"),
        })
    }
}

fn require_verdict_word(v: &Value, key: &str, schema: &'static str) -> Result<(), PromptError> {
    require_str(v, key, schema)?;
    let word = v[key].as_str().expect("checked string");
    if crate::case::VerdictLabel::parse(word).is_none() {
        return Err(PromptError::Schema {
            schema,
            message: format!("key {key:?} must name the buyer or the seller, got {word:?}"),
        });
    }
    Ok(())
}

/// Accepts both JSON booleans and the literal "true"/"false" strings the
/// return-format block shows.
pub fn as_flexible_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Required-key and enumerated-value checks for one template's reply.
pub fn validate_schema(id: TemplateId, v: &Value) -> Result<(), PromptError> {
    let schema = id.as_str();
    if !v.is_object() {
        return Err(PromptError::Schema {
            schema,
            message: "reply is not a JSON object".into(),
        });
    }
    match id {
        TemplateId::Baseline => {
            require_str(v, "Reason", schema)?;
            require_verdict_word(v, "Conclusion", schema)
        }
        TemplateId::Stage1 => {
            require_str(v, "buyer_core_claim", schema)?;
            require_str(v, "seller_core_claim", schema)?;
            require_str(v, "dispute_focus", schema)
        }
        TemplateId::Stage2Select => require_str(v, "selected_evidence_id", schema),
        TemplateId::Stage2Perceive => {
            if !v.get("visual_findings").is_some_and(Value::is_array) {
                return Err(PromptError::Schema {
                    schema,
                    message: "missing array key \"visual_findings\"".into(),
                });
            }
            require_str(v, "evidence_summary", schema)?;
            let flag = v.get("is_sufficient").ok_or_else(|| PromptError::Schema {
                schema,
                message: "missing required key \"is_sufficient\"".into(),
            })?;
            if as_flexible_bool(flag).is_none() {
                return Err(PromptError::Schema {
                    schema,
                    message: "\"is_sufficient\" must be true or false".into(),
                });
            }
            Ok(())
        }
        TemplateId::Stage3 => {
            require_str(v, "dispute_root_cause", schema)?;
            require_object(v, "buyer_position", schema)?;
            require_object(v, "seller_position", schema)?;
            require_object(v, "conflict_focus", schema)
        }
        TemplateId::Stage4 => {
            require_verdict_word(v, "verdict", schema)?;
            require_string_array(v, "reasoning", schema, 1, None)
        }
        TemplateId::Summary => {
            require_str(v, "key_arguments", schema)?;
            require_str(v, "debate_intensity", schema)?;
            require_str(v, "prevailing_orientation", schema)
        }
        TemplateId::Reflect => require_string_array(v, "reflection_result", schema, 2, Some(4)),
        TemplateId::Persona | TemplateId::Classify => Ok(()),
    }
}

/// Appended when a reply fails parsing or schema validation.
pub const REPAIR_INSTRUCTION: &str =
    "Your previous reply was not valid JSON matching the required format. Reply with only the JSON object.";

/// Default retry budget: total gateway calls per schema-checked prompt.
pub const DEFAULT_RETRIES: u32 = 3;

/// A schema-valid reply: the parsed value plus the exact JSON slice it
/// came from.
#[derive(Debug, Clone)]
pub struct SchemaReply {
    pub value: Value,
    pub raw: String,
}

/// Render, send, parse, validate; on failure append the bad reply plus a
/// repair instruction and try again, spending at most `retries` gateway
/// calls in total. Transient transport errors draw from the same budget.
pub fn call_with_schema(
    gateway: &Gateway,
    system: Option<&str>,
    id: TemplateId,
    bindings: &Bindings,
    attachments: &[MediaAttachment],
    retries: u32,
) -> Result<SchemaReply, PromptError> {
    let prompt = render(id, bindings)?;
    let mut messages = Vec::new();
    if let Some(sys) = system {
        messages.push(ChatMessage::system(sys));
    }
    messages.push(ChatMessage::user(prompt));
    call_with_schema_messages(gateway, id, messages, attachments, retries)
}

/// Same contract as [`call_with_schema`] for callers that already built
/// the message list (selection repair appends to an existing exchange).
pub fn call_with_schema_messages(
    gateway: &Gateway,
    id: TemplateId,
    mut messages: Vec<ChatMessage>,
    attachments: &[MediaAttachment],
    retries: u32,
) -> Result<SchemaReply, PromptError> {
    assert!(retries >= 1, "retry budget must allow at least one call");
    let mut attempts = 0;
    let mut last_raw = String::new();
    while attempts < retries {
        attempts += 1;
        let req = ChatRequest::new(messages.clone(), gateway.params())
            .with_attachments(attachments.to_vec());
        let resp = match gateway.generate_labeled(id.as_str(), &req) {
            Ok(r) => r,
            Err(e) if e.is_retryable() && attempts < retries => {
                log::warn!("{} call failed ({e}), retrying", id.as_str());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        last_raw = resp.text.clone();
        match extract_json_raw(&resp.text)
            .and_then(|(value, raw)| validate_schema(id, &value).map(|()| (value, raw)))
        {
            Ok((value, raw)) => return Ok(SchemaReply { value, raw }),
            Err(_) => {
                messages.push(ChatMessage::assistant(resp.text));
                messages.push(ChatMessage::user(REPAIR_INSTRUCTION));
            }
        }
    }
    Err(PromptError::SchemaFailure {
        template: id.as_str(),
        attempts,
        last_raw,
    })
}
