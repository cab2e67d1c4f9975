//! The verdict precedent base: historical cases distilled into reusable
//! norms, indexed by embedding for exact cosine retrieval.
//!
//! The index is a linear scan — at training-split scale (a few thousand
//! records) exactness is cheap, and every retrieval is checkable against a
//! brute-force oracle. Construction is a closed loop: each new record's
//! reflection is conditioned on the norms of the most similar records
//! already in the base.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{DisputeCase, Side, VerdictLabel};
use crate::gateway::{EmbeddingVector, Gateway};
use crate::prompts::{bindings, call_with_schema, PromptError, TemplateId, DEFAULT_RETRIES};

#[derive(Debug, Error)]
pub enum PrecedentError {
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("the precedent base is empty")]
    EmptyBase,
    #[error("case {0:?} has no ground-truth votes")]
    Unlabeled(String),
    #[error("store corrupt at {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Cosine similarity `a.b / (|a||b|)`, in [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, PrecedentError> {
    if a.dimension() != b.dimension() {
        return Err(PrecedentError::DimensionMismatch {
            a: a.dimension(),
            b: b.dimension(),
        });
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(PrecedentError::ZeroVector);
    }
    Ok((a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

/// One historical juror's vote and rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JurorDecision {
    pub verdict: VerdictLabel,
    #[serde(default)]
    pub rationale: String,
}

/// A historical verdict record: standardized case text, the 17 juror
/// decisions and the embedding it is indexed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecedentRecord {
    pub precedent_id: String,
    pub case_text: String,
    pub juror_decisions: Vec<JurorDecision>,
    pub vector: EmbeddingVector,
}

/// The 2-4 reusable verdict norms distilled from one precedent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineSet {
    pub precedent_id: String,
    pub norms: Vec<String>,
}

/// Result of a top-1 retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub precedent: PrecedentRecord,
    pub guidelines: GuidelineSet,
    pub similarity: f64,
}

/// Fixed serialization of a case for encoding: product text, then the
/// concatenated text claims (buyer before seller), then the chat history.
pub fn standardized_case_text(case: &DisputeCase) -> String {
    let mut parts = vec![case.meta.product_text.clone()];
    for side in [Side::Buyer, Side::Seller] {
        for piece in case.evidence(side) {
            if !piece.text_claim.trim().is_empty() {
                parts.push(format!("{side}: {}", piece.text_claim.trim()));
            }
        }
    }
    for turn in &case.meta.chat_history {
        parts.push(format!("chat {}: {}", turn.role, turn.text));
    }
    parts.join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaseEntry {
    record: PrecedentRecord,
    guidelines: GuidelineSet,
}

/// Exact linear-scan index over precedent records.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecedentBase {
    dimension: usize,
    entries: Vec<BaseEntry>,
}

impl PrecedentBase {
    pub fn new(dimension: usize) -> Self {
        PrecedentBase {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn guidelines(&self) -> impl Iterator<Item = &GuidelineSet> {
        self.entries.iter().map(|e| &e.guidelines)
    }

    /// Insert or replace by precedent_id (latest wins).
    pub fn insert(
        &mut self,
        record: PrecedentRecord,
        guidelines: GuidelineSet,
    ) -> Result<(), PrecedentError> {
        if record.vector.dimension() != self.dimension {
            return Err(PrecedentError::DimensionMismatch {
                a: record.vector.dimension(),
                b: self.dimension,
            });
        }
        if record.vector.norm() == 0.0 {
            return Err(PrecedentError::ZeroVector);
        }
        let entry = BaseEntry { record, guidelines };
        match self
            .entries
            .iter_mut()
            .find(|e| e.record.precedent_id == entry.record.precedent_id)
        {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    /// Argmax-cosine precedent for a query vector; exact ties go to the
    /// smallest precedent_id.
    pub fn retrieve_by_vector(
        &self,
        query: &EmbeddingVector,
    ) -> Result<RetrievalResult, PrecedentError> {
        self.rank_by_vector(query, 1)?
            .into_iter()
            .next()
            .ok_or(PrecedentError::EmptyBase)
    }

    /// Top-k precedents by cosine, descending; ties by smallest id.
    pub fn rank_by_vector(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalResult>, PrecedentError> {
        if self.entries.is_empty() {
            return Err(PrecedentError::EmptyBase);
        }
        let mut scored: Vec<(f64, &BaseEntry)> = self
            .entries
            .iter()
            .map(|e| cosine(query, &e.record.vector).map(|sim| (sim, e)))
            .collect::<Result<_, _>>()?;
        scored.sort_by(|(sa, ea), (sb, eb)| {
            sb.partial_cmp(sa)
                .expect("cosine is finite")
                .then_with(|| ea.record.precedent_id.cmp(&eb.record.precedent_id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, e)| RetrievalResult {
                precedent: e.record.clone(),
                guidelines: e.guidelines.clone(),
                similarity,
            })
            .collect())
    }

    /// On-disk layout: `manifest.json` (records and guidelines, vectors
    /// omitted) plus `vectors.bin` — little-endian `u32` count, `u32`
    /// dimension, then count*dimension `f32` values, row-major in manifest
    /// order.
    pub fn save(&self, dir: &Path) -> Result<(), PrecedentError> {
        std::fs::create_dir_all(dir)?;
        let manifest = StoreManifest {
            dimension: self.dimension as u32,
            records: self
                .entries
                .iter()
                .map(|e| StoredRecord {
                    precedent_id: e.record.precedent_id.clone(),
                    case_text: e.record.case_text.clone(),
                    juror_decisions: e.record.juror_decisions.clone(),
                    norms: e.guidelines.norms.clone(),
                })
                .collect(),
        };
        let mut manifest_json =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        manifest_json.push('\n');
        std::fs::write(dir.join("manifest.json"), manifest_json)?;

        let mut file = std::fs::File::create(dir.join("vectors.bin"))?;
        file.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        file.write_all(&(self.dimension as u32).to_le_bytes())?;
        for entry in &self.entries {
            for value in entry.record.vector.values() {
                file.write_all(&value.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PrecedentError> {
        let manifest_path = dir.join("manifest.json");
        let manifest: StoreManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?).map_err(|e| {
                PrecedentError::Corrupt {
                    path: manifest_path.clone(),
                    message: e.to_string(),
                }
            })?;

        let vectors_path = dir.join("vectors.bin");
        let mut file = std::fs::File::open(&vectors_path)?;
        let mut header = [0u8; 8];
        file.read_exact(&mut header)?;
        let count = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
        let dimension = u32::from_le_bytes(header[4..].try_into().expect("4 bytes")) as usize;
        if count != manifest.records.len() || dimension != manifest.dimension as usize {
            return Err(PrecedentError::Corrupt {
                path: vectors_path,
                message: format!(
                    "vector file header ({count} x {dimension}) disagrees with manifest ({} x {})",
                    manifest.records.len(),
                    manifest.dimension
                ),
            });
        }
        let mut base = PrecedentBase::new(dimension);
        let mut row = vec![0u8; dimension * 4];
        for stored in manifest.records {
            file.read_exact(&mut row)?;
            let values: Vec<f32> = row
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            let guidelines = GuidelineSet {
                precedent_id: stored.precedent_id.clone(),
                norms: stored.norms,
            };
            base.insert(
                PrecedentRecord {
                    precedent_id: stored.precedent_id,
                    case_text: stored.case_text,
                    juror_decisions: stored.juror_decisions,
                    vector: EmbeddingVector::new(values),
                },
                guidelines,
            )?;
        }
        Ok(base)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    dimension: u32,
    records: Vec<StoredRecord>,
}

#[derive(Serialize, Deserialize)]
struct StoredRecord {
    precedent_id: String,
    case_text: String,
    juror_decisions: Vec<JurorDecision>,
    norms: Vec<String>,
}

/// Encode the case and return the most relevant precedent with its norms.
pub fn retrieve(
    base: &PrecedentBase,
    case: &DisputeCase,
    gateway: &Gateway,
) -> Result<RetrievalResult, PrecedentError> {
    let query = gateway.embed(&[standardized_case_text(case)])?;
    base.retrieve_by_vector(&query[0])
}

/// Material one reflection call binds: the case digest, the crowd's
/// opinions per side, and the winner.
#[derive(Debug, Clone)]
pub struct ReflectionInput {
    pub core_dispute: String,
    pub claims: String,
    pub evidence_description: String,
    pub buyer_views: String,
    pub seller_views: String,
    pub winner: VerdictLabel,
}

impl ReflectionInput {
    /// Build from a labeled case. Juror rationales are usually absent in
    /// corpus files, so views fall back to the vote counts.
    pub fn from_case(case: &DisputeCase) -> Result<(Self, Vec<JurorDecision>), PrecedentError> {
        let votes = case
            .ground_truth
            .ok_or_else(|| PrecedentError::Unlabeled(case.case_id.clone()))?;
        let claims_of = |side: Side| {
            case.evidence(side)
                .iter()
                .map(|p| p.text_claim.trim())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join(" / ")
        };
        let media_count = |side: Side| -> usize {
            case.evidence(side)
                .iter()
                .map(|p| p.media_iter().count())
                .sum()
        };
        let decisions: Vec<JurorDecision> = (0..votes.buyer_votes)
            .map(|_| JurorDecision {
                verdict: VerdictLabel::Buyer,
                rationale: String::new(),
            })
            .chain((0..votes.seller_votes).map(|_| JurorDecision {
                verdict: VerdictLabel::Seller,
                rationale: String::new(),
            }))
            .collect();
        let input = ReflectionInput {
            core_dispute: format!("Product: {}", case.meta.product_text),
            claims: format!(
                "Buyer claims: {} | Seller claims: {}",
                claims_of(Side::Buyer),
                claims_of(Side::Seller)
            ),
            evidence_description: format!(
                "buyer submitted {} piece(s) with {} media item(s); seller submitted {} piece(s) with {} media item(s)",
                case.buyer_evidence.len(),
                media_count(Side::Buyer),
                case.seller_evidence.len(),
                media_count(Side::Seller)
            ),
            buyer_views: format!("{} of 17 jurors supported the buyer", votes.buyer_votes),
            seller_views: format!("{} of 17 jurors supported the seller", votes.seller_votes),
            winner: votes.winner(),
        };
        Ok((input, decisions))
    }
}

fn rules_text(priors: &[GuidelineSet]) -> String {
    if priors.is_empty() {
        return crate::reasoning::EMPTY_MARK.to_string();
    }
    priors
        .iter()
        .flat_map(|g| g.norms.iter())
        .map(|n| format!("- {n}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Distill 2-4 verdict norms from one record, optionally conditioned on
/// the norms of similar prior records.
pub fn reflect_guidelines(
    precedent_id: &str,
    input: &ReflectionInput,
    priors: &[GuidelineSet],
    gateway: &Gateway,
) -> Result<GuidelineSet, PrecedentError> {
    let rules = rules_text(priors);
    let winner = input.winner.to_string();
    let b = bindings(&[
        ("core_dispute", input.core_dispute.as_str()),
        ("claims", input.claims.as_str()),
        ("evidence_description", input.evidence_description.as_str()),
        ("buyer_views", input.buyer_views.as_str()),
        ("seller_views", input.seller_views.as_str()),
        ("winner", winner.as_str()),
        ("rules_text", rules.as_str()),
    ]);
    let reply = call_with_schema(gateway, None, TemplateId::Reflect, &b, &[], DEFAULT_RETRIES)?;
    let norms: Vec<String> = reply.value["reflection_result"]
        .as_array()
        .expect("schema validated")
        .iter()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    Ok(GuidelineSet {
        precedent_id: precedent_id.to_string(),
        norms,
    })
}

/// Rank norms by cosine between the persona text and each norm, take the
/// top `k` (ties by norm index). Embeddings come from the same encoder as
/// retrieval, so persona and norms share one semantic space.
pub fn select_memory(
    persona_text: &str,
    guidelines: &GuidelineSet,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<String>, PrecedentError> {
    assert!(k >= 1, "memory size must be at least 1");
    if guidelines.norms.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts = vec![persona_text.to_string()];
    texts.extend(guidelines.norms.iter().cloned());
    let vectors = gateway.embed(&texts)?;
    let persona_vec = &vectors[0];
    let mut scored: Vec<(f64, usize)> = guidelines
        .norms
        .iter()
        .enumerate()
        .map(|(i, _)| cosine(persona_vec, &vectors[i + 1]).map(|sim| (sim, i)))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|(sa, ia), (sb, ib)| {
        sb.partial_cmp(sa)
            .expect("cosine is finite")
            .then(ia.cmp(ib))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(_, i)| guidelines.norms[i].clone())
        .collect())
}

/// Per-record failure during base construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildIssue {
    pub case_id: String,
    pub message: String,
}

/// How many similar records' guidelines are bound into each reflection.
pub const DEFAULT_PRIOR_GUIDELINES: usize = 3;

/// Closed-loop base construction: for each labeled case in input order,
/// retrieve the most relevant existing guidelines, bind them into the
/// reflection, distill norms, insert. Per-case failures are logged and
/// skipped.
pub fn build_base(
    cases: &[&DisputeCase],
    gateway: &Gateway,
    prior_guidelines: usize,
) -> Result<(PrecedentBase, Vec<BuildIssue>), PrecedentError> {
    let mut base = PrecedentBase::new(gateway.embedding_dimension());
    let mut issues = Vec::new();
    for case in cases {
        match build_one(&mut base, case, gateway, prior_guidelines) {
            Ok(()) => {}
            Err(e) => {
                log::warn!("skipping precedent {}: {e}", case.case_id);
                issues.push(BuildIssue {
                    case_id: case.case_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((base, issues))
}

fn build_one(
    base: &mut PrecedentBase,
    case: &DisputeCase,
    gateway: &Gateway,
    prior_guidelines: usize,
) -> Result<(), PrecedentError> {
    let (input, decisions) = ReflectionInput::from_case(case)?;
    let case_text = standardized_case_text(case);
    let vector = gateway.embed(std::slice::from_ref(&case_text))?.remove(0);
    let priors: Vec<GuidelineSet> = if base.is_empty() {
        Vec::new()
    } else {
        base.rank_by_vector(&vector, prior_guidelines)?
            .into_iter()
            .map(|r| r.guidelines)
            .collect()
    };
    let guidelines = reflect_guidelines(&case.case_id, &input, &priors, gateway)?;
    base.insert(
        PrecedentRecord {
            precedent_id: case.case_id.clone(),
            case_text,
            juror_decisions: decisions,
            vector,
        },
        guidelines,
    )
}
