//! The four-stage individual verdict pipeline run by one juror on one case:
//!
//! 1. focus extraction over the transaction text,
//! 2. per-side select/perceive clue grounding (buyer first, then seller),
//! 3. adversarial analysis of both sides' pivotal clues,
//! 4. the final verdict, conditioned on persona, memory and social context.
//!
//! Stages are strictly data-dependent, so one pass is sequential; distinct
//! jurors' passes are independent.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::case::{DisputeCase, EvidencePiece, MediaKind, Side, VerdictLabel};
use crate::gateway::{
    sample_frames, text_digest, ChatMessage, Gateway, MediaAttachment, FRAME_CAP,
};
use crate::prompts::{
    as_flexible_bool, bindings, call_with_schema, call_with_schema_messages, render, PromptError,
    SchemaReply, TemplateId, DEFAULT_RETRIES,
};

/// Placeholder bound where a context slot is legitimately empty
/// (round one has no neighbors and no previous summary).
pub const EMPTY_MARK: &str = "(none)";

/// Stage-I output: the dispute focus and each side's core claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusExtraction {
    pub dispute_focus: String,
    pub buyer_claim: String,
    pub seller_claim: String,
    /// Exact JSON slice the model returned; reused verbatim downstream.
    pub raw: String,
}

/// One clue located inside a selected piece of evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFinding {
    pub media_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit_analysis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<String>,
}

/// Accumulated result of perceiving one selected evidence piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub evidence_id: String,
    pub clues: Vec<VisualFinding>,
    pub summary: String,
    pub support_strength: String,
    /// Locators of the media the clues point at, in finding order.
    pub media_refs: Vec<String>,
}

/// Stage-II state for one side. `iterations` equals the number of
/// (select, perceive) pairs executed and the number of selected ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingState {
    pub side: Side,
    pub selected_ids: Vec<String>,
    pub findings: Vec<Finding>,
    pub sufficient: bool,
    pub iterations: usize,
}

impl GroundingState {
    fn new(side: Side) -> Self {
        GroundingState {
            side,
            selected_ids: Vec::new(),
            findings: Vec::new(),
            sufficient: false,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub main_claim: String,
    pub key_evidence: Vec<String>,
    pub strengths: Vec<String>,
    pub weaknesses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictFocus {
    pub core_disagreement: String,
    pub evidence_contradictions: Vec<String>,
    pub visual_insights: String,
    pub critical_facts: Vec<String>,
}

/// Stage-III output: root cause, both positions, and the logical
/// contradictions between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub root_cause: String,
    pub buyer_position: PositionReport,
    pub seller_position: PositionReport,
    pub conflict_focus: ConflictFocus,
    pub raw: String,
}

/// Stage-IV output: one juror's vote with its traceable reasons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualVerdict {
    pub verdict: VerdictLabel,
    pub reasons: Vec<String>,
    /// Digest over the stage outputs this verdict was derived from.
    pub provenance: String,
}

/// Everything stage calls need besides the case itself.
pub struct StageContext<'a> {
    pub gateway: &'a Gateway,
    /// Persona system message attached to every call of this juror.
    pub system: Option<String>,
    pub t_max: usize,
    /// Streamlined mode: drops the chat history from stage-III bindings.
    pub lite: bool,
    pub retries: u32,
}

impl<'a> StageContext<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        StageContext {
            gateway,
            system: None,
            t_max: 3,
            lite: false,
            retries: DEFAULT_RETRIES,
        }
    }

    pub fn with_system(mut self, system: Option<String>) -> Self {
        self.system = system;
        self
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_lite(mut self, lite: bool) -> Self {
        self.lite = lite;
        self
    }

    fn system_str(&self) -> Option<&str> {
        self.system.as_deref()
    }
}

/// Stages I-III bundled; computed once per (juror, case) and cached across
/// discussion rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvcotPass {
    pub focus: FocusExtraction,
    pub buyer: GroundingState,
    pub seller: GroundingState,
    pub analysis: AnalysisReport,
}

/// Closed-form gateway call count of one full pass with no retries:
/// stage I, a select+perceive pair per grounding iteration on each side,
/// stage III, stage IV.
pub fn expected_pass_calls(buyer_iterations: usize, seller_iterations: usize) -> u64 {
    1 + 2 * (buyer_iterations as u64 + seller_iterations as u64) + 1 + 1
}

fn get_str(v: &Value, key: &str) -> String {
    v.get(key)
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn get_str_list(v: &Value, key: &str) -> Vec<String> {
    v.get(key)
        .and_then(Value::as_array)
        .map(|arr| {
            arr.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

// ---- binding builders ------------------------------------------------

fn chat_history_text(case: &DisputeCase) -> String {
    if case.meta.chat_history.is_empty() {
        return EMPTY_MARK.to_string();
    }
    case.meta
        .chat_history
        .iter()
        .map(|turn| format!("{}: {}", turn.role, turn.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn case_overview(case: &DisputeCase) -> String {
    let mut out = format!("Pre-dispute chat:\n{}", chat_history_text(case));
    if let Some(price) = &case.meta.price {
        out.push_str(&format!(
            "\nTransaction price: {} {}",
            price.amount, price.currency
        ));
    }
    out
}

fn product_info(case: &DisputeCase) -> String {
    case.meta.product_text.clone()
}

fn media_summary(piece: &EvidencePiece) -> String {
    format!(
        "{} image(s), {} video(s)",
        piece.images.len(),
        piece.videos.len()
    )
}

/// Menu line format the selection reply is resolved against. The mock
/// provider also keys on this shape.
fn menu_line(piece: &EvidencePiece) -> String {
    format!(
        "- evidence_id: {} | claim: {} | media: {}",
        piece.evidence_id,
        piece.text_claim.trim(),
        media_summary(piece)
    )
}

fn side_details(case: &DisputeCase, side: Side) -> String {
    let pieces = case.evidence(side);
    if pieces.is_empty() {
        return EMPTY_MARK.to_string();
    }
    pieces.iter().map(menu_line).collect::<Vec<_>>().join("\n")
}

fn findings_digest(state: &GroundingState) -> String {
    if state.findings.is_empty() {
        return EMPTY_MARK.to_string();
    }
    state
        .findings
        .iter()
        .map(|f| {
            format!(
                "- [{}] {} (support: {})",
                f.evidence_id, f.summary, f.support_strength
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn media_locator(media: &crate::case::MediaItem) -> String {
    media
        .uri
        .clone()
        .unwrap_or_else(|| format!("media:{}", media.media_id))
}

fn evidence_info(piece: &EvidencePiece) -> String {
    let mut lines = vec![format!("evidence_id: {}", piece.evidence_id)];
    for media in &piece.images {
        lines.push(format!(
            "- image {} ({})",
            media.media_id,
            media_locator(media)
        ));
    }
    for media in &piece.videos {
        let sampled = sample_frames(media.frame_count, FRAME_CAP).len();
        lines.push(format!(
            "- video {} ({}; {} of {} frames sampled)",
            media.media_id,
            media_locator(media),
            sampled,
            media.frame_count
        ));
    }
    lines.join("\n")
}

/// Attachments for one evidence piece: surrogate text when available,
/// sampled frame indices otherwise.
fn piece_attachments(piece: &EvidencePiece) -> Vec<MediaAttachment> {
    piece
        .media_iter()
        .map(|media| match &media.surrogate_text {
            Some(text) => MediaAttachment::surrogate(&media.media_id, media.kind, text),
            None => {
                let indices = match media.kind {
                    MediaKind::Image => vec![0],
                    MediaKind::Video => sample_frames(media.frame_count, FRAME_CAP),
                };
                MediaAttachment::frames(&media.media_id, media.kind, indices)
                    .expect("sample_frames respects the cap")
            }
        })
        .collect()
}

// ---- stage I ----------------------------------------------------------

/// Parse transaction text and both sides' claims into the dispute focus.
pub fn stage1_extract(
    case: &DisputeCase,
    ctx: &StageContext,
) -> Result<FocusExtraction, PromptError> {
    let overview = case_overview(case);
    let product = product_info(case);
    let buyer = side_details(case, Side::Buyer);
    let seller = side_details(case, Side::Seller);
    let b = bindings(&[
        ("case_overview", overview.as_str()),
        ("product_info", product.as_str()),
        ("buyer_details", buyer.as_str()),
        ("seller_details", seller.as_str()),
    ]);
    let reply = call_with_schema(
        ctx.gateway,
        ctx.system_str(),
        TemplateId::Stage1,
        &b,
        &[],
        ctx.retries,
    )?;
    Ok(FocusExtraction {
        dispute_focus: get_str(&reply.value, "dispute_focus"),
        buyer_claim: get_str(&reply.value, "buyer_core_claim"),
        seller_claim: get_str(&reply.value, "seller_core_claim"),
        raw: reply.raw,
    })
}

// ---- stage II ---------------------------------------------------------

/// Resolve a model selection against the unselected menu. Accepts the
/// exact evidence_id or the "<side> evidence N" phrasing the return
/// format suggests (1-based over the side's full list).
fn resolve_selection<'a>(
    reply: &str,
    side: Side,
    all: &'a [EvidencePiece],
    menu: &[&'a EvidencePiece],
) -> Option<&'a EvidencePiece> {
    let cleaned = reply.trim().trim_matches(|c| c == '"' || c == '\'').trim();
    if let Some(piece) = menu.iter().find(|p| p.evidence_id == cleaned) {
        return Some(piece);
    }
    let lowered = cleaned.to_ascii_lowercase();
    let prefix = format!("{} evidence ", side.as_str());
    if let Some(rest) = lowered.strip_prefix(&prefix) {
        if let Ok(n) = rest.trim().parse::<usize>() {
            if n >= 1 {
                if let Some(piece) = all.get(n - 1) {
                    return menu
                        .iter()
                        .find(|p| p.evidence_id == piece.evidence_id)
                        .copied();
                }
            }
        }
    }
    None
}

const SELECT_REPAIR: &str = "That selection does not name an available evidence_id. \
Choose exactly one evidence_id from the list you were given.";

fn select_one<'a>(
    case: &'a DisputeCase,
    side: Side,
    focus: &FocusExtraction,
    state: &GroundingState,
    menu: &[&'a EvidencePiece],
    ctx: &StageContext,
) -> Result<&'a EvidencePiece, PromptError> {
    let analyzed = findings_digest(state);
    let menu_text = menu
        .iter()
        .map(|p| menu_line(p))
        .collect::<Vec<_>>()
        .join("\n");
    let b = bindings(&[
        ("perspective", side.as_str()),
        ("stage1_output", focus.raw.as_str()),
        ("analyzed_text", analyzed.as_str()),
        ("evidence_texts", menu_text.as_str()),
    ]);

    let reply = call_with_schema(
        ctx.gateway,
        ctx.system_str(),
        TemplateId::Stage2Select,
        &b,
        &[],
        ctx.retries,
    )?;
    let all = case.evidence(side);
    let picked = get_str(&reply.value, "selected_evidence_id");
    if let Some(piece) = resolve_selection(&picked, side, all, menu) {
        return Ok(piece);
    }

    // One repair retry on the same exchange, then deterministic fallback
    // to the lowest-indexed unselected piece.
    let prompt = render(TemplateId::Stage2Select, &b)?;
    let mut messages = Vec::new();
    if let Some(sys) = ctx.system_str() {
        messages.push(ChatMessage::system(sys));
    }
    messages.push(ChatMessage::user(prompt));
    messages.push(ChatMessage::assistant(format!(
        "```json\n{{\"selected_evidence_id\": \"{picked}\"}}\n```"
    )));
    messages.push(ChatMessage::user(SELECT_REPAIR));
    if let Ok(second) = call_with_schema_messages(
        ctx.gateway,
        TemplateId::Stage2Select,
        messages,
        &[],
        ctx.retries,
    ) {
        let picked = get_str(&second.value, "selected_evidence_id");
        if let Some(piece) = resolve_selection(&picked, side, all, menu) {
            return Ok(piece);
        }
    }
    log::warn!(
        "{} selection unresolved, falling back to lowest-indexed unselected evidence",
        side
    );
    Ok(menu[0])
}

fn perceive_one(
    piece: &EvidencePiece,
    side: Side,
    focus: &FocusExtraction,
    state: &GroundingState,
    product: &str,
    ctx: &StageContext,
) -> Result<(Finding, bool), PromptError> {
    let info = evidence_info(piece);
    let previous = findings_digest(state);
    let claim = if piece.text_claim.trim().is_empty() {
        EMPTY_MARK.to_string()
    } else {
        format!(
            "{}\nPreviously grounded clues: {previous}",
            piece.text_claim.trim()
        )
    };
    let b = bindings(&[
        ("perspective", side.as_str()),
        ("stage1_output", focus.raw.as_str()),
        ("product_info", product),
        ("evidence_info", info.as_str()),
        ("evidence_texts", claim.as_str()),
    ]);
    let attachments = piece_attachments(piece);
    let reply = call_with_schema(
        ctx.gateway,
        ctx.system_str(),
        TemplateId::Stage2Perceive,
        &b,
        &attachments,
        ctx.retries,
    )?;

    let clues: Vec<VisualFinding> = reply
        .value
        .get("visual_findings")
        .and_then(Value::as_array)
        .map(|arr| {
            arr.iter()
                .map(|f| VisualFinding {
                    media_type: get_str(f, "media_type"),
                    media_index: f.get("media_index").and_then(Value::as_u64),
                    timestamp: f
                        .get("timestamp")
                        .and_then(Value::as_str)
                        .map(str::to_string),
                    description: get_str(f, "description"),
                    benefit_analysis: f
                        .get("benefit_analysis")
                        .and_then(Value::as_str)
                        .map(str::to_string),
                    importance: f
                        .get("importance")
                        .and_then(Value::as_str)
                        .map(str::to_string),
                })
                .collect()
        })
        .unwrap_or_default();

    let media: Vec<&crate::case::MediaItem> = piece.media_iter().collect();
    let media_refs: Vec<String> = clues
        .iter()
        .filter_map(|clue| clue.media_index)
        .filter_map(|idx| media.get(idx as usize).map(|m| media_locator(m)))
        .collect();

    let sufficient = reply
        .value
        .get("is_sufficient")
        .and_then(as_flexible_bool)
        .unwrap_or(false);

    Ok((
        Finding {
            evidence_id: piece.evidence_id.clone(),
            clues,
            summary: get_str(&reply.value, "evidence_summary"),
            support_strength: get_str(&reply.value, "support_strength"),
            media_refs,
        },
        sufficient,
    ))
}

/// Iterative select/perceive clue grounding for one side. Terminates on
/// the sufficiency flag, evidence exhaustion, or the `t_max` cap; already
/// selected evidence is never re-offered.
pub fn stage2_ground(
    case: &DisputeCase,
    side: Side,
    focus: &FocusExtraction,
    ctx: &StageContext,
) -> Result<GroundingState, PromptError> {
    let mut state = GroundingState::new(side);
    let all = case.evidence(side);
    let product = product_info(case);

    while state.iterations < ctx.t_max {
        let menu: Vec<&EvidencePiece> = all
            .iter()
            .filter(|p| !state.selected_ids.contains(&p.evidence_id))
            .collect();
        if menu.is_empty() {
            break;
        }
        let piece = select_one(case, side, focus, &state, &menu, ctx)?;
        state.selected_ids.push(piece.evidence_id.clone());
        let (finding, sufficient) = perceive_one(piece, side, focus, &state, &product, ctx)?;
        state.findings.push(finding);
        state.iterations += 1;
        if sufficient {
            state.sufficient = true;
            break;
        }
    }
    Ok(state)
}

// ---- stage III --------------------------------------------------------

fn grounded_media(state: &GroundingState) -> Vec<String> {
    state
        .findings
        .iter()
        .flat_map(|f| f.media_refs.iter().cloned())
        .collect()
}

fn grounded_attachments(case: &DisputeCase, state: &GroundingState) -> Vec<MediaAttachment> {
    let pieces = case.evidence(state.side);
    state
        .selected_ids
        .iter()
        .filter_map(|id| pieces.iter().find(|p| &p.evidence_id == id))
        .flat_map(piece_attachments)
        .collect()
}

fn paths_or_none(paths: &[String]) -> String {
    if paths.is_empty() {
        EMPTY_MARK.to_string()
    } else {
        paths.join("\n")
    }
}

/// Adversarial analysis over both sides' grounded clues. Buyer media are
/// serialized first, then seller media (the prompt's single-list contract).
pub fn stage3_analyze(
    case: &DisputeCase,
    focus: &FocusExtraction,
    buyer: &GroundingState,
    seller: &GroundingState,
    ctx: &StageContext,
) -> Result<AnalysisReport, PromptError> {
    let buyer_media = grounded_media(buyer);
    let seller_media = grounded_media(seller);
    let chat = if ctx.lite {
        "(omitted)".to_string()
    } else {
        chat_history_text(case)
    };
    let buyer_paths = paths_or_none(&buyer_media);
    let seller_paths = paths_or_none(&seller_media);
    let buyer_count = buyer_media.len().to_string();
    let seller_count = seller_media.len().to_string();
    let b = bindings(&[
        ("stage1_output", focus.raw.as_str()),
        ("chat_history", chat.as_str()),
        ("buyer_media_paths", buyer_paths.as_str()),
        ("seller_media_paths", seller_paths.as_str()),
        ("buyer_media_count", buyer_count.as_str()),
        ("seller_media_count", seller_count.as_str()),
    ]);

    let mut attachments = grounded_attachments(case, buyer);
    attachments.extend(grounded_attachments(case, seller));

    let reply = call_with_schema(
        ctx.gateway,
        ctx.system_str(),
        TemplateId::Stage3,
        &b,
        &attachments,
        ctx.retries,
    )?;
    Ok(parse_analysis(&reply))
}

fn parse_analysis(reply: &SchemaReply) -> AnalysisReport {
    let v = &reply.value;
    let position = |key: &str, claim_key: &str| {
        let p = v.get(key).cloned().unwrap_or(Value::Null);
        PositionReport {
            main_claim: get_str(&p, claim_key),
            key_evidence: get_str_list(&p, "key_evidence"),
            strengths: get_str_list(&p, "strengths"),
            weaknesses: get_str_list(&p, "weaknesses"),
        }
    };
    let cf = v.get("conflict_focus").cloned().unwrap_or(Value::Null);
    AnalysisReport {
        root_cause: get_str(v, "dispute_root_cause"),
        buyer_position: position("buyer_position", "main_complaint"),
        seller_position: position("seller_position", "main_defense"),
        conflict_focus: ConflictFocus {
            core_disagreement: get_str(&cf, "core_disagreement"),
            evidence_contradictions: get_str_list(&cf, "evidence_contradictions"),
            visual_insights: get_str(&cf, "visual_evidence_insights"),
            critical_facts: get_str_list(&cf, "critical_facts"),
        },
        raw: reply.raw.clone(),
    }
}

/// Run stages I-III. The result is immutable and reused for every
/// discussion round; only stage IV re-runs.
pub fn run_stages(case: &DisputeCase, ctx: &StageContext) -> Result<IvcotPass, PromptError> {
    let focus = stage1_extract(case, ctx)?;
    let buyer = stage2_ground(case, Side::Buyer, &focus, ctx)?;
    let seller = stage2_ground(case, Side::Seller, &focus, ctx)?;
    let analysis = stage3_analyze(case, &focus, &buyer, &seller, ctx)?;
    Ok(IvcotPass {
        focus,
        buyer,
        seller,
        analysis,
    })
}

// ---- stage IV ---------------------------------------------------------

/// Social and memory context bound into one stage-IV call.
pub struct JudgeContext<'a> {
    pub agent_id: &'a str,
    pub pass: &'a IvcotPass,
    /// (juror id, last verdict, last reasons) of followed jurors.
    pub neighbors: &'a [(String, VerdictLabel, Vec<String>)],
    /// Prevailing orientation from the previous round's summary.
    pub social_consensus: Option<&'a str>,
    /// Debate intensity from the previous round's summary.
    pub mean_field: Option<&'a str>,
    /// Precedent norms selected for this juror.
    pub memory: &'a [String],
}

fn neighbors_text(neighbors: &[(String, VerdictLabel, Vec<String>)]) -> String {
    if neighbors.is_empty() {
        return EMPTY_MARK.to_string();
    }
    neighbors
        .iter()
        .map(|(id, verdict, reasons)| {
            format!(
                "juror {id} voted {}: {}",
                verdict.as_str().to_lowercase(),
                reasons.join("; ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn norms_text(norms: &[String]) -> String {
    if norms.is_empty() {
        return EMPTY_MARK.to_string();
    }
    norms
        .iter()
        .map(|n| format!("- {n}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The final per-round verdict call.
pub fn stage4_judge(
    jc: &JudgeContext,
    ctx: &StageContext,
) -> Result<IndividualVerdict, PromptError> {
    let pass = jc.pass;
    let neighbors = neighbors_text(jc.neighbors);
    let norms = norms_text(jc.memory);
    let buyer_analysis = findings_digest(&pass.buyer);
    let seller_analysis = findings_digest(&pass.seller);
    let b = bindings(&[
        ("agent_id", jc.agent_id),
        (
            "social_consensus",
            jc.social_consensus.unwrap_or(EMPTY_MARK),
        ),
        ("mean_field", jc.mean_field.unwrap_or(EMPTY_MARK)),
        ("agents_and_verdicts", neighbors.as_str()),
        ("memory_norms", norms.as_str()),
        ("buyer_claim", pass.focus.buyer_claim.as_str()),
        ("seller_claim", pass.focus.seller_claim.as_str()),
        ("buyer_evidence_analysis", buyer_analysis.as_str()),
        ("seller_evidence_analysis", seller_analysis.as_str()),
        ("stage3_output", pass.analysis.raw.as_str()),
    ]);
    let reply = call_with_schema(
        ctx.gateway,
        ctx.system_str(),
        TemplateId::Stage4,
        &b,
        &[],
        ctx.retries,
    )?;
    let verdict = VerdictLabel::parse(&get_str(&reply.value, "verdict"))
        .expect("schema validation accepted the verdict word");
    let provenance = text_digest(&format!(
        "{}|{}|{}|{}",
        pass.focus.raw,
        findings_digest(&pass.buyer),
        findings_digest(&pass.seller),
        pass.analysis.raw
    ));
    Ok(IndividualVerdict {
        verdict,
        reasons: get_str_list(&reply.value, "reasoning"),
        provenance,
    })
}
