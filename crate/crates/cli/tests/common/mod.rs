//! Shared fixtures for the integration and acceptance suites: synthetic
//! cases, a scriptable scenario provider, and binary invocation helpers.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use jurysim_core::case::{
    CategoryLabel, ChatTurn, DisputeCase, EvidencePiece, GroundTruthVotes, MediaItem, Side,
    TransactionMeta,
};
use jurysim_core::gateway::{ChatProvider, ChatRequest, ChatResponse, GatewayError, TokenUsage};

pub fn synth_case(
    id: &str,
    category: (&str, &str),
    votes: (u32, u32),
    buyer_pieces: usize,
    seller_pieces: usize,
) -> DisputeCase {
    let piece = |side: &str, i: usize| EvidencePiece {
        evidence_id: format!("{side}{i}"),
        text_claim: format!("{side} claim {i} for case {id}"),
        images: vec![MediaItem::image(
            &format!("{id}_{side}img{i}"),
            None,
            Some("synthetic close-up"),
        )],
        videos: vec![],
    };
    DisputeCase {
        case_id: id.to_string(),
        meta: TransactionMeta {
            product_text: format!("synthetic product for {id}"),
            chat_history: vec![
                ChatTurn {
                    role: Side::Buyer,
                    text: "is it as described?".into(),
                },
                ChatTurn {
                    role: Side::Seller,
                    text: "yes, photos are recent".into(),
                },
            ],
            category: CategoryLabel::new(category.0, category.1),
            price: None,
        },
        buyer_evidence: (1..=buyer_pieces).map(|i| piece("b", i)).collect(),
        seller_evidence: (1..=seller_pieces).map(|i| piece("s", i)).collect(),
        ground_truth: Some(GroundTruthVotes::new(votes.0, votes.1)),
    }
}

pub fn write_corpus(dir: &Path, cases: &[DisputeCase]) {
    std::fs::create_dir_all(dir).unwrap();
    for case in cases {
        std::fs::write(
            dir.join(format!("{}.json", case.case_id)),
            case.to_canonical_json(),
        )
        .unwrap();
    }
}

/// Scriptable offline provider: verdicts keyed by (agent, round),
/// sufficiency by per-side perceive count. Rounds advance on summary
/// calls, matching the engine's call order.
pub struct ScenarioProvider {
    pub verdict_fn: Box<dyn Fn(usize, usize) -> &'static str + Send + Sync>,
    /// Perceive call number (1-based, per provider) at which grounding
    /// reports sufficiency; `None` never reports it.
    pub sufficient_at: Option<usize>,
    round: Mutex<usize>,
    perceive_calls: AtomicUsize,
    pub reflect_norms: Mutex<Vec<Vec<String>>>,
}

impl ScenarioProvider {
    pub fn new(verdict_fn: Box<dyn Fn(usize, usize) -> &'static str + Send + Sync>) -> Self {
        ScenarioProvider {
            verdict_fn,
            sufficient_at: None,
            round: Mutex::new(1),
            perceive_calls: AtomicUsize::new(0),
            reflect_norms: Mutex::new(Vec::new()),
        }
    }

    pub fn with_sufficient_at(mut self, at: usize) -> Self {
        self.sufficient_at = Some(at);
        self
    }

    fn first_menu_id(prompt: &str) -> String {
        prompt
            .lines()
            .find_map(|l| l.strip_prefix("- evidence_id: "))
            .and_then(|rest| rest.split(' ').next())
            .unwrap_or("?")
            .to_string()
    }
}

impl ChatProvider for ScenarioProvider {
    fn name(&self) -> &'static str {
        "scenario"
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let prompt = req.flattened_text();
        let text = if prompt.contains("identify the buyer's and seller's demands") {
            "```json\n{\"buyer_core_claim\": \"refund over the charging defect\", \"seller_core_claim\": \"device worked before shipping\", \"dispute_focus\": \"the charging dispute\"}\n```".to_string()
        } else if prompt.contains("Select the piece of evidence") {
            let id = Self::first_menu_id(&prompt);
            format!("```json\n{{\"selected_evidence_id\": \"{id}\", \"reason\": \"most promising visual\"}}\n```")
        } else if prompt.contains("analyzing the visual content") {
            let n = self.perceive_calls.fetch_add(1, Ordering::SeqCst) + 1;
            let sufficient = self.sufficient_at.is_some_and(|at| n >= at);
            format!(
                "```json\n{{\"visual_findings\": [{{\"media_type\": \"image\", \"media_index\": 0, \"description\": \"indicator at 2%\"}}], \"evidence_summary\": \"inspection {n}\", \"support_strength\": \"high\", \"is_sufficient\": \"{sufficient}\"}}\n```"
            )
        } else if prompt.contains("Conduct in-depth logical analysis") {
            "```json\n{\"dispute_root_cause\": \"battery defect timing\", \"buyer_position\": {\"main_complaint\": \"dead on arrival\", \"key_evidence\": [\"unboxing clip\"], \"strengths\": [\"prompt report\"], \"weaknesses\": []}, \"seller_position\": {\"main_defense\": \"tested before shipping\", \"key_evidence\": [\"test clip\"], \"strengths\": [\"documentation\"], \"weaknesses\": [\"transit gap\"]}, \"conflict_focus\": {\"core_disagreement\": \"when the defect appeared\", \"evidence_contradictions\": [\"working clip vs 2% on arrival\"], \"visual_evidence_insights\": \"indicator states differ\", \"critical_facts\": [\"first-boot battery level\"]}}\n```".to_string()
        } else if prompt.contains("final ruling") {
            let agent: usize = prompt
                .split("You are juror #")
                .nth(1)
                .and_then(|rest| rest.split('.').next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let round = *self.round.lock().unwrap();
            let verdict = (self.verdict_fn)(agent, round);
            format!(
                "```json\n{{\"verdict\": \"{verdict}\", \"reasoning\": [\"agent {agent} round {round} reason\"]}}\n```"
            )
        } else if prompt.contains("administrative secretary") {
            let mut round = self.round.lock().unwrap();
            let text = format!(
                "```json\n{{\"key_arguments\": \"arguments of round {0}\", \"debate_intensity\": \"measured r{0}\", \"prevailing_orientation\": \"orientation r{0}\"}}\n```",
                *round
            );
            *round += 1;
            text
        } else if prompt.contains("senior E-commerce dispute analyst") {
            let mut all = self.reflect_norms.lock().unwrap();
            let k = all.len();
            let norms = vec![
                format!("record {k} norm: undisclosed defects invalidate no-return clauses"),
                format!("record {k} norm: chat-history descriptions outrank listing photos"),
            ];
            let quoted: Vec<String> = norms.iter().map(|n| format!("\"{n}\"")).collect();
            all.push(norms);
            format!(
                "```json\n{{\"reflection_result\": [{}]}}\n```",
                quoted.join(", ")
            )
        } else {
            "```json\n{\"text\": \"unused\"}\n```".to_string()
        };
        let usage = TokenUsage::new((prompt.len() / 4 + 1) as u64, (text.len() / 4 + 1) as u64);
        Ok(ChatResponse { text, usage })
    }
}

pub fn jurysim_bin() -> &'static str {
    env!("CARGO_BIN_EXE_jurysim")
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliOutput {
    let output = Command::new(jurysim_bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    CliOutput {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) {
    let mut text = serde_json::to_string_pretty(value).unwrap();
    text.push('\n');
    std::fs::write(path, text).unwrap();
}

/// Byte-compare two directories of files, names and contents.
pub fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |dir: &Path| -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
    };
    let files_a = list(a);
    let files_b = list(b);
    assert_eq!(
        files_a
            .iter()
            .map(|p| p.file_name().unwrap())
            .collect::<Vec<_>>(),
        files_b
            .iter()
            .map(|p| p.file_name().unwrap())
            .collect::<Vec<_>>(),
        "directory listings differ"
    );
    for (fa, fb) in files_a.iter().zip(&files_b) {
        let ca = std::fs::read(fa).unwrap();
        let cb = std::fs::read(fb).unwrap();
        assert_eq!(ca, cb, "{} differs from {}", fa.display(), fb.display());
    }
}
