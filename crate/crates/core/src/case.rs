//! Canonical in-memory representation of dispute cases.
//!
//! A case bundles transaction metadata, the ordered multi-round evidence
//! submitted by each disputant, and (for labeled corpora) the ground-truth
//! 17-vote jury split. The JSON serialization of these types is the
//! normative on-disk case schema; see the README for a worked example.

use std::collections::BTreeSet;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::taxonomy;

/// Which disputant a piece of content belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buyer,
    Seller,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Buyer => "buyer",
            Side::Seller => "seller",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary verdict outcome. `Buyer` encodes 0, `Seller` encodes 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VerdictLabel {
    Buyer,
    Seller,
}

impl VerdictLabel {
    /// Case-insensitive parse of "buyer"/"seller".
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buyer" => Some(VerdictLabel::Buyer),
            "seller" => Some(VerdictLabel::Seller),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictLabel::Buyer => "Buyer",
            VerdictLabel::Seller => "Seller",
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One turn of the pre-dispute conversation between the disputants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatTurn {
    pub role: Side,
    pub text: String,
}

/// Price tag on the disputed transaction. The amount is kept as a decimal
/// string so files round-trip byte-identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    pub amount: String,
    /// ISO 4217 code, e.g. "CNY".
    pub currency: String,
}

/// Product-category tag: one of the five top-level categories and one of
/// the 25 subcategories of the fixed taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryLabel {
    pub top_level: String,
    pub sub: String,
}

impl CategoryLabel {
    /// Build a label, checking that `sub` belongs to `top_level` in the taxonomy.
    pub fn new(top_level: &str, sub: &str) -> Option<Self> {
        taxonomy::subcategories_of(top_level)?
            .iter()
            .find(|s| **s == sub)
            .map(|_| CategoryLabel {
                top_level: top_level.to_string(),
                sub: sub.to_string(),
            })
    }

    /// Resolve a bare subcategory name into a full label.
    pub fn from_sub(sub: &str) -> Option<Self> {
        taxonomy::top_level_of(sub).map(|top| CategoryLabel {
            top_level: top.to_string(),
            sub: taxonomy::canonical_sub(sub).unwrap_or(sub).to_string(),
        })
    }

    /// The fallback bucket for products that cannot be classified.
    pub fn uncategorized() -> Self {
        CategoryLabel {
            top_level: taxonomy::FALLBACK_TOP.to_string(),
            sub: taxonomy::FALLBACK_SUB.to_string(),
        }
    }

    pub fn is_valid(&self) -> bool {
        CategoryLabel::new(&self.top_level, &self.sub).is_some()
    }
}

/// Transaction metadata shared by both disputants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionMeta {
    pub product_text: String,
    #[serde(default)]
    pub chat_history: Vec<ChatTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Price>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

/// One attached image or video. `frame_count` is 1 for images. Offline
/// providers consume `surrogate_text` instead of decoding pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaItem {
    pub media_id: String,
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
    pub frame_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_text: Option<String>,
}

impl MediaItem {
    pub fn image(media_id: &str, uri: Option<&str>, surrogate: Option<&str>) -> Self {
        MediaItem {
            media_id: media_id.to_string(),
            kind: MediaKind::Image,
            uri: uri.map(str::to_string),
            frame_count: 1,
            duration_s: None,
            surrogate_text: surrogate.map(str::to_string),
        }
    }

    pub fn video(media_id: &str, frame_count: u32, surrogate: Option<&str>) -> Self {
        MediaItem {
            media_id: media_id.to_string(),
            kind: MediaKind::Video,
            uri: None,
            frame_count,
            duration_s: None,
            surrogate_text: surrogate.map(str::to_string),
        }
    }
}

/// One submission by a disputant: a textual claim plus attached media.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidencePiece {
    pub evidence_id: String,
    #[serde(default)]
    pub text_claim: String,
    #[serde(default)]
    pub images: Vec<MediaItem>,
    #[serde(default)]
    pub videos: Vec<MediaItem>,
}

impl EvidencePiece {
    pub fn media_iter(&self) -> impl Iterator<Item = &MediaItem> {
        self.images.iter().chain(self.videos.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.text_claim.trim().is_empty() && self.images.is_empty() && self.videos.is_empty()
    }
}

/// The real 17-juror outcome attached to a labeled case. The winner is
/// derived, never stored: with 17 votes the split can never tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthVotes {
    pub buyer_votes: u32,
    pub seller_votes: u32,
}

/// Total size of the platform jury that produced the ground-truth labels.
pub const JURY_SIZE: u32 = 17;

impl GroundTruthVotes {
    pub fn new(buyer_votes: u32, seller_votes: u32) -> Self {
        GroundTruthVotes {
            buyer_votes,
            seller_votes,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.buyer_votes + self.seller_votes == JURY_SIZE
    }

    /// Seller wins iff seller_votes > buyer_votes.
    pub fn winner(&self) -> VerdictLabel {
        if self.seller_votes > self.buyer_votes {
            VerdictLabel::Seller
        } else {
            VerdictLabel::Buyer
        }
    }
}

/// Case difficulty: the absolute vote margin, with symmetric splits merged
/// (b:s and s:b map to the same level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DifficultyLevel {
    pub margin: u32,
}

/// Margin of a ground-truth split: `|buyer_votes - seller_votes|`.
pub fn difficulty_of(votes: GroundTruthVotes) -> DifficultyLevel {
    DifficultyLevel {
        margin: votes.buyer_votes.abs_diff(votes.seller_votes),
    }
}

/// One dispute case: metadata, ordered per-side evidence, optional label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisputeCase {
    pub case_id: String,
    pub meta: TransactionMeta,
    pub buyer_evidence: Vec<EvidencePiece>,
    #[serde(default)]
    pub seller_evidence: Vec<EvidencePiece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthVotes>,
}

impl DisputeCase {
    pub fn evidence(&self, side: Side) -> &[EvidencePiece] {
        match side {
            Side::Buyer => &self.buyer_evidence,
            Side::Seller => &self.seller_evidence,
        }
    }

    /// Canonical file encoding: pretty JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Validation issue classes reported by [`validate_case`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    MissingField,
    VoteSum,
    EmptyEvidence,
    DanglingMedia,
    DuplicateId,
    BadFrameCount,
    MissingMediaSource,
    Unparseable,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    /// Where in the case (or which file) the issue was found.
    pub location: String,
    pub code: IssueCode,
    pub message: String,
}

/// Collected validation output. Reporting, not throwing: a report with
/// issues is still a successful validation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn push(
        &mut self,
        case_id: Option<&str>,
        location: &str,
        code: IssueCode,
        message: String,
    ) {
        self.issues.push(ValidationIssue {
            case_id: case_id.map(str::to_string),
            location: location.to_string(),
            code,
            message,
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }
}

/// Text syntax for referencing an attached media item from a claim,
/// e.g. `[media:img_3]`. Used by the semantic-alignment check.
static MEDIA_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[media:([^\]\s]+)\]").expect("valid regex"));

/// Extract all `[media:ID]` references from a text.
pub fn media_references(text: &str) -> Vec<&str> {
    MEDIA_REF
        .captures_iter(text)
        .map(|c| c.get(1).expect("group").as_str())
        .collect()
}

/// Structural and semantic checks over one case. Mirrors the corpus
/// quality gates: required fields present, media references resolvable,
/// vote sum exactly 17, no empty evidence pieces.
pub fn validate_case(case: &DisputeCase) -> ValidationReport {
    let mut report = ValidationReport::default();
    let id = case.case_id.as_str();

    if case.case_id.trim().is_empty() {
        report.push(
            None,
            "case_id",
            IssueCode::MissingField,
            "case_id is empty".into(),
        );
    }
    if case.meta.product_text.trim().is_empty() {
        report.push(
            Some(id),
            "meta.product_text",
            IssueCode::MissingField,
            "product_text is empty".into(),
        );
    }
    if let Some(cat) = &case.meta.category {
        if !cat.is_valid() {
            report.push(
                Some(id),
                "meta.category",
                IssueCode::MissingField,
                format!("unknown category {}/{}", cat.top_level, cat.sub),
            );
        }
    }
    if case.buyer_evidence.is_empty() {
        report.push(
            Some(id),
            "buyer_evidence",
            IssueCode::MissingField,
            "buyer evidence list is empty (at least one piece required)".into(),
        );
    }

    if let Some(gt) = &case.ground_truth {
        if !gt.is_valid() {
            report.push(
                Some(id),
                "ground_truth",
                IssueCode::VoteSum,
                format!(
                    "vote sum {} != {JURY_SIZE}",
                    gt.buyer_votes + gt.seller_votes
                ),
            );
        }
    }

    let mut media_ids: BTreeSet<&str> = BTreeSet::new();
    for (side, pieces) in [
        (Side::Buyer, &case.buyer_evidence),
        (Side::Seller, &case.seller_evidence),
    ] {
        let mut seen_evidence: BTreeSet<&str> = BTreeSet::new();
        for (i, piece) in pieces.iter().enumerate() {
            let loc = format!("{side}_evidence[{i}]");
            if !seen_evidence.insert(piece.evidence_id.as_str()) {
                report.push(
                    Some(id),
                    &loc,
                    IssueCode::DuplicateId,
                    format!(
                        "duplicate evidence_id {:?} on {side} side",
                        piece.evidence_id
                    ),
                );
            }
            if piece.is_empty() {
                report.push(
                    Some(id),
                    &loc,
                    IssueCode::EmptyEvidence,
                    "evidence piece has no text, images or videos".into(),
                );
            }
            for media in piece.media_iter() {
                if !media_ids.insert(media.media_id.as_str()) {
                    report.push(
                        Some(id),
                        &loc,
                        IssueCode::DuplicateId,
                        format!("duplicate media_id {:?}", media.media_id),
                    );
                }
                if media.kind == MediaKind::Image && media.frame_count != 1 {
                    report.push(
                        Some(id),
                        &loc,
                        IssueCode::BadFrameCount,
                        format!(
                            "image {:?} has frame_count {} (must be 1)",
                            media.media_id, media.frame_count
                        ),
                    );
                }
                if media.uri.is_none() && media.surrogate_text.is_none() {
                    report.push(
                        Some(id),
                        &loc,
                        IssueCode::MissingMediaSource,
                        format!(
                            "media {:?} has neither uri nor surrogate_text",
                            media.media_id
                        ),
                    );
                }
            }
        }
    }

    // Semantic alignment: every [media:ID] mentioned in a text must resolve
    // to an attached media item somewhere in the case.
    let check_refs = |text: &str, loc: &str, report: &mut ValidationReport| {
        for referenced in media_references(text) {
            if !media_ids.contains(referenced) {
                report.push(
                    Some(id),
                    loc,
                    IssueCode::DanglingMedia,
                    format!("dangling media reference {referenced:?}"),
                );
            }
        }
    };
    for (side, pieces) in [
        (Side::Buyer, &case.buyer_evidence),
        (Side::Seller, &case.seller_evidence),
    ] {
        for (i, piece) in pieces.iter().enumerate() {
            check_refs(
                &piece.text_claim,
                &format!("{side}_evidence[{i}].text_claim"),
                &mut report,
            );
        }
    }
    for (i, turn) in case.meta.chat_history.iter().enumerate() {
        check_refs(&turn.text, &format!("meta.chat_history[{i}]"), &mut report);
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_case(id: &str, buyer_votes: u32, seller_votes: u32) -> DisputeCase {
        DisputeCase {
            case_id: id.to_string(),
            meta: TransactionMeta {
                product_text: "Used robot vacuum, 95% new".into(),
                chat_history: vec![
                    ChatTurn {
                        role: Side::Buyer,
                        text: "Does it hold a charge?".into(),
                    },
                    ChatTurn {
                        role: Side::Seller,
                        text: "Yes, battery replaced last year.".into(),
                    },
                ],
                category: CategoryLabel::new("Digital & Appliances", "Small Appliances"),
                price: Some(Price {
                    amount: "120.00".into(),
                    currency: "CNY".into(),
                }),
            },
            buyer_evidence: vec![EvidencePiece {
                evidence_id: "b1".into(),
                text_claim: "Battery stuck at 2% right out of the box, see [media:vid_b1]".into(),
                images: vec![],
                videos: vec![MediaItem::video(
                    "vid_b1",
                    120,
                    Some("battery indicator flashing at 2%"),
                )],
            }],
            seller_evidence: vec![EvidencePiece {
                evidence_id: "s1".into(),
                text_claim: "Charging normally before shipping, see [media:img_s1]".into(),
                images: vec![MediaItem::image(
                    "img_s1",
                    None,
                    Some("vacuum on charging dock, light solid"),
                )],
                videos: vec![],
            }],
            ground_truth: Some(GroundTruthVotes::new(buyer_votes, seller_votes)),
        }
    }

    #[test]
    fn difficulty_examples() {
        assert_eq!(difficulty_of(GroundTruthVotes::new(9, 8)).margin, 1);
        assert_eq!(difficulty_of(GroundTruthVotes::new(17, 0)).margin, 17);
        assert_eq!(difficulty_of(GroundTruthVotes::new(6, 11)).margin, 5);
    }

    #[test]
    fn difficulty_is_symmetric() {
        for b in 0..=JURY_SIZE {
            let s = JURY_SIZE - b;
            assert_eq!(
                difficulty_of(GroundTruthVotes::new(b, s)),
                difficulty_of(GroundTruthVotes::new(s, b))
            );
        }
    }

    #[test]
    fn winner_is_strict_majority() {
        assert_eq!(GroundTruthVotes::new(9, 8).winner(), VerdictLabel::Buyer);
        assert_eq!(GroundTruthVotes::new(8, 9).winner(), VerdictLabel::Seller);
        assert_eq!(GroundTruthVotes::new(0, 17).winner(), VerdictLabel::Seller);
    }

    #[test]
    fn well_formed_case_is_clean() {
        let report = validate_case(&sample_case("c1", 9, 8));
        assert!(report.is_clean(), "unexpected issues: {:?}", report.issues);
    }

    #[test]
    fn vote_sum_18_is_reported() {
        let case = sample_case("c1", 9, 9);
        let report = validate_case(&case);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].code, IssueCode::VoteSum);
        assert!(report.issues[0].message.contains("18"));
    }

    #[test]
    fn dangling_media_reference_is_a_single_issue() {
        let mut case = sample_case("c1", 9, 8);
        case.buyer_evidence[0].text_claim = "see [media:nope]".into();
        let report = validate_case(&case);
        let dangling: Vec<_> = report
            .issues
            .iter()
            .filter(|i| i.code == IssueCode::DanglingMedia)
            .collect();
        assert_eq!(dangling.len(), 1);
        assert!(dangling[0].message.contains("nope"));
        assert_eq!(report.issues.len(), 1);
    }

    #[test]
    fn empty_evidence_piece_is_reported() {
        let mut case = sample_case("c1", 9, 8);
        case.seller_evidence.push(EvidencePiece {
            evidence_id: "s2".into(),
            text_claim: "   ".into(),
            images: vec![],
            videos: vec![],
        });
        let report = validate_case(&case);
        assert!(report
            .issues
            .iter()
            .any(|i| i.code == IssueCode::EmptyEvidence));
    }

    #[test]
    fn canonical_roundtrip_is_byte_identical() {
        let case = sample_case("c1", 9, 8);
        let encoded = case.to_canonical_json();
        let decoded = DisputeCase::from_json(&encoded).unwrap();
        assert_eq!(decoded.to_canonical_json(), encoded);
        assert_eq!(decoded, case);
    }

    #[test]
    fn verdict_label_parse_is_case_insensitive() {
        assert_eq!(VerdictLabel::parse("Buyer"), Some(VerdictLabel::Buyer));
        assert_eq!(VerdictLabel::parse("seller"), Some(VerdictLabel::Seller));
        assert_eq!(VerdictLabel::parse(" SELLER "), Some(VerdictLabel::Seller));
        assert_eq!(VerdictLabel::parse("draw"), None);
    }

    #[test]
    fn category_label_checks_taxonomy() {
        assert!(CategoryLabel::new("Digital & Appliances", "Mobile Phones").is_some());
        assert!(CategoryLabel::new("Digital & Appliances", "Hats").is_none());
        let label = CategoryLabel::from_sub("Mobile Phones").unwrap();
        assert_eq!(label.top_level, "Digital & Appliances");
    }
}
