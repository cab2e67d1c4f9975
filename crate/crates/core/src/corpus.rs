//! Corpus loading, stratified partitioning, statistics and category tagging.
//!
//! A corpus is a directory of one-JSON-document-per-case files. Partitions
//! are stratified jointly by (top-level category, difficulty margin) using
//! largest-remainder rounding per stratum, so the same corpus and seed
//! always produce the same assignment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case::{
    difficulty_of, CategoryLabel, DisputeCase, IssueCode, ValidationReport, VerdictLabel,
};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::prompts::{bindings, render, PromptError, TemplateId};
use crate::taxonomy;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no cases found under {0}")]
    NoCases(PathBuf),
    #[error("duplicate case_id {0:?}")]
    DuplicateCaseId(String),
    #[error("case {0:?} is missing a category or ground-truth label")]
    Unlabeled(String),
    #[error("partition ratios must have a positive sum")]
    BadRatios,
}

/// A loaded set of cases, sorted by case_id, with a content digest for
/// reproducibility claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub cases: Vec<DisputeCase>,
    pub source_digest: String,
}

impl Corpus {
    pub fn from_cases(mut cases: Vec<DisputeCase>) -> Result<Self, CorpusError> {
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        for pair in cases.windows(2) {
            if pair[0].case_id == pair[1].case_id {
                return Err(CorpusError::DuplicateCaseId(pair[0].case_id.clone()));
            }
        }
        let mut hasher = Sha256::new();
        for case in &cases {
            hasher.update(case.to_canonical_json().as_bytes());
        }
        let mut source_digest = String::with_capacity(64);
        for byte in hasher.finalize() {
            use std::fmt::Write;
            write!(source_digest, "{byte:02x}").expect("write to string");
        }
        Ok(Corpus {
            cases,
            source_digest,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&DisputeCase> {
        self.cases
            .binary_search_by(|c| c.case_id.as_str().cmp(case_id))
            .ok()
            .map(|i| &self.cases[i])
    }
}

fn case_files(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every parseable case under `path` (a directory of `*.json` files,
/// or a single file). Unparseable files and duplicate ids are listed in
/// the report rather than aborting the load.
pub fn load_corpus(path: &Path) -> Result<(Corpus, ValidationReport), CorpusError> {
    let files = case_files(path)?;
    if files.is_empty() {
        return Err(CorpusError::NoCases(path.to_path_buf()));
    }
    let mut report = ValidationReport::default();
    let mut cases: Vec<DisputeCase> = Vec::with_capacity(files.len());
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|source| CorpusError::Io {
            path: file.clone(),
            source,
        })?;
        match DisputeCase::from_json(&text) {
            Ok(case) => {
                if seen.contains_key(&case.case_id) {
                    report.push(
                        Some(&case.case_id),
                        &file.display().to_string(),
                        IssueCode::DuplicateId,
                        format!(
                            "case_id already loaded from {}",
                            seen[&case.case_id].display()
                        ),
                    );
                } else {
                    seen.insert(case.case_id.clone(), file.clone());
                    cases.push(case);
                }
            }
            Err(e) => report.push(
                None,
                &file.display().to_string(),
                IssueCode::Unparseable,
                e.to_string(),
            ),
        }
    }
    if cases.is_empty() {
        return Err(CorpusError::NoCases(path.to_path_buf()));
    }
    let corpus = Corpus::from_cases(cases)?;
    Ok((corpus, report))
}

/// How to split a corpus: three weights (train, val, test) and a seed.
/// Strata are always (top-level category, difficulty margin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            ratios: [3.0, 1.0, 2.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Partition {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Largest-remainder allocation of `n` items across three weighted sets.
/// Floors of the exact quotas first, then one extra item per set in order
/// of descending fractional remainder; exact ties go to the earlier set
/// (train before val before test).
pub fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    assert!(total > 0.0, "ratios must have a positive sum");
    let quotas = [
        n as f64 * ratios[0] / total,
        n as f64 * ratios[1] / total,
        n as f64 * ratios[2] / total,
    ];
    let mut alloc = [
        quotas[0].floor() as usize,
        quotas[1].floor() as usize,
        quotas[2].floor() as usize,
    ];
    let leftover = n - alloc.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    for &set in order.iter().take(leftover) {
        alloc[set] += 1;
    }
    alloc
}

fn stratum_seed(seed: u64, top_level: &str, margin: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(top_level.as_bytes());
    hasher.update(margin.to_le_bytes());
    let hash = hasher.finalize();
    let mut key = [0u8; 8];
    key.copy_from_slice(&hash[..8]);
    u64::from_le_bytes(key)
}

/// Stratified split by (category, difficulty margin). Every case must be
/// labeled. Within a stratum, case ids are sorted, shuffled with a seed
/// derived from (spec seed, stratum key), and cut by [`largest_remainder`];
/// so identical (corpus, seed) always yield identical assignments and
/// different seeds only move cases, never per-stratum sizes.
pub fn stratified_partition(
    corpus: &Corpus,
    spec: &PartitionSpec,
) -> Result<Partition, CorpusError> {
    if spec.ratios.iter().sum::<f64>() <= 0.0 {
        return Err(CorpusError::BadRatios);
    }
    let mut strata: BTreeMap<(String, u32), Vec<String>> = BTreeMap::new();
    for case in &corpus.cases {
        let category = case
            .meta
            .category
            .as_ref()
            .ok_or_else(|| CorpusError::Unlabeled(case.case_id.clone()))?;
        let votes = case
            .ground_truth
            .ok_or_else(|| CorpusError::Unlabeled(case.case_id.clone()))?;
        strata
            .entry((category.top_level.clone(), difficulty_of(votes).margin))
            .or_default()
            .push(case.case_id.clone());
    }

    let mut partition = Partition::default();
    for ((top_level, margin), mut ids) in strata {
        ids.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(spec.seed, &top_level, margin));
        ids.shuffle(&mut rng);
        let [n_train, n_val, _] = largest_remainder(ids.len(), &spec.ratios);
        partition.train.extend_from_slice(&ids[..n_train]);
        partition
            .val
            .extend_from_slice(&ids[n_train..n_train + n_val]);
        partition.test.extend_from_slice(&ids[n_train + n_val..]);
    }
    partition.train.sort();
    partition.val.sort();
    partition.test.sort();
    Ok(partition)
}

/// Win counts over the labeled portion of a case set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub buyer_wins: usize,
    pub seller_wins: usize,
}

impl WinRate {
    pub fn labeled(&self) -> usize {
        self.buyer_wins + self.seller_wins
    }

    pub fn seller_rate(&self) -> f64 {
        if self.labeled() == 0 {
            0.0
        } else {
            self.seller_wins as f64 / self.labeled() as f64
        }
    }

    pub fn buyer_rate(&self) -> f64 {
        if self.labeled() == 0 {
            0.0
        } else {
            self.buyer_wins as f64 / self.labeled() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaCount {
    pub case_id: String,
    pub images: usize,
    pub videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceIntensity {
    pub case_id: String,
    pub buyer_pieces: usize,
    pub seller_pieces: usize,
}

/// The three normalized per-case gap scores,
/// `(buyer_value - seller_value) / (buyer_value + seller_value)`.
/// A score is omitted (not zero) when both sides contribute zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScores {
    pub case_id: String,
    pub evidence_count_gap: Option<f64>,
    pub text_length_gap: Option<f64>,
    pub media_count_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<VerdictLabel>,
}

/// Normalized gap `(b - s) / (b + s)`, undefined at 0/0.
pub fn gap_score(buyer_value: f64, seller_value: f64) -> Option<f64> {
    let total = buyer_value + seller_value;
    if total == 0.0 {
        None
    } else {
        Some((buyer_value - seller_value) / total)
    }
}

/// The statistics battery: category coverage, win rates, difficulty
/// profile, media/evidence intensity and the per-case gap scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_cases: usize,
    pub category_histogram: BTreeMap<String, usize>,
    pub overall_win_rate: WinRate,
    pub category_win_rates: BTreeMap<String, WinRate>,
    pub difficulty_histogram: BTreeMap<u32, usize>,
    pub category_difficulty: BTreeMap<String, BTreeMap<u32, usize>>,
    pub media_counts: Vec<MediaCount>,
    pub evidence_intensity: Vec<EvidenceIntensity>,
    pub gap_scores: Vec<GapScores>,
}

const UNLABELED: &str = "(unlabeled)";

/// Compute the full statistics battery. Order-independent: per-case rows
/// come out sorted by case_id.
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut report = StatsReport {
        total_cases: corpus.len(),
        category_histogram: BTreeMap::new(),
        overall_win_rate: WinRate::default(),
        category_win_rates: BTreeMap::new(),
        difficulty_histogram: BTreeMap::new(),
        category_difficulty: BTreeMap::new(),
        media_counts: Vec::with_capacity(corpus.len()),
        evidence_intensity: Vec::with_capacity(corpus.len()),
        gap_scores: Vec::with_capacity(corpus.len()),
    };

    for case in &corpus.cases {
        let category = case
            .meta
            .category
            .as_ref()
            .map_or(UNLABELED.to_string(), |c| c.top_level.clone());
        *report
            .category_histogram
            .entry(category.clone())
            .or_default() += 1;

        if let Some(votes) = case.ground_truth {
            let rate = report
                .category_win_rates
                .entry(category.clone())
                .or_default();
            match votes.winner() {
                VerdictLabel::Buyer => {
                    report.overall_win_rate.buyer_wins += 1;
                    rate.buyer_wins += 1;
                }
                VerdictLabel::Seller => {
                    report.overall_win_rate.seller_wins += 1;
                    rate.seller_wins += 1;
                }
            }
            let margin = difficulty_of(votes).margin;
            *report.difficulty_histogram.entry(margin).or_default() += 1;
            *report
                .category_difficulty
                .entry(category.clone())
                .or_default()
                .entry(margin)
                .or_default() += 1;
        }

        let count = |pieces: &[crate::case::EvidencePiece]| {
            let texts: usize = pieces.iter().map(|p| p.text_claim.chars().count()).sum();
            let images: usize = pieces.iter().map(|p| p.images.len()).sum();
            let videos: usize = pieces.iter().map(|p| p.videos.len()).sum();
            (pieces.len(), texts, images + videos, images, videos)
        };
        let (b_pieces, b_text, b_media, b_images, b_videos) = count(&case.buyer_evidence);
        let (s_pieces, s_text, s_media, s_images, s_videos) = count(&case.seller_evidence);

        report.media_counts.push(MediaCount {
            case_id: case.case_id.clone(),
            images: b_images + s_images,
            videos: b_videos + s_videos,
        });
        report.evidence_intensity.push(EvidenceIntensity {
            case_id: case.case_id.clone(),
            buyer_pieces: b_pieces,
            seller_pieces: s_pieces,
        });
        report.gap_scores.push(GapScores {
            case_id: case.case_id.clone(),
            evidence_count_gap: gap_score(b_pieces as f64, s_pieces as f64),
            text_length_gap: gap_score(b_text as f64, s_text as f64),
            media_count_gap: gap_score(b_media as f64, s_media as f64),
            winner: case.ground_truth.map(|v| v.winner()),
        });
    }

    report
        .media_counts
        .sort_by(|a, b| a.case_id.cmp(&b.case_id));
    report
        .evidence_intensity
        .sort_by(|a, b| a.case_id.cmp(&b.case_id));
    report.gap_scores.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    report
}

/// Write the statistics battery as one CSV per panel. Returns the paths
/// written.
pub fn write_stats_csv(report: &StatsReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut path = dir.join("category_distribution.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["top_level", "count"])?;
    for (category, count) in &report.category_histogram {
        w.write_record([category.as_str(), &count.to_string()])?;
    }
    w.flush()?;
    written.push(path);

    path = dir.join("overall_win_rate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["side", "wins", "rate"])?;
    let overall = &report.overall_win_rate;
    w.write_record([
        "buyer",
        &overall.buyer_wins.to_string(),
        &overall.buyer_rate().to_string(),
    ])?;
    w.write_record([
        "seller",
        &overall.seller_wins.to_string(),
        &overall.seller_rate().to_string(),
    ])?;
    w.flush()?;
    written.push(path);

    path = dir.join("category_win_rate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "top_level",
        "buyer_wins",
        "seller_wins",
        "buyer_rate",
        "seller_rate",
    ])?;
    for (category, rate) in &report.category_win_rates {
        w.write_record([
            category.as_str(),
            &rate.buyer_wins.to_string(),
            &rate.seller_wins.to_string(),
            &rate.buyer_rate().to_string(),
            &rate.seller_rate().to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    path = dir.join("difficulty_distribution.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["top_level", "margin", "count"])?;
    for (margin, count) in &report.difficulty_histogram {
        w.write_record(["(all)", &margin.to_string(), &count.to_string()])?;
    }
    for (category, margins) in &report.category_difficulty {
        for (margin, count) in margins {
            w.write_record([category.as_str(), &margin.to_string(), &count.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    path = dir.join("media_distribution.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["case_id", "images", "videos"])?;
    for row in &report.media_counts {
        w.write_record([
            row.case_id.as_str(),
            &row.images.to_string(),
            &row.videos.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    path = dir.join("evidence_intensity.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["case_id", "buyer_pieces", "seller_pieces"])?;
    for row in &report.evidence_intensity {
        w.write_record([
            row.case_id.as_str(),
            &row.buyer_pieces.to_string(),
            &row.seller_pieces.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    path = dir.join("evidence_gap_scores.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["case_id", "metric", "gap", "winner"])?;
    for row in &report.gap_scores {
        let winner = row.winner.map_or(String::new(), |w| w.to_string());
        for (metric, gap) in [
            ("evidence_count", row.evidence_count_gap),
            ("text_length", row.text_length_gap),
            ("media_count", row.media_count_gap),
        ] {
            if let Some(gap) = gap {
                w.write_record([row.case_id.as_str(), metric, &gap.to_string(), &winner])?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    Ok(written)
}

const CLASSIFY_REPAIR: &str =
    "Return only the name of one subcategory from the list above, not a main category name.";

/// Ask the provider for the product's subcategory and normalize the reply
/// against the taxonomy. A main-category answer gets one repair retry;
/// anything still unrecognized falls back to the uncategorized bucket.
pub fn tag_category(case: &DisputeCase, gateway: &Gateway) -> Result<CategoryLabel, PromptError> {
    let b = bindings(&[("product_text", case.meta.product_text.as_str())]);
    let prompt = render(TemplateId::Classify, &b)?;
    let mut messages = vec![ChatMessage::user(prompt)];
    for attempt in 0..2 {
        let req = ChatRequest::new(messages.clone(), gateway.params());
        let resp = gateway.generate_labeled(TemplateId::Classify.as_str(), &req)?;
        let answer = resp.text.trim();
        if let Some(label) = CategoryLabel::from_sub(answer) {
            return Ok(label);
        }
        if attempt == 0 && taxonomy::is_top_level(answer) {
            messages.push(ChatMessage::assistant(resp.text.clone()));
            messages.push(ChatMessage::user(CLASSIFY_REPAIR));
            continue;
        }
        break;
    }
    Ok(CategoryLabel::uncategorized())
}
