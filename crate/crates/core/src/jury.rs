//! Multi-round jury simulation over a directed social graph.
//!
//! Each juror runs stages I-III once per case; every round re-runs only
//! the final-verdict stage with fresh social inputs: the reasons of
//! followed jurors from the previous round and the collective summary.
//! Rounds stop early once the agreeing fraction strictly exceeds the
//! consensus threshold; the last round's majority decides the case.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{DisputeCase, VerdictLabel};
use crate::gateway::{AuditEntry, Gateway, LedgerTotals};
use crate::precedent::{retrieve, select_memory, PrecedentBase, PrecedentError};
use crate::prompts::{bindings, call_with_schema, PromptError, TemplateId};
use crate::reasoning::{
    run_stages, stage4_judge, IndividualVerdict, IvcotPass, JudgeContext, StageContext, EMPTY_MARK,
};

#[derive(Debug, Error)]
pub enum JuryError {
    #[error("invalid out-degree {out_degree} for a jury of {jurors}")]
    InvalidDegree { jurors: usize, out_degree: usize },
    #[error("persona pool has {have} profiles, need {need}")]
    PoolExhausted { need: usize, have: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Precedent(#[from] PrecedentError),
}

/// Directed follower graph: an edge (k, j) means juror k follows juror j
/// and reads j's reasons each round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialNetwork {
    pub juror_count: usize,
    pub out_degree: usize,
    pub seed: u64,
    pub edges: Vec<(usize, usize)>,
}

impl SocialNetwork {
    pub fn followees(&self, juror: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(k, _)| *k == juror)
            .map(|(_, j)| *j)
            .collect()
    }
}

/// Seeded uniform follower sampling: each juror follows `out_degree`
/// distinct others, no self-edges, deterministic per seed.
pub fn build_network(n: usize, out_degree: usize, seed: u64) -> Result<SocialNetwork, JuryError> {
    let valid = (n == 1 && out_degree == 0) || (out_degree >= 1 && out_degree < n);
    if !valid {
        return Err(JuryError::InvalidDegree {
            jurors: n,
            out_degree,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * out_degree);
    for k in 0..n {
        let mut candidates: Vec<usize> = (0..n).filter(|j| *j != k).collect();
        candidates.shuffle(&mut rng);
        let mut chosen: Vec<usize> = candidates.into_iter().take(out_degree).collect();
        chosen.sort_unstable();
        for j in chosen {
            edges.push((k, j));
        }
    }
    Ok(SocialNetwork {
        juror_count: n,
        out_degree,
        seed,
        edges,
    })
}

/// A juror's identity: the persona fields bound into the persona prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JurorProfile {
    pub name: String,
    pub gender: String,
    pub age: String,
    pub status: String,
    pub role_description: String,
    pub traits: String,
    pub interest: String,
}

impl JurorProfile {
    /// One-line persona text used for norm-similarity ranking.
    pub fn descriptor(&self) -> String {
        format!(
            "{}, {}, {} years old, {}. {}. Traits: {}. Interests: {}.",
            self.name,
            self.gender,
            self.age,
            self.status,
            self.role_description,
            self.traits,
            self.interest
        )
    }
}

/// The persona pool shipped with the engine (20 profiles).
pub fn default_persona_pool() -> Vec<JurorProfile> {
    serde_json::from_str(include_str!("../assets/personas.json")).expect("bundled pool parses")
}

pub fn load_persona_pool(path: &std::path::Path) -> Result<Vec<JurorProfile>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Sample `n` distinct profiles from the pool, deterministically per seed.
pub fn assign_personas(
    pool: &[JurorProfile],
    n: usize,
    seed: u64,
) -> Result<Vec<JurorProfile>, JuryError> {
    if pool.len() < n {
        return Err(JuryError::PoolExhausted {
            need: n,
            have: pool.len(),
        });
    }
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    Ok(indices
        .into_iter()
        .take(n)
        .map(|i| pool[i].clone())
        .collect())
}

/// Render the persona system message for one juror.
pub fn persona_system(profile: &JurorProfile, peer_count: usize) -> String {
    let peers = peer_count.to_string();
    let b = bindings(&[
        ("name", profile.name.as_str()),
        ("gender", profile.gender.as_str()),
        ("age", profile.age.as_str()),
        ("status", profile.status.as_str()),
        ("role_description", profile.role_description.as_str()),
        ("traits", profile.traits.as_str()),
        ("interest", profile.interest.as_str()),
        ("peer_count", peers.as_str()),
    ]);
    crate::prompts::render(TemplateId::Persona, &b).expect("persona template bindings are complete")
}

/// Per-juror mutable state across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JurorState {
    pub profile: JurorProfile,
    /// Precedent norms selected for this juror; at most K entries.
    pub memory: Vec<String>,
    pub last_verdict: Option<IndividualVerdict>,
}

/// The three sections of the collective verdict summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub key_arguments: String,
    pub debate_intensity: String,
    pub prevailing_orientation: String,
}

impl SummaryReport {
    /// Deterministic stand-in when the summary call itself fails; keeps
    /// the round record complete without aborting.
    fn fallback(buyer: usize, seller: usize) -> Self {
        let prevailing = match buyer.cmp(&seller) {
            std::cmp::Ordering::Greater => {
                format!("majority currently supports the buyer ({buyer}:{seller})")
            }
            std::cmp::Ordering::Less => {
                format!("majority currently supports the seller ({buyer}:{seller})")
            }
            std::cmp::Ordering::Equal => format!("the jury is evenly split ({buyer}:{seller})"),
        };
        SummaryReport {
            key_arguments: "(summary unavailable)".into(),
            debate_intensity: format!("vote split {buyer}:{seller}"),
            prevailing_orientation: prevailing,
        }
    }

    fn rendered(&self) -> String {
        format!(
            "Key arguments: {}\nDebate intensity: {}\nPrevailing orientation: {}",
            self.key_arguments, self.debate_intensity, self.prevailing_orientation
        )
    }
}

/// One discussion round: every juror's verdict, the tally, the consensus
/// fraction and the collective summary produced from this round's reasons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub verdicts: BTreeMap<String, IndividualVerdict>,
    pub summary: SummaryReport,
    pub buyer_votes: usize,
    pub seller_votes: usize,
    pub consensus: f64,
    pub stopped_early: bool,
}

/// True iff the agreeing fraction strictly exceeds the threshold.
pub fn should_stop(record: &RoundRecord, delta: f64) -> bool {
    record.consensus > delta
}

/// Majority vote of the last executed round: the seller wins only with
/// strictly more votes, so a tie (even jury sizes) goes to the buyer.
pub fn aggregate_final(last: &RoundRecord) -> VerdictLabel {
    if last.seller_votes > last.buyer_votes {
        VerdictLabel::Seller
    } else {
        VerdictLabel::Buyer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub network: u64,
    pub persona: u64,
    pub fallback: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            network: 1,
            persona: 2,
            fallback: 3,
        }
    }
}

/// Jury-level knobs of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub jurors: usize,
    pub rounds: usize,
    pub t_max: usize,
    pub memory_k: usize,
    pub delta: f64,
    pub out_degree: usize,
    pub lite: bool,
    pub seeds: SeedConfig,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            jurors: 17,
            rounds: 3,
            t_max: 3,
            memory_k: 3,
            delta: 0.8,
            out_degree: 3,
            lite: false,
            seeds: SeedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSplit {
    pub buyer: usize,
    pub seller: usize,
}

/// Everything one simulated case produced, serialized as a single JSON
/// document. With a fixed provider and seeds this is a pure function of
/// (case, params), byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub case_id: String,
    pub provider: String,
    pub params: SimulationParams,
    pub juror_names: Vec<String>,
    pub network: SocialNetwork,
    pub rounds: Vec<RoundRecord>,
    pub final_verdict: VerdictLabel,
    pub final_summary: SummaryReport,
    pub final_split: VoteSplit,
    pub tokens: LedgerTotals,
    pub audit: Vec<AuditEntry>,
}

impl SimulationResult {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }
}

pub fn juror_id(index: usize) -> String {
    format!("j{index:02}")
}

/// A prepared simulation: network built, personas assigned, memory
/// selected, stage packs cached. Rounds mutate only verdict state.
pub struct Simulation<'a> {
    case: &'a DisputeCase,
    params: SimulationParams,
    gateway: &'a Gateway,
    network: SocialNetwork,
    jurors: Vec<JurorState>,
    packs: Vec<Option<IvcotPass>>,
}

impl<'a> Simulation<'a> {
    /// Build the round-invariant state. Per-juror stage failures are
    /// absorbed (that juror votes by fallback); configuration problems are
    /// the only fatal errors.
    pub fn prepare(
        case: &'a DisputeCase,
        params: SimulationParams,
        gateway: &'a Gateway,
        base: Option<&PrecedentBase>,
        pool: &[JurorProfile],
    ) -> Result<Self, JuryError> {
        let n = params.jurors;
        let network = build_network(n, params.out_degree, params.seeds.network)?;
        let profiles = assign_personas(pool, n, params.seeds.persona)?;

        // Retrieval is per case: the norms of the most relevant precedent,
        // then a persona-ranked top-K per juror.
        let guidelines = match base.filter(|b| !b.is_empty()) {
            Some(base) => match retrieve(base, case, gateway) {
                Ok(result) => Some(result.guidelines),
                Err(e) => {
                    log::warn!("precedent retrieval failed for {}: {e}", case.case_id);
                    None
                }
            },
            None => None,
        };

        let mut jurors = Vec::with_capacity(n);
        let mut packs = Vec::with_capacity(n);
        for profile in profiles {
            let memory = match &guidelines {
                Some(set) => {
                    match select_memory(&profile.descriptor(), set, params.memory_k, gateway) {
                        Ok(memory) => memory,
                        Err(e) => {
                            log::warn!("memory selection failed for {}: {e}", profile.name);
                            Vec::new()
                        }
                    }
                }
                None => Vec::new(),
            };
            let ctx = StageContext::new(gateway)
                .with_system(Some(persona_system(&profile, n.saturating_sub(1))))
                .with_t_max(params.t_max)
                .with_lite(params.lite);
            let pack = match run_stages(case, &ctx) {
                Ok(pack) => Some(pack),
                Err(e) => {
                    log::warn!(
                        "stage pipeline failed for juror {} on {}: {e}; juror will vote by fallback",
                        profile.name,
                        case.case_id
                    );
                    None
                }
            };
            jurors.push(JurorState {
                profile,
                memory,
                last_verdict: None,
            });
            packs.push(pack);
        }

        Ok(Simulation {
            case,
            params,
            gateway,
            network,
            jurors,
            packs,
        })
    }

    fn fallback_verdict(&self, juror: usize, round: usize) -> IndividualVerdict {
        match &self.jurors[juror].last_verdict {
            Some(prev) => IndividualVerdict {
                verdict: prev.verdict,
                reasons: vec!["fallback: keeping my previous-round verdict".into()],
                provenance: "fallback:previous".into(),
            },
            None => {
                // A fixed default label would bias the tally; a seeded fair
                // coin keeps exactly N binary votes without direction.
                let mix = self
                    .params
                    .seeds
                    .fallback
                    .wrapping_add((juror as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                    .wrapping_add(round as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                let verdict = if rng.random::<bool>() {
                    VerdictLabel::Seller
                } else {
                    VerdictLabel::Buyer
                };
                log::warn!(
                    "juror {} has no verdict to fall back on in round {round}; drew {verdict} by seeded coin",
                    juror_id(juror)
                );
                IndividualVerdict {
                    verdict,
                    reasons: vec!["fallback: seeded coin (no usable reply)".into()],
                    provenance: "fallback:coin".into(),
                }
            }
        }
    }

    fn summary_content(&self) -> String {
        let mut out = format!("Product: {}", self.case.meta.product_text);
        if let Some(price) = &self.case.meta.price {
            out.push_str(&format!(" (price {} {})", price.amount, price.currency));
        }
        out
    }

    /// One discussion round. Neighbor reasons come from round t-1 (empty
    /// at t=1); the new summary folds this round's reasons into the
    /// previous report. Per-juror failures never abort the round.
    pub fn run_round(&mut self, t: usize, previous: Option<&SummaryReport>) -> RoundRecord {
        let n = self.params.jurors;
        let mut verdicts: BTreeMap<String, IndividualVerdict> = BTreeMap::new();

        for k in 0..n {
            let neighbors: Vec<(String, VerdictLabel, Vec<String>)> = if t == 1 {
                Vec::new()
            } else {
                self.network
                    .followees(k)
                    .into_iter()
                    .filter_map(|j| {
                        self.jurors[j]
                            .last_verdict
                            .as_ref()
                            .map(|v| (juror_id(j), v.verdict, v.reasons.clone()))
                    })
                    .collect()
            };

            let verdict = match &self.packs[k] {
                Some(pass) => {
                    let ctx = StageContext::new(self.gateway)
                        .with_system(Some(persona_system(
                            &self.jurors[k].profile,
                            n.saturating_sub(1),
                        )))
                        .with_t_max(self.params.t_max)
                        .with_lite(self.params.lite);
                    let agent = k.to_string();
                    let jc = JudgeContext {
                        agent_id: &agent,
                        pass,
                        neighbors: &neighbors,
                        social_consensus: previous.map(|s| s.prevailing_orientation.as_str()),
                        mean_field: previous.map(|s| s.debate_intensity.as_str()),
                        memory: &self.jurors[k].memory,
                    };
                    match stage4_judge(&jc, &ctx) {
                        Ok(v) => v,
                        Err(e) => {
                            log::warn!("stage4 failed for juror {} in round {t}: {e}", juror_id(k));
                            self.fallback_verdict(k, t)
                        }
                    }
                }
                None => self.fallback_verdict(k, t),
            };
            verdicts.insert(juror_id(k), verdict);
        }

        for k in 0..n {
            self.jurors[k].last_verdict = verdicts.get(&juror_id(k)).cloned();
        }

        let buyer_votes = verdicts
            .values()
            .filter(|v| v.verdict == VerdictLabel::Buyer)
            .count();
        let seller_votes = n - buyer_votes;
        let consensus = buyer_votes.max(seller_votes) as f64 / n as f64;

        // Collect reasons in juror-id order so the summary transcript is
        // stable, then fold them into the previous report.
        let comment = verdicts
            .iter()
            .map(|(id, v)| format!("juror {id}: {}", v.reasons.join("; ")))
            .collect::<Vec<_>>()
            .join("\n");
        let mf_text = previous.map_or(EMPTY_MARK.to_string(), |s| s.rendered());
        let content = self.summary_content();
        let b = bindings(&[
            ("content", content.as_str()),
            ("comment", comment.as_str()),
            ("mf_text", mf_text.as_str()),
        ]);
        let summary = match call_with_schema(
            self.gateway,
            None,
            TemplateId::Summary,
            &b,
            &[],
            crate::prompts::DEFAULT_RETRIES,
        ) {
            Ok(reply) => SummaryReport {
                key_arguments: reply.value["key_arguments"]
                    .as_str()
                    .unwrap_or_default()
                    .into(),
                debate_intensity: reply.value["debate_intensity"]
                    .as_str()
                    .unwrap_or_default()
                    .into(),
                prevailing_orientation: reply.value["prevailing_orientation"]
                    .as_str()
                    .unwrap_or_default()
                    .into(),
            },
            Err(e) => {
                log::warn!("summary generation failed in round {t}: {e}");
                SummaryReport::fallback(buyer_votes, seller_votes)
            }
        };

        let record = RoundRecord {
            round_index: t,
            verdicts,
            summary,
            buyer_votes,
            seller_votes,
            consensus,
            stopped_early: false,
        };
        RoundRecord {
            stopped_early: should_stop(&record, self.params.delta) && t < self.params.rounds,
            ..record
        }
    }

    pub fn run(mut self) -> SimulationResult {
        let mut rounds: Vec<RoundRecord> = Vec::with_capacity(self.params.rounds);
        for t in 1..=self.params.rounds {
            let previous = rounds.last().map(|r: &RoundRecord| r.summary.clone());
            let record = self.run_round(t, previous.as_ref());
            let stop = should_stop(&record, self.params.delta);
            rounds.push(record);
            if stop {
                break;
            }
        }
        let last = rounds.last().expect("at least one round");
        let final_verdict = aggregate_final(last);
        let final_summary = last.summary.clone();
        let final_split = VoteSplit {
            buyer: last.buyer_votes,
            seller: last.seller_votes,
        };
        SimulationResult {
            case_id: self.case.case_id.clone(),
            provider: self.gateway.provider_name().to_string(),
            params: self.params.clone(),
            juror_names: self.jurors.iter().map(|j| j.profile.name.clone()).collect(),
            network: self.network.clone(),
            rounds,
            final_verdict,
            final_summary,
            final_split,
            tokens: self.gateway.ledger(),
            audit: self.gateway.audit_log(),
        }
    }
}

/// Prepare and run one case end to end.
pub fn run_simulation(
    case: &DisputeCase,
    params: SimulationParams,
    gateway: &Gateway,
    base: Option<&PrecedentBase>,
    pool: &[JurorProfile],
) -> Result<SimulationResult, JuryError> {
    Ok(Simulation::prepare(case, params, gateway, base, pool)?.run())
}
