//! Deterministic jury-simulation engine for e-commerce dispute verdicts.
//!
//! The pipeline: load a corpus of dispute cases, optionally build a
//! precedent base from the training split, then simulate a multi-round
//! jury per case — each juror runs a staged reasoning chain over the
//! evidence, exchanges reasons over a directed follower graph, and the
//! final majority decides. Everything runs offline against mock or
//! recorded providers, or online against any HTTP chat-completion
//! endpoint.

pub mod case;
pub mod config;
pub mod corpus;
pub mod gateway;
pub mod jury;
pub mod metrics;
pub mod precedent;
pub mod prompts;
pub mod reasoning;
pub mod taxonomy;

pub use case::{
    difficulty_of, validate_case, CategoryLabel, DifficultyLevel, DisputeCase, EvidencePiece,
    GroundTruthVotes, MediaItem, MediaKind, Side, TransactionMeta, ValidationReport, VerdictLabel,
    JURY_SIZE,
};
pub use config::{ProviderConfig, RunConfig};
pub use corpus::{
    corpus_stats, load_corpus, stratified_partition, Corpus, Partition, PartitionSpec, StatsReport,
};
pub use gateway::{
    sample_frames, ChatRequest, ChatResponse, EmbeddingVector, Gateway, GenerationParams,
    LedgerTotals, TokenUsage,
};
pub use jury::{
    aggregate_final, build_network, run_simulation, should_stop, JurorProfile, RoundRecord,
    SimulationParams, SimulationResult, SummaryReport,
};
pub use metrics::{metrics_report, MetricsReport, PredictionRecord};
pub use precedent::{cosine, PrecedentBase, PrecedentRecord, RetrievalResult};
pub use prompts::TemplateId;
pub use reasoning::{IndividualVerdict, IvcotPass, StageContext};
