//! Operator entry point: validate and partition corpora, build precedent
//! bases, run simulations, evaluate predictions, dump statistics.
//!
//! Exit codes: 0 success, 1 validation/metric failure, 2 usage or
//! configuration error, 3 provider/transport failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "jurysim",
    version,
    about = "Jury-simulation engine for e-commerce dispute verdicts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every case file against the schema and quality rules.
    Validate {
        /// Corpus directory (or a single case file).
        #[arg(long)]
        corpus: PathBuf,
        /// Where to write the issue report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stratified train/val/test split by (category, difficulty margin).
    Partition {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated weights for train,val,test.
        #[arg(long, default_value = "3,1,2")]
        ratios: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving train.json / val.json / test.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill verdict guidelines from labeled cases into a precedent base.
    BuildPrecedents {
        #[arg(long)]
        corpus: PathBuf,
        /// Manifest restricting (and ordering) the cases used.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Output directory for manifest.json + vectors.bin.
        #[arg(long)]
        out: PathBuf,
        /// Refuse any network provider.
        #[arg(long)]
        offline: bool,
    },
    /// Run the jury simulation over one case or a manifest of cases.
    Simulate {
        /// A single case file.
        #[arg(long, conflicts_with = "corpus")]
        case: Option<PathBuf>,
        /// Corpus directory (all cases, or those in --manifest).
        #[arg(long, required_unless_present = "case")]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving one result JSON per case.
        #[arg(long)]
        out: PathBuf,
        /// Precedent base directory (overrides the config path).
        #[arg(long)]
        precedents: Option<PathBuf>,
        /// Concurrent cases.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Refuse any network provider.
        #[arg(long)]
        offline: bool,
        /// Keep full prompt/response texts in the audit log (digests are
        /// always kept).
        #[arg(long)]
        log_full: bool,
        /// Record every provider exchange to a replayable transcript.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Score simulation results against ground-truth labels.
    Evaluate {
        /// Directory of simulation result files.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Manifest restricting which cases are scored.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory receiving metrics.json and breakdown CSVs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the corpus statistics battery as CSV tables.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { corpus, report } => commands::validate::run(&corpus, report.as_deref()),
        Command::Partition {
            corpus,
            ratios,
            seed,
            out,
        } => commands::partition::run(&corpus, &ratios, seed, &out),
        Command::BuildPrecedents {
            corpus,
            manifest,
            config,
            out,
            offline,
        } => commands::build_precedents::run(&corpus, manifest.as_deref(), &config, &out, offline),
        Command::Simulate {
            case,
            corpus,
            manifest,
            config,
            out,
            precedents,
            jobs,
            offline,
            log_full,
            record,
        } => commands::simulate::run(commands::simulate::Args {
            case: case.as_deref(),
            corpus: corpus.as_deref(),
            manifest: manifest.as_deref(),
            config: &config,
            out: &out,
            precedents: precedents.as_deref(),
            jobs,
            offline,
            log_full,
            record: record.as_deref(),
        }),
        Command::Evaluate {
            results,
            corpus,
            manifest,
            out,
        } => commands::evaluate::run(&results, &corpus, manifest.as_deref(), &out),
        Command::Stats { corpus, out } => commands::stats::run(&corpus, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
