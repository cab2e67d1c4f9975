use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use jurysim_core::case::DisputeCase;
use jurysim_core::config::RunConfig;
use jurysim_core::corpus::load_corpus;
use jurysim_core::gateway::{Gateway, RecordingProvider};
use jurysim_core::jury::{default_persona_pool, load_persona_pool, run_simulation, JurorProfile};
use jurysim_core::precedent::PrecedentBase;

use super::{CliError, Manifest};

pub struct Args<'a> {
    pub case: Option<&'a Path>,
    pub corpus: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub config: &'a Path,
    pub out: &'a Path,
    pub precedents: Option<&'a Path>,
    pub jobs: usize,
    pub offline: bool,
    pub log_full: bool,
    pub record: Option<&'a Path>,
}

fn load_cases(args: &Args) -> Result<Vec<DisputeCase>, CliError> {
    if let Some(case_path) = args.case {
        let text = std::fs::read_to_string(case_path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", case_path.display())))?;
        let case = DisputeCase::from_json(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", case_path.display())))?;
        return Ok(vec![case]);
    }
    let corpus_path = args.corpus.expect("clap enforces --case or --corpus");
    let (corpus, report) = load_corpus(corpus_path)?;
    if !report.is_clean() {
        return Err(CliError::Validation(format!(
            "{} file(s) failed to load; run `jurysim validate` first",
            report.issues.len()
        )));
    }
    match args.manifest {
        Some(path) => {
            let manifest = Manifest::load(path)?;
            let mut cases = Vec::with_capacity(manifest.case_ids.len());
            for id in &manifest.case_ids {
                let case = corpus.get(id).ok_or_else(|| {
                    CliError::Validation(format!("manifest names unknown case {id:?}"))
                })?;
                cases.push(case.clone());
            }
            Ok(cases)
        }
        None => Ok(corpus.cases),
    }
}

pub fn run(args: Args) -> Result<(), CliError> {
    let config = RunConfig::load(args.config)?;
    let (chat, embedder) = config.build_providers(args.offline)?;

    // Optional record/replay capture around whatever provider is configured.
    let recorder = args
        .record
        .map(|_| Arc::new(RecordingProvider::new(chat.clone())));
    let chat: Arc<dyn jurysim_core::gateway::ChatProvider> = match &recorder {
        Some(rec) => rec.clone(),
        None => chat,
    };

    let base = match args.precedents.or(config.paths.precedent_base.as_deref()) {
        Some(dir) => Some(PrecedentBase::load(dir)?),
        None => None,
    };
    let pool: Vec<JurorProfile> = match &config.paths.persona_pool {
        Some(path) => load_persona_pool(path)
            .map_err(|e| CliError::Usage(format!("persona pool {}: {e}", path.display())))?,
        None => default_persona_pool(),
    };

    let cases = load_cases(&args)?;
    std::fs::create_dir_all(args.out)?;
    let params = config.simulation_params();
    let generation = config.generation_params();

    let jobs = args.jobs.max(1);
    let pool_ref = &pool;
    let base_ref = base.as_ref();
    let run_one = |case: &DisputeCase| -> Result<String, CliError> {
        let gateway = Gateway::new(chat.clone(), embedder.clone())
            .with_params(generation)
            .with_full_audit(args.log_full);
        let result = run_simulation(case, params.clone(), &gateway, base_ref, pool_ref)?;
        let path = args.out.join(format!("{}.json", case.case_id));
        std::fs::write(&path, result.to_canonical_json())?;
        Ok(format!(
            "{}: {} round(s), verdict {}, split {}:{}, {} tokens",
            result.case_id,
            result.rounds.len(),
            result.final_verdict,
            result.final_split.buyer,
            result.final_split.seller,
            result.tokens.total_tokens()
        ))
    };

    let lines: Vec<Result<String, CliError>> = if jobs == 1 {
        cases.iter().map(run_one).collect()
    } else {
        let thread_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        thread_pool.install(|| cases.par_iter().map(run_one).collect())
    };
    for line in lines {
        println!("{}", line?);
    }

    if let (Some(recorder), Some(path)) = (&recorder, args.record) {
        recorder.write_transcript(path)?;
        println!("recorded transcript: {}", path.display());
    }
    Ok(())
}
