use std::path::Path;

use jurysim_core::case::DisputeCase;
use jurysim_core::config::RunConfig;
use jurysim_core::corpus::load_corpus;
use jurysim_core::precedent::{build_base, DEFAULT_PRIOR_GUIDELINES};

use super::{CliError, Manifest};

pub fn run(
    corpus_path: &Path,
    manifest: Option<&Path>,
    config_path: &Path,
    out: &Path,
    offline: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let gateway = config.build_gateway(offline)?;
    let (corpus, _) = load_corpus(corpus_path)?;

    // Manifest order is the construction order; without one, corpus order
    // (sorted by case_id).
    let cases: Vec<&DisputeCase> = match manifest {
        Some(path) => {
            let manifest = Manifest::load(path)?;
            let mut selected = Vec::with_capacity(manifest.case_ids.len());
            for id in &manifest.case_ids {
                let case = corpus.get(id).ok_or_else(|| {
                    CliError::Validation(format!("manifest names unknown case {id:?}"))
                })?;
                selected.push(case);
            }
            selected
        }
        None => corpus.cases.iter().collect(),
    };

    let (base, issues) = build_base(&cases, &gateway, DEFAULT_PRIOR_GUIDELINES)?;
    base.save(out)?;
    if !issues.is_empty() {
        let mut text = serde_json::to_string_pretty(&issues)
            .map_err(|e| CliError::Usage(format!("issue serialization: {e}")))?;
        text.push('\n');
        std::fs::write(out.join("build_issues.json"), text)?;
    }
    println!(
        "built precedent base: {} record(s), {} skipped, dimension {}",
        base.len(),
        issues.len(),
        base.dimension()
    );
    Ok(())
}
