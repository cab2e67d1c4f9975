use std::path::Path;

use jurysim_core::case::{difficulty_of, VerdictLabel};
use jurysim_core::corpus::load_corpus;
use jurysim_core::jury::SimulationResult;
use jurysim_core::metrics::{breakdown, metrics_report, BreakdownAxis, PredictionRecord};

use super::{CliError, Manifest};

fn load_results(dir: &Path) -> Result<Vec<SimulationResult>, CliError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no result files under {}",
            dir.display()
        )));
    }
    let mut results = Vec::with_capacity(files.len());
    for file in files {
        let text = std::fs::read_to_string(&file)?;
        let result: SimulationResult = serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!("bad result file {}: {e}", file.display()))
        })?;
        results.push(result);
    }
    Ok(results)
}

pub fn run(
    results_dir: &Path,
    corpus_path: &Path,
    manifest: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let results = load_results(results_dir)?;
    let (corpus, _) = load_corpus(corpus_path)?;
    let keep: Option<Vec<String>> = match manifest {
        Some(path) => Some(Manifest::load(path)?.case_ids),
        None => None,
    };

    let mut records = Vec::new();
    for result in &results {
        if keep
            .as_ref()
            .is_some_and(|ids| !ids.contains(&result.case_id))
        {
            continue;
        }
        let case = corpus.get(&result.case_id).ok_or_else(|| {
            CliError::Validation(format!(
                "result {} has no case in the corpus",
                result.case_id
            ))
        })?;
        let votes = case.ground_truth.ok_or_else(|| {
            CliError::Validation(format!("case {} has no ground-truth label", result.case_id))
        })?;
        let record = PredictionRecord {
            case_id: result.case_id.clone(),
            predicted: result.final_verdict,
            predicted_split: (
                result.final_split.buyer as u32,
                result.final_split.seller as u32,
            ),
            actual: votes.winner(),
            actual_split: (votes.buyer_votes, votes.seller_votes),
            category: case.meta.category.as_ref().map(|c| c.top_level.clone()),
            difficulty: difficulty_of(votes).margin,
            rounds_used: result.rounds.len(),
            tokens_used: result.tokens.total_tokens(),
        };
        record
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::Validation(
            "no result matched the corpus/manifest".into(),
        ));
    }

    let report = metrics_report(&records).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Usage(format!("report serialization: {e}")))?;
    text.push('\n');
    std::fs::write(out.join("metrics.json"), text)?;

    for axis in BreakdownAxis::ALL {
        let rows = breakdown(&records, axis);
        let path = out.join(format!("breakdown_{}.csv", axis.as_str()));
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        w.write_record(["bucket", "cases", "correct", "accuracy"])
            .and_then(|()| {
                rows.iter().try_for_each(|row| {
                    w.write_record([
                        row.bucket.as_str(),
                        &row.cases.to_string(),
                        &row.correct.to_string(),
                        &row.accuracy.to_string(),
                    ])
                })
            })
            .map_err(|e| CliError::Usage(format!("csv write: {e}")))?;
        w.flush()?;
    }

    let predicted_seller = records
        .iter()
        .filter(|r| r.predicted == VerdictLabel::Seller)
        .count();
    println!(
        "evaluated {} case(s): acc {:.4}, weighted F1 {:.4}, macro F1 {:.4}, MAE {:.4}, RMSE {:.4}, tokens {}, predicted seller {}x",
        report.cases,
        report.accuracy,
        report.weighted_f1,
        report.macro_f1,
        report.mae,
        report.rmse,
        report.token_total,
        predicted_seller
    );
    Ok(())
}
