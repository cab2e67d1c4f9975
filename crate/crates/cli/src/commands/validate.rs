use std::path::Path;

use jurysim_core::case::validate_case;
use jurysim_core::corpus::load_corpus;

use super::CliError;

pub fn run(corpus_path: &Path, report_path: Option<&Path>) -> Result<(), CliError> {
    let (corpus, mut report) = load_corpus(corpus_path)?;
    for case in &corpus.cases {
        report.merge(validate_case(case));
    }

    if let Some(path) = report_path {
        let mut text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Usage(format!("report serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
    }

    if report.is_clean() {
        println!("validated {} case(s): no issues", corpus.len());
        Ok(())
    } else {
        for issue in &report.issues {
            println!(
                "{}: {:?} at {}: {}",
                issue.case_id.as_deref().unwrap_or("(file)"),
                issue.code,
                issue.location,
                issue.message
            );
        }
        Err(CliError::Validation(format!(
            "validated {} case(s): {} issue(s) found",
            corpus.len(),
            report.issues.len()
        )))
    }
}
