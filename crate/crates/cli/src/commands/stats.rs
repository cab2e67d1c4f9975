use std::path::Path;

use jurysim_core::corpus::{corpus_stats, load_corpus, write_stats_csv};

use super::CliError;

pub fn run(corpus_path: &Path, out: &Path) -> Result<(), CliError> {
    let (corpus, report) = load_corpus(corpus_path)?;
    if !report.is_clean() {
        return Err(CliError::Validation(format!(
            "{} file(s) failed to load; run `jurysim validate` first",
            report.issues.len()
        )));
    }
    let stats = corpus_stats(&corpus);
    let written = write_stats_csv(&stats, out)?;
    println!(
        "stats over {} case(s): {} seller wins / {} buyer wins",
        stats.total_cases, stats.overall_win_rate.seller_wins, stats.overall_win_rate.buyer_wins
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
