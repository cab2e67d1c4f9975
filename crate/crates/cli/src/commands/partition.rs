use std::path::Path;

use jurysim_core::corpus::{load_corpus, stratified_partition, PartitionSpec};

use super::{CliError, Manifest};

fn parse_ratios(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad --ratios {text:?}: {e}")))?;
    if parts.len() != 3 || parts.iter().any(|r| *r < 0.0) || parts.iter().sum::<f64>() <= 0.0 {
        return Err(CliError::Usage(format!(
            "--ratios needs three non-negative weights with a positive sum, got {text:?}"
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

pub fn run(corpus_path: &Path, ratios: &str, seed: u64, out: &Path) -> Result<(), CliError> {
    let ratios = parse_ratios(ratios)?;
    let (corpus, report) = load_corpus(corpus_path)?;
    if !report.is_clean() {
        return Err(CliError::Validation(format!(
            "{} file(s) failed to load; run `jurysim validate` first",
            report.issues.len()
        )));
    }
    let spec = PartitionSpec { ratios, seed };
    let partition = stratified_partition(&corpus, &spec)?;

    std::fs::create_dir_all(out)?;
    for (name, ids) in [
        ("train", &partition.train),
        ("val", &partition.val),
        ("test", &partition.test),
    ] {
        Manifest {
            name: name.to_string(),
            seed,
            ratios,
            source_digest: corpus.source_digest.clone(),
            case_ids: ids.clone(),
        }
        .save(&out.join(format!("{name}.json")))?;
    }
    let (train, val, test) = partition.sizes();
    println!(
        "partitioned {} cases: train {train} / val {val} / test {test}",
        corpus.len()
    );
    Ok(())
}
