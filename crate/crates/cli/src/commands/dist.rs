//! `score-dist`: bucket integrated scores from an audit file into a
//! positive/negative histogram against qrels.

use std::fmt::Write as _;

use rubric_rerank::data::{load_audit_file, load_qrels};
use rubric_rerank::metrics::{score_distribution, ScorePoint};

use crate::output::OutputDir;
use crate::{CliError, CliResult, ScoreDistArgs};

pub fn run(args: ScoreDistArgs) -> CliResult<()> {
    let bucket_width = args.bucket_width.unwrap_or(10);
    let audits =
        load_audit_file(&args.audit).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let qrels = load_qrels(&args.qrels).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;

    let mut failed_pairs = 0usize;
    let points: Vec<ScorePoint> = audits
        .iter()
        .filter_map(|audit| match &audit.integrated {
            Some(integrated) => Some(ScorePoint {
                query_id: audit.query_id.clone(),
                doc_id: audit.doc_id.clone(),
                score: integrated.value,
            }),
            None => {
                failed_pairs += 1;
                None
            }
        })
        .collect();
    let dist = score_distribution(&points, &qrels, bucket_width)
        .map_err(|e| CliError::validation(e.to_string()))?;

    let mut out = OutputDir::create(&args.out)?;
    let table_path = out.file("distribution.tsv");
    let mut table = String::from("bucket_low\tbucket_high\tclass\tcount\n");
    for (low, high, class, count) in dist.tabular() {
        writeln!(table, "{low}\t{high}\t{class}\t{count}").expect("string write");
    }
    std::fs::write(&table_path, table.as_bytes())
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", table_path.display())))?;
    out.write_manifest()?;

    println!(
        "score distribution over {} positives / {} negatives (width {}, {} unjudged skipped, {} failed pairs)",
        dist.total_positive(),
        dist.total_negative(),
        bucket_width,
        dist.skipped_unjudged,
        failed_pairs
    );
    println!(
        "positives above 60: {:.1}%  negatives below 40: {:.1}%",
        dist.positive_fraction_above(60) * 100.0,
        dist.negative_fraction_below(40) * 100.0
    );
    Ok(())
}
