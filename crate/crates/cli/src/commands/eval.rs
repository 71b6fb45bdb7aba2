//! `eval`: nDCG@k for a run file against qrels.

use rubric_rerank::data::{load_qrels, load_run_file};
use rubric_rerank::metrics::{evaluate_run, MetricsError};

use crate::config::{ConfigFile, DEFAULT_EVAL_K};
use crate::output::{write_json, OutputDir};
use crate::{CliError, CliResult, EvalArgs};

pub fn run(args: EvalArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let k = args.k.or(file.eval.k).unwrap_or(DEFAULT_EVAL_K);
    if k < 1 {
        return Err(CliError::validation("k must be at least 1"));
    }
    let tag = args.tag.clone().unwrap_or_else(|| {
        args.run
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string())
    });
    let rankings =
        load_run_file(&args.run).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let qrels = load_qrels(&args.qrels).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let report = evaluate_run(&rankings, &qrels, k, &tag, args.strict).map_err(|e| match e {
        MetricsError::UnknownQuery { .. } => CliError::validation(e.to_string()),
        other => CliError::Runtime(anyhow::Error::new(other)),
    })?;

    let mut out = OutputDir::create(&args.out)?;
    let report_path = out.file("report.json");
    write_json(&report_path, &report)?;
    out.write_manifest()?;

    println!(
        "nDCG@{k} over {} queries: {:.5} (tag {}, {} zero-relevant)",
        report.per_query.len(),
        report.mean(),
        report.tag,
        report.zero_relevant_queries.len()
    );
    for (query_id, value) in &report.per_query {
        println!("  {query_id}\t{value:.5}");
    }
    Ok(())
}
