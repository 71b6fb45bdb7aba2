//! `rerank`: score every (query, candidate) pair with the rubric prompt and
//! write a run file, an audit trail, and a summary.

use std::time::Instant;

use serde::Serialize;

use rubric_rerank::data::{write_audit_file, write_run_file};
use rubric_rerank::orchestrator::{DocRef, Orchestrator, OrchestratorError, RankedList, ScoredCandidate};

use crate::config::{self, ConfigFile, ResolvedBackend};
use crate::output::{write_json, OutputDir};
use crate::{backends, commands, CliError, CliResult, RerankArgs};

#[derive(Serialize)]
struct QueryAbort {
    query_id: String,
    error: String,
}

#[derive(Serialize)]
struct RerankSummary {
    dataset: String,
    tag: String,
    samples_per_pair: usize,
    weighting: String,
    seed: u64,
    queries_total: usize,
    queries_completed: usize,
    pairs_scored: usize,
    pairs_failed: usize,
    sample_failures: u64,
    dangling_references: usize,
    aborted: Vec<QueryAbort>,
}

pub async fn run(args: RerankArgs) -> CliResult<()> {
    let started = Instant::now();
    let file = ConfigFile::load(args.backend.config.as_deref())?;
    let samples = args
        .samples
        .or(file.rerank.samples)
        .unwrap_or(config::DEFAULT_RERANK_SAMPLES);
    let depth = args.depth.or(file.rerank.depth).unwrap_or(config::DEFAULT_DEPTH);
    let weighting = config::parse_weighting(
        args.weighting.as_deref().or(file.rerank.weighting.as_deref()),
    )?;
    let tag = args
        .tag
        .clone()
        .or(file.rerank.tag.clone())
        .unwrap_or_else(|| config::DEFAULT_TAG.to_string());
    let resolved = ResolvedBackend::resolve(&args.backend, &file);
    let scoring = resolved.scoring_config(samples);

    let dataset = commands::load_dataset_from_args(&args.dataset, depth)?;
    let backend = backends::build(&scoring, resolved.seed, weighting, Some(&dataset.qrels))?;
    let orchestrator = Orchestrator::new(backend, scoring, weighting)
        .map_err(|e| CliError::validation(e.to_string()))?;

    let mut rankings: Vec<RankedList> = Vec::new();
    let mut audits: Vec<ScoredCandidate> = Vec::new();
    let mut aborted: Vec<QueryAbort> = Vec::new();
    for set in &dataset.candidates {
        let Some(query) = dataset.query(&set.query_id) else {
            continue; // dropped as dangling at load time
        };
        let docs: Vec<DocRef<'_>> = set
            .candidates
            .iter()
            .map(|c| {
                let document = dataset
                    .document(&c.doc_id)
                    .expect("candidates are cross-referenced at load");
                DocRef {
                    doc_id: &document.doc_id,
                    text: &document.text,
                }
            })
            .collect();
        match orchestrator
            .rerank(&dataset.rubric, &query.query_id, &query.text, &docs)
            .await
        {
            Ok((ranked, scored)) => {
                rankings.push(ranked);
                audits.extend(scored);
            }
            Err(OrchestratorError::Backend(err)) => aborted.push(QueryAbort {
                query_id: query.query_id.clone(),
                error: err.to_string(),
            }),
            Err(other) => aborted.push(QueryAbort {
                query_id: query.query_id.clone(),
                error: other.to_string(),
            }),
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    let run_path = out.file("run.txt");
    let audit_path = out.file("audit.jsonl");
    let summary_path = out.file("summary.json");
    write_run_file(&run_path, &rankings, &tag)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let pairs_scored = audits.len();
    let pairs_failed = audits.iter().filter(|a| a.is_failed()).count();
    let sample_failures: u64 = audits.iter().map(|a| u64::from(a.failure_count)).sum();
    write_audit_file(&audit_path, audits)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;

    let summary = RerankSummary {
        dataset: dataset.name.clone(),
        tag,
        samples_per_pair: samples,
        weighting: match weighting {
            rubric_rerank::integrate::Weighting::Uniform => "uniform".into(),
            rubric_rerank::integrate::Weighting::Likelihood => "likelihood".into(),
        },
        seed: resolved.seed,
        queries_total: dataset.candidates.len(),
        queries_completed: rankings.len(),
        pairs_scored,
        pairs_failed,
        sample_failures,
        dangling_references: dataset.dangling_references,
        aborted,
    };
    write_json(&summary_path, &summary)?;
    out.write_manifest()?;

    println!(
        "reranked {}/{} queries ({} pairs, {} failed pairs, {} sample failures) in {:.2?}",
        summary.queries_completed,
        summary.queries_total,
        summary.pairs_scored,
        summary.pairs_failed,
        summary.sample_failures,
        started.elapsed()
    );
    if !summary.aborted.is_empty() {
        for abort in &summary.aborted {
            eprintln!("aborted {}: {}", abort.query_id, abort.error);
        }
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} of {} queries aborted; partial results written to {}",
            summary.aborted.len(),
            summary.queries_total,
            args.out.display()
        )));
    }
    Ok(())
}
