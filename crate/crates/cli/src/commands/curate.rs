//! `curate-sft`: sample teacher trajectories for each training pair, keep
//! the trajectory closest to the integrated score, and export the tuples.

use std::time::Instant;

use serde::Serialize;

use rubric_rerank::data::{load_training_samples, write_sft_export};
use rubric_rerank::integrate::SftTuple;
use rubric_rerank::orchestrator::{DocRef, Orchestrator, OrchestratorError};
use rubric_rerank::pipeline::{curate_sft_pair, CurationOutcome};

use crate::config::{self, ConfigFile, ResolvedBackend};
use crate::output::{write_json, OutputDir};
use crate::{backends, commands, CliError, CliResult, CurateSftArgs};

#[derive(Serialize)]
struct CurateSummary {
    dataset: String,
    teacher_samples: usize,
    seed: u64,
    samples_in: usize,
    pairs_attempted: usize,
    pairs_exported: usize,
    pairs_dropped: usize,
    trajectories_discarded: u64,
    pairs_aborted: usize,
}

pub async fn run(args: CurateSftArgs) -> CliResult<()> {
    let started = Instant::now();
    let file = ConfigFile::load(args.backend.config.as_deref())?;
    let teacher_samples = args
        .teacher_samples
        .or(file.sft.samples)
        .unwrap_or(config::DEFAULT_TEACHER_SAMPLES);
    if teacher_samples < 1 {
        return Err(CliError::validation("teacher-samples must be at least 1"));
    }
    let resolved = ResolvedBackend::resolve(&args.backend, &file);
    let scoring = resolved.scoring_config(teacher_samples);

    let dataset = commands::load_dataset_from_args(&args.dataset, config::DEFAULT_DEPTH)?;
    let samples = load_training_samples(&args.samples_file)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let backend = backends::build(
        &scoring,
        resolved.seed,
        rubric_rerank::integrate::Weighting::Uniform,
        Some(&dataset.qrels),
    )?;
    let orchestrator = Orchestrator::new(
        backend,
        scoring,
        rubric_rerank::integrate::Weighting::Uniform,
    )
    .map_err(|e| CliError::validation(e.to_string()))?;

    let mut tuples: Vec<SftTuple> = Vec::new();
    let mut pairs_attempted = 0usize;
    let mut pairs_dropped = 0usize;
    let mut trajectories_discarded = 0u64;
    let mut pairs_aborted = 0usize;
    for sample in &samples {
        let Some(query) = dataset.query(&sample.query_id) else {
            pairs_aborted += 2;
            eprintln!("skipping sample: unknown query {}", sample.query_id);
            continue;
        };
        for doc_id in [&sample.positive_doc_id, &sample.negative_doc_id] {
            let Some(document) = dataset.document(doc_id) else {
                pairs_aborted += 1;
                eprintln!("skipping pair: unknown document {doc_id}");
                continue;
            };
            pairs_attempted += 1;
            let outcome = curate_sft_pair(
                &orchestrator,
                &dataset.rubric,
                &query.query_id,
                &query.text,
                DocRef {
                    doc_id: &document.doc_id,
                    text: &document.text,
                },
                teacher_samples,
            )
            .await;
            match outcome {
                Ok(CurationOutcome::Curated(pair)) => {
                    trajectories_discarded += u64::from(pair.discarded);
                    tuples.push(pair.tuple);
                }
                Ok(CurationOutcome::Dropped { discarded }) => {
                    pairs_dropped += 1;
                    trajectories_discarded += u64::from(discarded);
                }
                Err(OrchestratorError::Backend(err)) => {
                    return Err(CliError::Runtime(anyhow::Error::new(err).context(format!(
                        "teacher backend failed on {}/{doc_id}",
                        query.query_id
                    ))));
                }
                Err(other) => {
                    pairs_aborted += 1;
                    eprintln!("pair {}/{doc_id} failed: {other}", query.query_id);
                }
            }
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    let sft_path = out.file("sft.jsonl");
    let summary_path = out.file("summary.json");
    let pairs_exported =
        write_sft_export(&sft_path, tuples).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let summary = CurateSummary {
        dataset: dataset.name.clone(),
        teacher_samples,
        seed: resolved.seed,
        samples_in: samples.len(),
        pairs_attempted,
        pairs_exported,
        pairs_dropped,
        trajectories_discarded,
        pairs_aborted,
    };
    write_json(&summary_path, &summary)?;
    out.write_manifest()?;

    println!(
        "curated {} of {} pairs ({} dropped, {} trajectories discarded) in {:.2?}",
        summary.pairs_exported,
        summary.pairs_attempted,
        summary.pairs_dropped,
        summary.trajectories_discarded,
        started.elapsed()
    );
    Ok(())
}
