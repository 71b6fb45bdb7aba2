//! `compute-rewards`: composite rewards for rollout groups, either freshly
//! sampled from a backend or loaded from a rollout file, exported one record
//! per training sample.

use std::time::Instant;

use serde::Serialize;

use rubric_rerank::data::{load_rollout_pairs, load_training_samples, write_reward_export, RewardExportRecord};
use rubric_rerank::orchestrator::{DocRef, Orchestrator, OrchestratorError};
use rubric_rerank::pipeline::{compute_reward_export, rollout_sample, RewardStats};
use rubric_rerank::reward::{RewardConfig, RewardError};

use crate::config::{self, ConfigFile, ResolvedBackend};
use crate::output::{write_json, OutputDir};
use crate::{backends, commands, CliError, CliResult, ComputeRewardsArgs, DatasetArgs};

#[derive(Serialize)]
struct RewardSummary {
    alpha: f64,
    tau: f64,
    rollouts_per_doc: usize,
    source: String,
    samples_in: usize,
    samples_exported: usize,
    samples_skipped: usize,
    pruning_rate: f64,
    mean_composite: f64,
}

pub async fn run(args: ComputeRewardsArgs) -> CliResult<()> {
    let started = Instant::now();
    let file = ConfigFile::load(args.backend.config.as_deref())?;
    let alpha = args.alpha.or(file.reward.alpha).unwrap_or(RewardConfig::DEFAULT_ALPHA);
    let tau = args.tau.or(file.reward.tau).unwrap_or(RewardConfig::DEFAULT_TAU);
    let n = args
        .rollouts_per_doc
        .or(file.reward.rollouts)
        .unwrap_or(config::DEFAULT_ROLLOUTS);
    let reward_config = RewardConfig::new(alpha, tau, n).map_err(|e| match e {
        RewardError::AlphaOutOfRange(_) => {
            CliError::validation(format!("--alpha must lie strictly between 0 and 1, got {alpha}"))
        }
        RewardError::InvalidTau(_) => {
            CliError::validation(format!("--tau must be non-negative, got {tau}"))
        }
        RewardError::InvalidRolloutCount => {
            CliError::validation("--rollouts-per-doc must be at least 1")
        }
        other => CliError::validation(other.to_string()),
    })?;

    let mut stats = RewardStats::default();
    let mut records: Vec<RewardExportRecord> = Vec::new();
    let mut skipped = 0usize;
    let samples_in: usize;
    let source: String;

    if let Some(rollouts_path) = &args.rollouts {
        source = format!("file:{}", rollouts_path.display());
        let pairs = load_rollout_pairs(rollouts_path)
            .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
        samples_in = pairs.len();
        for pair in pairs {
            let query_id = pair.query_id.clone();
            let (pos, neg) = pair.into_groups();
            match compute_reward_export(&pos, &neg, &reward_config) {
                Ok(record) => {
                    stats.observe(&record);
                    records.push(record);
                }
                Err(err) => {
                    skipped += 1;
                    eprintln!("skipping sample {query_id}: {err}");
                }
            }
        }
    } else {
        let dataset_args = resolve_dataset_args(&args.dataset)?;
        let samples_path = args.samples_file.as_ref().ok_or_else(|| {
            CliError::validation("either --rollouts or --samples-file (with a dataset) is required")
        })?;
        let resolved = ResolvedBackend::resolve(&args.backend, &file);
        let scoring = resolved.scoring_config(n);
        let dataset = commands::load_dataset_from_args(&dataset_args, config::DEFAULT_DEPTH)?;
        let samples = load_training_samples(samples_path)
            .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
        samples_in = samples.len();
        source = format!("backend:{}", scoring.endpoint_url);
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

        for sample in &samples {
            let (Some(query), Some(pos_doc), Some(neg_doc)) = (
                dataset.query(&sample.query_id),
                dataset.document(&sample.positive_doc_id),
                dataset.document(&sample.negative_doc_id),
            ) else {
                skipped += 1;
                eprintln!(
                    "skipping sample {}: unresolved query or documents",
                    sample.query_id
                );
                continue;
            };
            let rolled = rollout_sample(
                &orchestrator,
                &dataset.rubric,
                &query.query_id,
                &query.text,
                DocRef { doc_id: &pos_doc.doc_id, text: &pos_doc.text },
                DocRef { doc_id: &neg_doc.doc_id, text: &neg_doc.text },
                n,
            )
            .await;
            match rolled {
                Ok((pos, neg)) => match compute_reward_export(&pos, &neg, &reward_config) {
                    Ok(record) => {
                        stats.observe(&record);
                        records.push(record);
                    }
                    Err(err) => {
                        skipped += 1;
                        eprintln!("skipping sample {}: {err}", sample.query_id);
                    }
                },
                Err(OrchestratorError::Backend(err)) => {
                    return Err(CliError::Runtime(anyhow::Error::new(err).context(format!(
                        "rollout backend failed on sample {}",
                        sample.query_id
                    ))));
                }
                Err(other) => {
                    skipped += 1;
                    eprintln!("skipping sample {}: {other}", sample.query_id);
                }
            }
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    let rewards_path = out.file("rewards.jsonl");
    let summary_path = out.file("summary.json");
    let exported = write_reward_export(&rewards_path, records)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let summary = RewardSummary {
        alpha,
        tau,
        rollouts_per_doc: n,
        source,
        samples_in,
        samples_exported: exported,
        samples_skipped: skipped,
        pruning_rate: stats.pruning_rate(),
        mean_composite: stats.mean_composite(),
    };
    write_json(&summary_path, &summary)?;
    out.write_manifest()?;

    println!(
        "exported rewards for {}/{} samples (pruning rate {:.3}, mean composite {:.4}) in {:.2?}",
        summary.samples_exported,
        summary.samples_in,
        summary.pruning_rate,
        summary.mean_composite,
        started.elapsed()
    );
    Ok(())
}

fn resolve_dataset_args(opt: &crate::DatasetArgsOpt) -> CliResult<DatasetArgs> {
    let opt = opt.clone();
    let (Some(root), Some(name)) = (opt.dataset_root, opt.dataset) else {
        return Err(CliError::validation(
            "--dataset-root and --dataset are required when sampling rollouts from a backend",
        ));
    };
    Ok(DatasetArgs {
        dataset_root: root,
        dataset: name,
        rubrics: opt.rubrics,
        length_control: opt.length_control,
        strict: opt.strict,
    })
}
