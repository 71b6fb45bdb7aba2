//! Pointwise reranking orchestration.
//!
//! Every (query, candidate) pair is scored independently: the rubric prompt
//! is rendered once per pair, K completions are sampled with per-sample
//! retry budgets, parsed scores are integrated, and candidates are sorted by
//! integrated score. A semaphore caps in-flight backend requests across all
//! pairs and samples; results are assembled by (pair, sample) key, so
//! request completion order never affects output.

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::backend::{BackendError, Completion, SampleKey, ScoringBackend};
use crate::integrate::{integrate_scores, IntegratedScore, IntegrationError, Weighting};
use crate::reward::RolloutTrajectory;
use crate::rubric::{parse_score, render_prompt, PromptText, RelevanceRubric, RubricError, Trajectory};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Rubric(#[from] RubricError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("all {failure_count} sampling attempts failed for {query_id}/{doc_id}")]
    AllSamplesFailed {
        query_id: String,
        doc_id: String,
        failure_count: u32,
    },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

/// Backend and sampling configuration for a scoring run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringBackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// K: completions sampled per (query, document) pair.
    pub samples_per_pair: usize,
    pub max_retries_per_sample: u32,
    pub concurrency_limit: usize,
    pub request_timeout: Duration,
}

impl ScoringBackendConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.samples_per_pair < 1 {
            return Err(OrchestratorError::InvalidConfig(
                "samples_per_pair must be at least 1".into(),
            ));
        }
        if self.concurrency_limit < 1 {
            return Err(OrchestratorError::InvalidConfig(
                "concurrency_limit must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(OrchestratorError::InvalidConfig(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for ScoringBackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            model_name: String::new(),
            temperature: 0.0,
            samples_per_pair: 1,
            max_retries_per_sample: 2,
            concurrency_limit: 8,
            request_timeout: Duration::from_secs(120),
        }
    }
}

/// A borrowed (doc_id, text) pair to score against a query.
#[derive(Debug, Clone, Copy)]
pub struct DocRef<'a> {
    pub doc_id: &'a str,
    pub text: &'a str,
}

/// One accepted sample: the raw completion plus its parsed score.
#[derive(Debug, Clone)]
pub struct SampledCompletion {
    pub sample_index: u32,
    pub completion: Completion,
    pub score: u8,
}

/// Result of sampling up to `n` completions for one pair.
#[derive(Debug, Clone)]
pub struct SampledSet {
    pub accepted: Vec<SampledCompletion>,
    /// Attempts that produced no usable score (transport failures that were
    /// retried away do count; they were billed).
    pub failure_count: u32,
}

/// The audited scoring outcome for one (query, document) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub query_id: String,
    pub doc_id: String,
    pub prompt_sha256: String,
    /// `None` when every sample failed; such pairs rank last.
    pub integrated: Option<IntegratedScore>,
    pub trajectories: Vec<Trajectory>,
    pub failure_count: u32,
}

impl ScoredCandidate {
    pub fn is_failed(&self) -> bool {
        self.integrated.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    /// `None` marks a pair whose samples all failed; failure is a distinct
    /// state from a genuine 0 score.
    pub score: Option<f64>,
}

/// A query's candidates ordered by integrated score, descending. Ties and
/// failed pairs preserve first-stage candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

enum SlotOutcome {
    Accepted {
        sample: SampledCompletion,
        failures: u32,
    },
    Exhausted {
        failures: u32,
    },
}

pub struct Orchestrator {
    backend: Arc<dyn ScoringBackend>,
    config: ScoringBackendConfig,
    weighting: Weighting,
    semaphore: Arc<Semaphore>,
}

impl Orchestrator {
    pub fn new(
        backend: Arc<dyn ScoringBackend>,
        config: ScoringBackendConfig,
        weighting: Weighting,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let semaphore = Arc::new(Semaphore::new(config.concurrency_limit));
        Ok(Self {
            backend,
            config,
            weighting,
            semaphore,
        })
    }

    pub fn config(&self) -> &ScoringBackendConfig {
        &self.config
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    async fn attempt(
        &self,
        prompt: &PromptText,
        key: SampleKey<'_>,
    ) -> Result<Completion, BackendError> {
        let _permit = self
            .semaphore
            .acquire()
            .await
            .expect("scoring semaphore is never closed");
        self.backend.complete(prompt, key).await
    }

    /// Run one sample slot: up to `1 + max_retries_per_sample` attempts,
    /// retrying transport hiccups and unparseable completions alike.
    /// Non-retryable backend errors propagate immediately.
    async fn run_slot(
        &self,
        prompt: &PromptText,
        query_id: &str,
        doc_id: &str,
        sample_index: u32,
    ) -> Result<SlotOutcome, BackendError> {
        let mut failures = 0u32;
        for attempt in 0..=self.config.max_retries_per_sample {
            let key = SampleKey {
                query_id,
                doc_id,
                sample_index,
                attempt,
            };
            match self.attempt(prompt, key).await {
                Ok(completion) => match parse_score(&completion.text) {
                    Ok(score) => {
                        return Ok(SlotOutcome::Accepted {
                            sample: SampledCompletion {
                                sample_index,
                                completion,
                                score,
                            },
                            failures,
                        })
                    }
                    Err(_) => failures += 1,
                },
                Err(err) if err.is_retryable() => failures += 1,
                Err(err) => return Err(err),
            }
        }
        Ok(SlotOutcome::Exhausted { failures })
    }

    /// Sample up to `n` parseable completions for one pair. Slots run
    /// concurrently under the global in-flight cap; accepted samples come
    /// back in slot order regardless of completion order.
    pub async fn sample_completions(
        &self,
        prompt: &PromptText,
        query_id: &str,
        doc_id: &str,
        n: usize,
    ) -> Result<SampledSet, BackendError> {
        let slots = (0..n as u32).map(|i| self.run_slot(prompt, query_id, doc_id, i));
        let outcomes = futures::future::try_join_all(slots).await?;
        let mut accepted = Vec::with_capacity(n);
        let mut failure_count = 0u32;
        for outcome in outcomes {
            match outcome {
                SlotOutcome::Accepted { sample, failures } => {
                    accepted.push(sample);
                    failure_count += failures;
                }
                SlotOutcome::Exhausted { failures } => failure_count += failures,
            }
        }
        Ok(SampledSet {
            accepted,
            failure_count,
        })
    }

    /// Sample exactly `n` rollout trajectories, keeping unparseable
    /// completions (scored `None`) instead of retrying them: format failures
    /// are themselves training signal for the reward stage. Transport errors
    /// are still retried within the per-sample budget.
    pub async fn sample_rollouts(
        &self,
        prompt: &PromptText,
        query_id: &str,
        doc_id: &str,
        n: usize,
    ) -> Result<Vec<RolloutTrajectory>, BackendError> {
        let slots = (0..n as u32).map(|sample_index| async move {
            let mut last_err: Option<BackendError> = None;
            for attempt in 0..=self.config.max_retries_per_sample {
                let key = SampleKey {
                    query_id,
                    doc_id,
                    sample_index,
                    attempt,
                };
                match self.attempt(prompt, key).await {
                    Ok(completion) => {
                        let score = parse_score(&completion.text).ok();
                        return Ok(RolloutTrajectory {
                            text: completion.text,
                            score,
                        });
                    }
                    Err(err) if err.is_retryable() => last_err = Some(err),
                    Err(err) => return Err(err),
                }
            }
            Err(last_err.expect("loop ran at least once"))
        });
        futures::future::try_join_all(slots).await
    }

    /// Score one (query, document) pair: K samples, parsed and integrated.
    pub async fn score_pair(
        &self,
        rubric: &RelevanceRubric,
        query_id: &str,
        query: &str,
        doc: DocRef<'_>,
    ) -> Result<ScoredCandidate, OrchestratorError> {
        let candidate = self.score_pair_lenient(rubric, query_id, query, doc).await?;
        if candidate.is_failed() {
            return Err(OrchestratorError::AllSamplesFailed {
                query_id: candidate.query_id,
                doc_id: candidate.doc_id,
                failure_count: candidate.failure_count,
            });
        }
        Ok(candidate)
    }

    /// Like [`score_pair`](Self::score_pair) but reports an all-samples-failed
    /// pair as a candidate with `integrated: None` instead of an error, which
    /// is what ranking wants.
    async fn score_pair_lenient(
        &self,
        rubric: &RelevanceRubric,
        query_id: &str,
        query: &str,
        doc: DocRef<'_>,
    ) -> Result<ScoredCandidate, OrchestratorError> {
        let prompt = render_prompt(rubric, query, doc.text)?;
        let prompt_sha256 = sha256_hex(prompt.as_str());
        let sampled = self
            .sample_completions(&prompt, query_id, doc.doc_id, self.config.samples_per_pair)
            .await?;

        let mut trajectories = Vec::with_capacity(sampled.accepted.len());
        for sample in &sampled.accepted {
            let weight = match self.weighting {
                Weighting::Uniform => None,
                Weighting::Likelihood => sample.completion.likelihood_weight(),
            };
            let trajectory = Trajectory::new(sample.completion.text.clone(), sample.score, weight)
                .expect("parsed score is in range and weights are positive");
            trajectories.push(trajectory);
        }
        let integrated = if trajectories.is_empty() {
            None
        } else {
            Some(integrate_scores(&trajectories, self.weighting)?)
        };
        Ok(ScoredCandidate {
            query_id: query_id.to_string(),
            doc_id: doc.doc_id.to_string(),
            prompt_sha256,
            integrated,
            trajectories,
            failure_count: sampled.failure_count,
        })
    }

    /// Re-rank a query's candidates. All pairs are scored independently and
    /// concurrently; the output is sorted by integrated score descending,
    /// stable with respect to the input order on ties, with failed pairs
    /// last (also in input order). Non-retryable backend errors abort the
    /// whole query.
    pub async fn rerank(
        &self,
        rubric: &RelevanceRubric,
        query_id: &str,
        query: &str,
        candidates: &[DocRef<'_>],
    ) -> Result<(RankedList, Vec<ScoredCandidate>), OrchestratorError> {
        let pairs = candidates
            .iter()
            .map(|doc| self.score_pair_lenient(rubric, query_id, query, *doc));
        let scored = futures::future::try_join_all(pairs).await?;
        let ranked = rank_candidates(query_id, &scored);
        Ok((ranked, scored))
    }
}

/// Sort scored candidates into a ranked list: integrated score descending,
/// input order on exact ties, failed pairs after all scored pairs.
pub fn rank_candidates(query_id: &str, scored: &[ScoredCandidate]) -> RankedList {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = scored[a].integrated.map(|i| i.value);
        let sb = scored[b].integrated.map(|i| i.value);
        match (sa, sb) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    });
    RankedList {
        query_id: query_id.to_string(),
        entries: order
            .into_iter()
            .map(|i| RankedEntry {
                doc_id: scored[i].doc_id.clone(),
                score: scored[i].integrated.map(|s| s.value),
            })
            .collect(),
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
