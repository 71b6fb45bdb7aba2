//! Training-data pipelines: teacher-trajectory curation for SFT and rollout
//! reward computation for RL export. Both are thin compositions of the
//! orchestrator with the integration and reward math, shaped so callers can
//! stream results record by record.

use crate::data::{GroupExport, RewardExportRecord};
use crate::integrate::select_sft_trajectory;
use crate::integrate::SftTuple;
use crate::orchestrator::{DocRef, Orchestrator, OrchestratorError};
use crate::reward::{compute_sample_rewards, DocLabel, RewardConfig, RewardError, RolloutGroup};
use crate::rubric::{render_prompt, RelevanceRubric, Trajectory};

/// Outcome of curating one (query, document) pair from a teacher backend.
#[derive(Debug)]
pub enum CurationOutcome {
    Curated(CuratedPair),
    /// Every teacher sample failed to parse; the pair is dropped.
    Dropped { discarded: u32 },
}

/// One curated SFT record plus the full trajectory group it was selected
/// from, so callers can audit the closest-to-mean invariant.
#[derive(Debug)]
pub struct CuratedPair {
    pub tuple: SftTuple,
    pub group: Vec<Trajectory>,
    /// Teacher samples discarded before integration (unparseable after
    /// retries).
    pub discarded: u32,
}

/// Sample `k` teacher trajectories for one pair, integrate the parseable
/// ones, and keep the trajectory closest to the integrated score.
pub async fn curate_sft_pair(
    orchestrator: &Orchestrator,
    rubric: &RelevanceRubric,
    query_id: &str,
    query: &str,
    doc: DocRef<'_>,
    k: usize,
) -> Result<CurationOutcome, OrchestratorError> {
    let prompt = render_prompt(rubric, query, doc.text)?;
    let sampled = orchestrator
        .sample_completions(&prompt, query_id, doc.doc_id, k)
        .await?;
    if sampled.accepted.is_empty() {
        return Ok(CurationOutcome::Dropped {
            discarded: sampled.failure_count,
        });
    }
    let group: Vec<Trajectory> = sampled
        .accepted
        .iter()
        .map(|sample| {
            Trajectory::new(sample.completion.text.clone(), sample.score, None)
                .expect("parsed scores are in range")
        })
        .collect();
    let selection = select_sft_trajectory(&group)?;
    let tuple = SftTuple {
        query_id: query_id.to_string(),
        doc_id: doc.doc_id.to_string(),
        prompt,
        trajectory: group[selection.index].clone(),
        integrated: selection.integrated,
    };
    Ok(CurationOutcome::Curated(CuratedPair {
        tuple,
        group,
        discarded: sampled.failure_count,
    }))
}

/// Roll out `n` trajectories for the positive and negative documents of one
/// training sample. Unparseable completions are kept (scored `None`) so the
/// reward stage can punish them.
pub async fn rollout_sample(
    orchestrator: &Orchestrator,
    rubric: &RelevanceRubric,
    query_id: &str,
    query: &str,
    positive: DocRef<'_>,
    negative: DocRef<'_>,
    n: usize,
) -> Result<(RolloutGroup, RolloutGroup), OrchestratorError> {
    let pos_prompt = render_prompt(rubric, query, positive.text)?;
    let neg_prompt = render_prompt(rubric, query, negative.text)?;
    let (pos_trajectories, neg_trajectories) = futures::future::try_join(
        orchestrator.sample_rollouts(&pos_prompt, query_id, positive.doc_id, n),
        orchestrator.sample_rollouts(&neg_prompt, query_id, negative.doc_id, n),
    )
    .await?;
    let pos = RolloutGroup {
        query_id: query_id.to_string(),
        doc_id: positive.doc_id.to_string(),
        label: DocLabel::Positive,
        trajectories: pos_trajectories,
    };
    let neg = RolloutGroup {
        query_id: query_id.to_string(),
        doc_id: negative.doc_id.to_string(),
        label: DocLabel::Negative,
        trajectories: neg_trajectories,
    };
    Ok((pos, neg))
}

/// Compute rewards for one rollout pair and assemble the trainer-ready
/// export record.
pub fn compute_reward_export(
    pos: &RolloutGroup,
    neg: &RolloutGroup,
    config: &RewardConfig,
) -> Result<RewardExportRecord, RewardError> {
    let (pos_record, neg_record) = compute_sample_rewards(pos, neg, config)?;
    Ok(RewardExportRecord {
        query_id: pos.query_id.clone(),
        alpha: config.alpha(),
        tau: config.tau(),
        positive: GroupExport::new(pos, pos_record),
        negative: GroupExport::new(neg, neg_record),
    })
}

/// Aggregate statistics over an export run.
#[derive(Debug, Default, Clone, Copy)]
pub struct RewardStats {
    pub samples: usize,
    pub groups: usize,
    /// Groups whose intra-document reward pruned to all zeros.
    pub pruned_groups: usize,
    composite_sum: f64,
    composite_count: usize,
}

impl RewardStats {
    pub fn observe(&mut self, record: &RewardExportRecord) {
        self.samples += 1;
        for group in [&record.positive, &record.negative] {
            self.groups += 1;
            if group.intra.iter().all(|&r| r == 0.0) {
                self.pruned_groups += 1;
            }
            self.composite_sum += group.composite.iter().sum::<f64>();
            self.composite_count += group.composite.len();
        }
    }

    pub fn pruning_rate(&self) -> f64 {
        if self.groups == 0 {
            0.0
        } else {
            self.pruned_groups as f64 / self.groups as f64
        }
    }

    pub fn mean_composite(&self) -> f64 {
        if self.composite_count == 0 {
            0.0
        } else {
            self.composite_sum / self.composite_count as f64
        }
    }
}
