//! Composite rewards over rollout groups for RL training.
//!
//! For each training sample (query, positive doc, negative doc) the policy
//! rolls out N trajectories per document. Two signals are computed per
//! trajectory and combined:
//!
//! - the intra-document reward is a ternary signal favoring scores that
//!   agree with the group's integrated score: the closest trajectory gets
//!   +1, the furthest −1, everyone else 0, and the whole group is pruned to
//!   zero when the largest deviation stays below the threshold tau;
//! - the inter-document reward is the fraction of cross-pair comparisons a
//!   trajectory orders correctly (positive scores strictly above negative
//!   ones);
//! - the composite is `alpha * intra + (1 - alpha) * inter`.
//!
//! Trajectories whose completions never produced a parseable score carry no
//! usable relevance estimate: they receive −1 on all three signals and are
//! excluded from the integrated score and from the inter-reward
//! denominators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("rollout group for {query_id}/{doc_id} is empty")]
    EmptyGroup { query_id: String, doc_id: String },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    AlphaOutOfRange(f64),
    #[error("tau must be non-negative and finite, got {0}")]
    InvalidTau(f64),
    #[error("rollout count must be at least 1")]
    InvalidRolloutCount,
    #[error("rollout score {score} for {query_id}/{doc_id} outside 0..=100")]
    ScoreOutOfRange {
        query_id: String,
        doc_id: String,
        score: u8,
    },
}

/// Whether a rollout document is the sample's positive or negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocLabel {
    Positive,
    Negative,
}

/// One rolled-out trajectory. `score` is `None` when the completion had no
/// parseable score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutTrajectory {
    pub text: String,
    pub score: Option<u8>,
}

/// The N trajectories rolled out for one (query, document) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub query_id: String,
    pub doc_id: String,
    pub label: DocLabel,
    pub trajectories: Vec<RolloutTrajectory>,
}

impl RolloutGroup {
    fn validate(&self) -> Result<(), RewardError> {
        if self.trajectories.is_empty() {
            return Err(RewardError::EmptyGroup {
                query_id: self.query_id.clone(),
                doc_id: self.doc_id.clone(),
            });
        }
        for trajectory in &self.trajectories {
            if let Some(score) = trajectory.score {
                if score > 100 {
                    return Err(RewardError::ScoreOutOfRange {
                        query_id: self.query_id.clone(),
                        doc_id: self.doc_id.clone(),
                        score,
                    });
                }
            }
        }
        Ok(())
    }

    fn parsed_scores(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .filter_map(|t| t.score.map(f64::from))
            .collect()
    }
}

/// Hyperparameters of the composite reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    alpha: f64,
    tau: f64,
    n: usize,
}

impl RewardConfig {
    pub const DEFAULT_ALPHA: f64 = 0.75;
    pub const DEFAULT_TAU: f64 = 20.0;
    pub const DEFAULT_ROLLOUTS: usize = 8;

    pub fn new(alpha: f64, tau: f64, n: usize) -> Result<Self, RewardError> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
            return Err(RewardError::AlphaOutOfRange(alpha));
        }
        if !tau.is_finite() || tau < 0.0 {
            return Err(RewardError::InvalidTau(tau));
        }
        if n < 1 {
            return Err(RewardError::InvalidRolloutCount);
        }
        Ok(Self { alpha, tau, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rollouts(&self) -> usize {
        self.n
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            tau: Self::DEFAULT_TAU,
            n: Self::DEFAULT_ROLLOUTS,
        }
    }
}

/// Per-trajectory reward vectors for one rollout group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardRecord {
    pub query_id: String,
    pub doc_id: String,
    pub label: DocLabel,
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub composite: Vec<f64>,
}

/// Ternary intra-document rewards for one group.
///
/// Distances are measured to the uniform integrated score of the group's
/// parsed trajectories. The group is pruned to all-zero when the largest
/// deviation is below tau, and also when the closest and furthest sets
/// coincide (every parsed score equally distant), which would otherwise
/// reward and punish the same trajectory. Unparseable trajectories get −1.
pub fn intra_reward(group: &RolloutGroup, tau: f64) -> Result<Vec<f64>, RewardError> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(RewardError::InvalidTau(tau));
    }
    group.validate()?;
    let parsed = group.parsed_scores();
    let mut rewards = vec![0.0f64; group.trajectories.len()];
    for (reward, trajectory) in rewards.iter_mut().zip(&group.trajectories) {
        if trajectory.score.is_none() {
            *reward = -1.0;
        }
    }
    if parsed.is_empty() {
        return Ok(rewards);
    }
    let mean = parsed.iter().sum::<f64>() / parsed.len() as f64;
    let distances: Vec<f64> = parsed.iter().map(|s| (s - mean).abs()).collect();
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max < tau || min == max {
        return Ok(rewards);
    }
    let mut parsed_idx = 0;
    for (reward, trajectory) in rewards.iter_mut().zip(&group.trajectories) {
        if trajectory.score.is_none() {
            continue;
        }
        let d = distances[parsed_idx];
        parsed_idx += 1;
        if d == min {
            *reward = 1.0;
        } else if d == max {
            *reward = -1.0;
        }
    }
    Ok(rewards)
}

/// Inter-document rewards for a positive/negative group pair.
///
/// A positive trajectory earns the fraction of the negative group's parsed
/// scores it strictly dominates; a negative trajectory earns the fraction of
/// the positive group's parsed scores that strictly dominate it. Ties count
/// for nothing. Unparseable trajectories get −1; if the opposing group has
/// no parsed trajectories at all, parsed rewards default to 0.
pub fn inter_reward(
    pos: &RolloutGroup,
    neg: &RolloutGroup,
) -> Result<(Vec<f64>, Vec<f64>), RewardError> {
    pos.validate()?;
    neg.validate()?;
    let pos_scores = pos.parsed_scores();
    let neg_scores = neg.parsed_scores();

    let pos_rewards = group_inter_rewards(&pos.trajectories, &neg_scores, |own, other| own > other);
    let neg_rewards = group_inter_rewards(&neg.trajectories, &pos_scores, |own, other| own < other);
    Ok((pos_rewards, neg_rewards))
}

fn group_inter_rewards(
    trajectories: &[RolloutTrajectory],
    opposing: &[f64],
    wins: impl Fn(f64, f64) -> bool,
) -> Vec<f64> {
    trajectories
        .iter()
        .map(|trajectory| match trajectory.score {
            None => -1.0,
            Some(score) => {
                if opposing.is_empty() {
                    0.0
                } else {
                    let own = f64::from(score);
                    let won = opposing.iter().filter(|&&other| wins(own, other)).count();
                    won as f64 / opposing.len() as f64
                }
            }
        })
        .collect()
}

/// The affine combination `alpha * intra + (1 - alpha) * inter`.
pub fn composite_reward(intra: f64, inter: f64, alpha: f64) -> Result<f64, RewardError> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(RewardError::AlphaOutOfRange(alpha));
    }
    Ok(alpha * intra + (1.0 - alpha) * inter)
}

/// Compute intra, inter, and composite rewards for one training sample.
pub fn compute_sample_rewards(
    pos: &RolloutGroup,
    neg: &RolloutGroup,
    config: &RewardConfig,
) -> Result<(RewardRecord, RewardRecord), RewardError> {
    let pos_intra = intra_reward(pos, config.tau)?;
    let neg_intra = intra_reward(neg, config.tau)?;
    let (pos_inter, neg_inter) = inter_reward(pos, neg)?;

    let record = |group: &RolloutGroup, intra: Vec<f64>, inter: Vec<f64>| {
        let composite = intra
            .iter()
            .zip(&inter)
            .map(|(&a, &b)| config.alpha * a + (1.0 - config.alpha) * b)
            .collect();
        RewardRecord {
            query_id: group.query_id.clone(),
            doc_id: group.doc_id.clone(),
            label: group.label,
            intra,
            inter,
            composite,
        }
    };
    Ok((
        record(pos, pos_intra, pos_inter),
        record(neg, neg_intra, neg_inter),
    ))
}

#[cfg(test)]
pub(crate) fn group_from_scores(query_id: &str, doc_id: &str, label: DocLabel, scores: &[u8]) -> RolloutGroup {
    RolloutGroup {
        query_id: query_id.to_string(),
        doc_id: doc_id.to_string(),
        label,
        trajectories: scores
            .iter()
            .map(|&s| RolloutTrajectory {
                text: String::new(),
                score: Some(s),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pos_group(scores: &[u8]) -> RolloutGroup {
        group_from_scores("q", "d+", DocLabel::Positive, scores)
    }

    fn neg_group(scores: &[u8]) -> RolloutGroup {
        group_from_scores("q", "d-", DocLabel::Negative, scores)
    }

    #[test]
    fn agreement_is_pruned() {
        assert_eq!(
            intra_reward(&pos_group(&[70, 70, 70, 70]), 20.0).unwrap(),
            vec![0.0; 4]
        );
    }

    #[test]
    fn closest_and_furthest_are_rewarded() {
        // s̄ = 56.67, distances [33.33, 13.33, 46.67].
        assert_eq!(
            intra_reward(&pos_group(&[90, 70, 10]), 20.0).unwrap(),
            vec![0.0, 1.0, -1.0]
        );
    }

    #[test]
    fn coinciding_extremes_are_suppressed() {
        // Distances are both exactly 20 (>= tau) but the closest and
        // furthest sets are the same.
        assert_eq!(
            intra_reward(&pos_group(&[30, 70]), 20.0).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn unparseable_rollouts_are_punished_and_excluded() {
        let mut group = pos_group(&[90, 70, 10]);
        group.trajectories.insert(
            1,
            RolloutTrajectory {
                text: "no tags".into(),
                score: None,
            },
        );
        // Same math as [90, 70, 10] with a -1 spliced in at index 1.
        assert_eq!(
            intra_reward(&group, 20.0).unwrap(),
            vec![0.0, -1.0, 1.0, -1.0]
        );
    }

    #[test]
    fn inter_counts_strict_dominance() {
        let (p, n) = inter_reward(&pos_group(&[80, 50]), &neg_group(&[60, 40])).unwrap();
        assert_eq!(p, vec![1.0, 0.5]);
        assert_eq!(n, vec![0.5, 1.0]);
    }

    #[test]
    fn perfect_separation_and_exact_tie() {
        let (p, n) = inter_reward(&pos_group(&[90, 90]), &neg_group(&[10, 10])).unwrap();
        assert!(p.iter().chain(&n).all(|&r| r == 1.0));

        let (p, n) = inter_reward(&pos_group(&[50]), &neg_group(&[50])).unwrap();
        assert_eq!(p, vec![0.0]);
        assert_eq!(n, vec![0.0]);
    }

    #[test]
    fn composite_is_the_affine_combination() {
        assert_eq!(composite_reward(1.0, 1.0, 0.75).unwrap(), 1.0);
        assert_eq!(composite_reward(0.0, 0.0, 0.42).unwrap(), 0.0);
        assert_eq!(composite_reward(-1.0, 0.5, 0.75).unwrap(), -0.625);
        assert!(matches!(
            composite_reward(0.0, 0.0, 1.0),
            Err(RewardError::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn sample_rewards_match_hand_derivation() {
        let config = RewardConfig::new(0.75, 20.0, 3).unwrap();
        let (pos, neg) =
            compute_sample_rewards(&pos_group(&[90, 70, 10]), &neg_group(&[60, 40, 50]), &config)
                .unwrap();
        assert_eq!(pos.intra, vec![0.0, 1.0, -1.0]);
        assert_eq!(pos.inter, vec![1.0, 1.0, 0.0]);
        assert_eq!(pos.composite, vec![0.25, 1.0, -0.75]);
        // Negative side: s̄ = 50, max distance 10 < tau, so intra is pruned;
        // each negative is dominated by 2 of 3 positives.
        assert_eq!(neg.intra, vec![0.0, 0.0, 0.0]);
        assert_eq!(neg.inter, vec![2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(
            neg.composite,
            vec![0.25 * (2.0 / 3.0), 0.25 * (2.0 / 3.0), 0.25 * (2.0 / 3.0)]
        );
    }

    #[test]
    fn single_rollout_groups_degenerate_cleanly() {
        let config = RewardConfig::new(0.75, 20.0, 1).unwrap();
        let (pos, neg) =
            compute_sample_rewards(&pos_group(&[80]), &neg_group(&[20]), &config).unwrap();
        assert_eq!(pos.intra, vec![0.0]);
        assert_eq!(neg.intra, vec![0.0]);
        assert_eq!(pos.inter, vec![1.0]);
        assert_eq!(neg.inter, vec![1.0]);
        assert_eq!(pos.composite, vec![0.25]);
        assert_eq!(neg.composite, vec![0.25]);
    }

    #[test]
    fn constant_scores_leave_only_inter() {
        let config = RewardConfig::default();
        let (pos, neg) =
            compute_sample_rewards(&pos_group(&[55, 55, 55]), &neg_group(&[55, 55, 55]), &config)
                .unwrap();
        for record in [&pos, &neg] {
            assert!(record.intra.iter().all(|&r| r == 0.0));
            assert!(record
                .composite
                .iter()
                .zip(&record.inter)
                .all(|(&c, &i)| c == 0.25 * i));
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        assert!(matches!(
            RewardConfig::new(0.0, 20.0, 8),
            Err(RewardError::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            RewardConfig::new(1.0, 20.0, 8),
            Err(RewardError::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            RewardConfig::new(0.5, -1.0, 8),
            Err(RewardError::InvalidTau(_))
        ));
        assert!(matches!(
            RewardConfig::new(0.5, 20.0, 0),
            Err(RewardError::InvalidRolloutCount)
        ));
        let config = RewardConfig::default();
        assert_eq!(config.alpha(), 0.75);
        assert_eq!(config.tau(), 20.0);
        assert_eq!(config.rollouts(), 8);
    }

    #[test]
    fn empty_group_is_rejected() {
        let empty = RolloutGroup {
            query_id: "q".into(),
            doc_id: "d".into(),
            label: DocLabel::Positive,
            trajectories: vec![],
        };
        assert!(matches!(
            intra_reward(&empty, 20.0),
            Err(RewardError::EmptyGroup { .. })
        ));
    }

    proptest! {
        #[test]
        fn unpruned_disjoint_extremes_sum_to_zero(
            scores in prop::collection::vec(0u8..=100, 2..10),
        ) {
            let rewards = intra_reward(&pos_group(&scores), 20.0).unwrap();
            let positives = rewards.iter().filter(|&&r| r == 1.0).count();
            let negatives = rewards.iter().filter(|&&r| r == -1.0).count();
            // When exactly one trajectory is closest and one is furthest the
            // signals cancel.
            if positives == 1 && negatives == 1 {
                prop_assert_eq!(rewards.iter().sum::<f64>(), 0.0);
            }
        }

        #[test]
        fn intra_is_translation_invariant(
            scores in prop::collection::vec(0u8..=60, 1..10),
            shift in 0u8..=40,
        ) {
            let shifted: Vec<u8> = scores.iter().map(|&s| s + shift).collect();
            let a = intra_reward(&pos_group(&scores), 20.0).unwrap();
            let b = intra_reward(&pos_group(&shifted), 20.0).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raising_a_positive_score_never_lowers_its_inter(
            pos_scores in prop::collection::vec(0u8..=99, 1..8),
            neg_scores in prop::collection::vec(0u8..=100, 1..8),
            bump_idx in 0usize..8,
        ) {
            let idx = bump_idx % pos_scores.len();
            let (before, _) = inter_reward(&pos_group(&pos_scores), &neg_group(&neg_scores)).unwrap();
            let mut bumped = pos_scores.clone();
            bumped[idx] += 1;
            let (after, _) = inter_reward(&pos_group(&bumped), &neg_group(&neg_scores)).unwrap();
            prop_assert!(after[idx] >= before[idx]);
        }

        #[test]
        fn equal_size_groups_without_ties_have_equal_inter_mass(
            pos_scores in prop::collection::vec(0u8..=50, 1..8),
        ) {
            // Build a tie-free negative group by offsetting into odd values.
            let neg_scores: Vec<u8> = pos_scores.iter().map(|&s| 2 * (s % 25) + 1).collect();
            let pos_even: Vec<u8> = pos_scores.iter().map(|&s| 2 * s).collect();
            let (p, n) = inter_reward(&pos_group(&pos_even), &neg_group(&neg_scores)).unwrap();
            let p_sum: f64 = p.iter().sum();
            let n_sum: f64 = n.iter().sum();
            prop_assert!((p_sum - n_sum).abs() < 1e-9);
        }

        #[test]
        fn composites_stay_in_the_reward_envelope(
            pos_scores in prop::collection::vec(0u8..=100, 1..6),
            neg_scores in prop::collection::vec(0u8..=100, 1..6),
        ) {
            let config = RewardConfig::default();
            let (pos, neg) = compute_sample_rewards(
                &pos_group(&pos_scores),
                &neg_group(&neg_scores),
                &config,
            ).unwrap();
            for r in pos.composite.iter().chain(&neg.composite) {
                prop_assert!(*r >= -config.alpha() - 1e-12 && *r <= 1.0 + 1e-12);
            }
        }
    }
}
