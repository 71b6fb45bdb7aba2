//! Score integration: combine K sampled trajectory scores into one relevance
//! estimate, and select the trajectory closest to that estimate for SFT
//! training data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rubric::{PromptText, Trajectory};

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("cannot integrate an empty trajectory group")]
    EmptyGroup,
    #[error("likelihood weighting requires a weight on every trajectory")]
    MissingWeights,
}

/// How trajectory scores are weighted when integrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every trajectory counts equally (the arithmetic mean).
    Uniform,
    /// Trajectories are weighted by their generation likelihood.
    Likelihood,
}

/// The integrated relevance estimate for one (query, document) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedScore {
    pub value: f64,
    pub k: usize,
    pub weighting: Weighting,
}

/// Combine a group of trajectory scores into a single weighted mean.
///
/// Uniform weighting takes w_i = 1 for every trajectory; likelihood
/// weighting takes w_i from the trajectory itself and fails if any is
/// missing. The result is a convex combination, clamped into the exact
/// `[min, max]` score envelope to absorb the last ulp of rounding.
pub fn integrate_scores(
    trajectories: &[Trajectory],
    weighting: Weighting,
) -> Result<IntegratedScore, IntegrationError> {
    if trajectories.is_empty() {
        return Err(IntegrationError::EmptyGroup);
    }
    let mut weighted_sum = 0.0f64;
    let mut weight_sum = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for trajectory in trajectories {
        let score = f64::from(trajectory.score());
        let weight = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::Likelihood => trajectory
                .weight()
                .ok_or(IntegrationError::MissingWeights)?,
        };
        weighted_sum += weight * score;
        weight_sum += weight;
        min = min.min(score);
        max = max.max(score);
    }
    let value = (weighted_sum / weight_sum).clamp(min, max);
    Ok(IntegratedScore {
        value,
        k: trajectories.len(),
        weighting,
    })
}

/// The trajectory chosen for SFT training, with the integrated score it was
/// selected against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftSelection {
    pub index: usize,
    pub integrated: IntegratedScore,
}

/// Pick the trajectory whose score is closest to the uniform integrated
/// score. Ties resolve to the earliest index, which keeps selection stable
/// under identical inputs.
pub fn select_sft_trajectory(trajectories: &[Trajectory]) -> Result<SftSelection, IntegrationError> {
    let integrated = integrate_scores(trajectories, Weighting::Uniform)?;
    let mut best_index = 0;
    let mut best_distance = f64::INFINITY;
    for (index, trajectory) in trajectories.iter().enumerate() {
        let distance = (f64::from(trajectory.score()) - integrated.value).abs();
        if distance < best_distance {
            best_distance = distance;
            best_index = index;
        }
    }
    Ok(SftSelection {
        index: best_index,
        integrated,
    })
}

/// One curated SFT training record: the rendered prompt, the selected
/// trajectory, and the integrated score of its group.
#[derive(Debug, Clone, Serialize)]
pub struct SftTuple {
    pub query_id: String,
    pub doc_id: String,
    pub prompt: PromptText,
    pub trajectory: Trajectory,
    pub integrated: IntegratedScore,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trajectories(scores: &[u8]) -> Vec<Trajectory> {
        scores
            .iter()
            .map(|&s| Trajectory::new("", s, None).unwrap())
            .collect()
    }

    fn weighted(scores_weights: &[(u8, f64)]) -> Vec<Trajectory> {
        scores_weights
            .iter()
            .map(|&(s, w)| Trajectory::new("", s, Some(w)).unwrap())
            .collect()
    }

    #[test]
    fn single_sample_is_identity() {
        let out = integrate_scores(&trajectories(&[80]), Weighting::Uniform).unwrap();
        assert_eq!(out.value, 80.0);
        assert_eq!(out.k, 1);
    }

    #[test]
    fn uniform_mean_matches_hand_arithmetic() {
        let out = integrate_scores(&trajectories(&[90, 70, 10]), Weighting::Uniform).unwrap();
        assert!((out.value - 170.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn likelihood_weights_shift_the_mean() {
        let out =
            integrate_scores(&weighted(&[(100, 3.0), (0, 1.0)]), Weighting::Likelihood).unwrap();
        assert_eq!(out.value, 75.0);
    }

    #[test]
    fn empty_group_and_missing_weights_error() {
        assert!(matches!(
            integrate_scores(&[], Weighting::Uniform),
            Err(IntegrationError::EmptyGroup)
        ));
        let mixed = vec![
            Trajectory::new("", 10, Some(1.0)).unwrap(),
            Trajectory::new("", 20, None).unwrap(),
        ];
        assert!(matches!(
            integrate_scores(&mixed, Weighting::Likelihood),
            Err(IntegrationError::MissingWeights)
        ));
    }

    #[test]
    fn selection_prefers_earliest_tie() {
        // s̄ = 220/3 ≈ 73.33; distances ≈ [6.67, 6.67, 13.33].
        let sel = select_sft_trajectory(&trajectories(&[80, 80, 60])).unwrap();
        assert_eq!(sel.index, 0);

        // Symmetric case: s̄ = 50, both at distance 50.
        let sel = select_sft_trajectory(&trajectories(&[0, 100])).unwrap();
        assert_eq!(sel.index, 0);

        let sel = select_sft_trajectory(&trajectories(&[50])).unwrap();
        assert_eq!(sel.index, 0);
    }

    proptest! {
        #[test]
        fn integrated_value_stays_in_score_envelope(scores in prop::collection::vec(0u8..=100, 1..20)) {
            let out = integrate_scores(&trajectories(&scores), Weighting::Uniform).unwrap();
            let min = f64::from(*scores.iter().min().unwrap());
            let max = f64::from(*scores.iter().max().unwrap());
            prop_assert!(out.value >= min && out.value <= max);
        }

        #[test]
        fn uniform_integration_is_permutation_invariant(
            scores in prop::collection::vec(0u8..=100, 1..12),
            seed in 0u64..1000,
        ) {
            let mut shuffled = scores.clone();
            // Cheap deterministic shuffle.
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let a = integrate_scores(&trajectories(&scores), Weighting::Uniform).unwrap();
            let b = integrate_scores(&trajectories(&shuffled), Weighting::Uniform).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }

        #[test]
        fn weight_rescaling_leaves_integration_unchanged(
            pairs in prop::collection::vec((0u8..=100, 0.01f64..100.0), 1..12),
            scale in 0.001f64..1000.0,
        ) {
            let base = weighted(&pairs);
            let scaled: Vec<(u8, f64)> = pairs.iter().map(|&(s, w)| (s, w * scale)).collect();
            let a = integrate_scores(&base, Weighting::Likelihood).unwrap();
            let b = integrate_scores(&weighted(&scaled), Weighting::Likelihood).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }

        #[test]
        fn selection_returns_a_minimizer(scores in prop::collection::vec(0u8..=100, 1..16)) {
            let group = trajectories(&scores);
            let sel = select_sft_trajectory(&group).unwrap();
            prop_assert!(sel.index < group.len());
            let chosen = (f64::from(scores[sel.index]) - sel.integrated.value).abs();
            for &s in &scores {
                let d = (f64::from(s) - sel.integrated.value).abs();
                prop_assert!(chosen <= d);
            }
        }
    }
}
