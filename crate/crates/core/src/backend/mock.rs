//! Deterministic mock backend.
//!
//! Scores are pseudo-random but fully determined by (seed, query_id,
//! doc_id, sample_index, attempt): noise is drawn from a generator seeded by
//! a stable hash of that tuple, centered on an oracle relevance table. This
//! supports statistical tests of sampling-based scaling — and byte-identical
//! reruns — without any live model.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BackendError, Completion, SampleKey, ScoringBackend};
use crate::rubric::PromptText;

/// Tunables for the mock. `fail_rate` injects completions without a score
/// block, exercising retry and failure accounting paths.
#[derive(Debug, Clone)]
pub struct MockParams {
    pub noise_std: f64,
    pub fail_rate: f64,
    pub default_score: f64,
    pub with_logprobs: bool,
}

impl Default for MockParams {
    fn default() -> Self {
        Self {
            noise_std: 0.0,
            fail_rate: 0.0,
            default_score: 30.0,
            with_logprobs: false,
        }
    }
}

pub struct MockBackend {
    seed: u64,
    params: MockParams,
    oracle: HashMap<(String, String), f64>,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(seed: u64, params: MockParams) -> Self {
        Self {
            seed,
            params,
            oracle: HashMap::new(),
            calls: AtomicU64::new(0),
        }
    }

    /// Set the oracle center for one (query, document) pair.
    pub fn set_oracle(&mut self, query_id: &str, doc_id: &str, score: f64) {
        self.oracle
            .insert((query_id.to_string(), doc_id.to_string()), score);
    }

    pub fn with_oracle(mut self, table: impl IntoIterator<Item = ((String, String), f64)>) -> Self {
        self.oracle.extend(table);
        self
    }

    /// Total completions served, for call-accounting assertions.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn rng_for(&self, key: &SampleKey<'_>) -> ChaCha8Rng {
        let mut h = Fnv1a::new(self.seed);
        h.update(key.query_id.as_bytes());
        h.update(&[0xff]);
        h.update(key.doc_id.as_bytes());
        h.update(&[0xfe]);
        h.update(&key.sample_index.to_le_bytes());
        h.update(&key.attempt.to_le_bytes());
        ChaCha8Rng::seed_from_u64(h.finish())
    }

    fn oracle_center(&self, key: &SampleKey<'_>) -> f64 {
        self.oracle
            .get(&(key.query_id.to_string(), key.doc_id.to_string()))
            .copied()
            .unwrap_or(self.params.default_score)
    }
}

#[async_trait]
impl ScoringBackend for MockBackend {
    async fn complete(
        &self,
        _prompt: &PromptText,
        key: SampleKey<'_>,
    ) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut rng = self.rng_for(&key);

        if self.params.fail_rate > 0.0 && rng.random::<f64>() < self.params.fail_rate {
            return Ok(Completion {
                text: format!(
                    "1. Query Analysis: the query {} concerns the candidate {}.\n\
                     2. Document Analysis: response truncated before annotation.",
                    key.query_id, key.doc_id
                ),
                token_logprobs: None,
            });
        }

        let center = self.oracle_center(&key);
        let noise = if self.params.noise_std > 0.0 {
            Normal::new(0.0, self.params.noise_std)
                .expect("noise_std is finite and non-negative")
                .sample(&mut rng)
        } else {
            0.0
        };
        let score = (center + noise).round().clamp(0.0, 100.0) as u8;
        let text = format!(
            "1. Query Analysis: the query {} asks for supporting material.\n\
             2. Document Analysis: the candidate {} covers part of the need.\n\
             3. Relevance Annotation: weighing coverage against intent.\n\n\
             <score>\n{}\n</score>",
            key.query_id, key.doc_id, score
        );
        let token_logprobs = self.params.with_logprobs.then(|| {
            (0..24)
                .map(|_| -rng.random_range(0.05..2.0))
                .collect::<Vec<f64>>()
        });
        Ok(Completion {
            text,
            token_logprobs,
        })
    }
}

/// FNV-1a, fixed here so mock streams never shift across platforms or
/// std releases.
struct Fnv1a(u64);

impl Fnv1a {
    fn new(seed: u64) -> Self {
        let mut h = Self(0xcbf2_9ce4_8422_2325);
        h.update(&seed.to_le_bytes());
        h
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rubric::parse_score;

    fn prompt() -> PromptText {
        let rubric = crate::rubric::RelevanceRubric::new("def", "qt", "dt").unwrap();
        crate::rubric::render_prompt(&rubric, "q", "d").unwrap()
    }

    fn key(sample_index: u32, attempt: u32) -> SampleKey<'static> {
        SampleKey {
            query_id: "q1",
            doc_id: "d1",
            sample_index,
            attempt,
        }
    }

    #[tokio::test]
    async fn identical_keys_give_identical_completions() {
        let backend = MockBackend::new(7, MockParams {
            noise_std: 12.0,
            ..Default::default()
        });
        let a = backend.complete(&prompt(), key(3, 0)).await.unwrap();
        let b = backend.complete(&prompt(), key(3, 0)).await.unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(backend.call_count(), 2);
    }

    #[tokio::test]
    async fn different_samples_differ_and_parse() {
        let mut backend = MockBackend::new(7, MockParams {
            noise_std: 15.0,
            ..Default::default()
        });
        backend.set_oracle("q1", "d1", 70.0);
        let mut scores = Vec::new();
        for i in 0..8 {
            let completion = backend.complete(&prompt(), key(i, 0)).await.unwrap();
            scores.push(parse_score(&completion.text).unwrap());
        }
        let distinct: std::collections::HashSet<_> = scores.iter().collect();
        assert!(distinct.len() > 1, "noise should vary scores: {scores:?}");
    }

    #[tokio::test]
    async fn zero_noise_reproduces_the_oracle() {
        let mut backend = MockBackend::new(1, MockParams::default());
        backend.set_oracle("q1", "d1", 85.0);
        let completion = backend.complete(&prompt(), key(0, 0)).await.unwrap();
        assert_eq!(parse_score(&completion.text).unwrap(), 85);
    }

    #[tokio::test]
    async fn fail_rate_one_never_emits_a_score() {
        let backend = MockBackend::new(1, MockParams {
            fail_rate: 1.0,
            ..Default::default()
        });
        let completion = backend.complete(&prompt(), key(0, 0)).await.unwrap();
        assert!(parse_score(&completion.text).is_err());
    }

    #[tokio::test]
    async fn retry_attempt_redraws_the_failure_coin() {
        // With a half fail rate, some (sample, attempt) pairs fail while the
        // next attempt succeeds; scan for one such pair to confirm attempts
        // are independent draws.
        let backend = MockBackend::new(11, MockParams {
            fail_rate: 0.5,
            ..Default::default()
        });
        let mut saw_recovery = false;
        for i in 0..32 {
            let first = backend.complete(&prompt(), key(i, 0)).await.unwrap();
            let second = backend.complete(&prompt(), key(i, 1)).await.unwrap();
            if parse_score(&first.text).is_err() && parse_score(&second.text).is_ok() {
                saw_recovery = true;
                break;
            }
        }
        assert!(saw_recovery);
    }

    #[tokio::test]
    async fn logprobs_are_emitted_on_request() {
        let backend = MockBackend::new(3, MockParams {
            with_logprobs: true,
            ..Default::default()
        });
        let completion = backend.complete(&prompt(), key(0, 0)).await.unwrap();
        let weight = completion.likelihood_weight().unwrap();
        assert!(weight > 0.0 && weight < 1.0);
    }
}
