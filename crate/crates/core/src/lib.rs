//! Rubric-based pointwise reranking for reasoning-intensive retrieval.
//!
//! The toolkit scores each (query, document) pair independently: a fixed
//! rubric prompt asks an LLM to reason about the pair and annotate an
//! integer relevance score in `[0, 100]`, multiple sampled trajectories are
//! combined into a single integrated score, and candidates are re-ranked by
//! that score. On top of the scoring core sit training-data utilities
//! (SFT trajectory curation, composite intra/inter-document rewards for an
//! external RL trainer) and an evaluation harness (nDCG@k, score-distribution
//! reports, run comparison).
//!
//! Modules:
//! - [`rubric`] — prompt rendering and strict completion parsing
//! - [`integrate`] — score integration and SFT trajectory selection
//! - [`reward`] — intra-document, inter-document, and composite rewards
//! - [`backend`] — scoring backends (HTTP chat-completions, deterministic mock)
//! - [`orchestrator`] — concurrent fan-out over pairs and samples
//! - [`metrics`] — nDCG@k, score distributions, run comparison
//! - [`data`] — dataset ingestion and run/export file formats
//! - [`pipeline`] — SFT curation and reward rollout flows

pub mod backend;
pub mod data;
pub mod integrate;
pub mod metrics;
pub mod orchestrator;
pub mod pipeline;
pub mod reward;
pub mod rubric;

pub use backend::{BackendError, Completion, MockBackend, ScoringBackend};
pub use integrate::{integrate_scores, select_sft_trajectory, IntegratedScore, Weighting};
pub use metrics::{ndcg_at_k, Qrels};
pub use orchestrator::{Orchestrator, RankedList, ScoredCandidate, ScoringBackendConfig};
pub use reward::{compute_sample_rewards, RewardConfig, RolloutGroup};
pub use rubric::{parse_score, render_prompt, PromptText, RelevanceRubric, Trajectory};
