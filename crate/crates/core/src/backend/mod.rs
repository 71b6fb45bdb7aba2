//! Scoring backends: anything that can turn a rendered prompt into a
//! completion. The orchestrator talks to a `ScoringBackend` trait object so
//! the same fan-out path serves a live chat-completions endpoint and the
//! deterministic mock used for tests and offline runs.

mod http;
mod mock;

pub use http::{HttpBackend, API_KEY_ENV};
pub use mock::{MockBackend, MockParams};

use async_trait::async_trait;
use thiserror::Error;

use crate::rubric::PromptText;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable at {endpoint}: {detail}")]
    Unreachable { endpoint: String, detail: String },
    #[error("authentication failed; set the {env_var} environment variable to a valid API key")]
    AuthFailure { env_var: &'static str },
    #[error("request timed out after {seconds}s")]
    Timeout { seconds: u64 },
    #[error("backend returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("malformed backend response: {detail}")]
    MalformedResponse { detail: String },
}

impl BackendError {
    /// Whether a retry with the same request can plausibly succeed.
    /// Auth failures and connection-level failures abort instead.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::MalformedResponse { .. } => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Unreachable { .. } | BackendError::AuthFailure { .. } => false,
        }
    }
}

/// Identifies one sampling attempt. The mock derives its output purely from
/// this key and its seed, which is what makes runs reproducible regardless
/// of request scheduling.
#[derive(Debug, Clone, Copy)]
pub struct SampleKey<'a> {
    pub query_id: &'a str,
    pub doc_id: &'a str,
    pub sample_index: u32,
    pub attempt: u32,
}

/// One raw completion, with per-token log-likelihoods when the backend was
/// asked for them.
#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub token_logprobs: Option<Vec<f64>>,
}

impl Completion {
    /// Generation-likelihood weight: the geometric-mean per-token
    /// probability, i.e. `exp(mean(logprobs))`. Length normalization keeps
    /// short completions from dominating the weighted integration.
    pub fn likelihood_weight(&self) -> Option<f64> {
        let logprobs = self.token_logprobs.as_ref()?;
        if logprobs.is_empty() {
            return None;
        }
        let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
        Some(mean.exp())
    }
}

#[async_trait]
pub trait ScoringBackend: Send + Sync {
    /// Produce one completion for the prompt. Implementations must be safe
    /// to call from many tasks at once.
    async fn complete(
        &self,
        prompt: &PromptText,
        key: SampleKey<'_>,
    ) -> Result<Completion, BackendError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retryability_classification() {
        assert!(BackendError::Timeout { seconds: 30 }.is_retryable());
        assert!(BackendError::Http {
            status: 503,
            detail: String::new()
        }
        .is_retryable());
        assert!(BackendError::Http {
            status: 429,
            detail: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Http {
            status: 400,
            detail: String::new()
        }
        .is_retryable());
        assert!(!BackendError::AuthFailure {
            env_var: API_KEY_ENV
        }
        .is_retryable());
        assert!(!BackendError::Unreachable {
            endpoint: "x".into(),
            detail: String::new()
        }
        .is_retryable());
    }

    #[test]
    fn likelihood_weight_is_geometric_mean_probability() {
        let completion = Completion {
            text: String::new(),
            token_logprobs: Some(vec![-1.0, -1.0]),
        };
        assert!((completion.likelihood_weight().unwrap() - (-1.0f64).exp()).abs() < 1e-12);

        let none = Completion {
            text: String::new(),
            token_logprobs: None,
        };
        assert!(none.likelihood_weight().is_none());
    }
}
