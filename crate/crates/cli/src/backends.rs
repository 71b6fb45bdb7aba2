//! Backend selection. The URL scheme picks the implementation: `http`/
//! `https` build the chat-completions client, and the reserved `mock` scheme
//! builds the deterministic offline backend, keeping a single code path
//! through the orchestrator.

use std::sync::Arc;

use rubric_rerank::backend::{HttpBackend, MockBackend, MockParams, ScoringBackend};
use rubric_rerank::integrate::Weighting;
use rubric_rerank::metrics::Qrels;
use rubric_rerank::orchestrator::ScoringBackendConfig;

use crate::{CliError, CliResult};

/// Mock oracle centers parsed from the URL query string.
#[derive(Debug, Clone, Copy)]
struct MockUrlParams {
    positive: f64,
    negative: f64,
    noise: f64,
    fail: f64,
}

impl Default for MockUrlParams {
    fn default() -> Self {
        Self {
            positive: 80.0,
            negative: 25.0,
            noise: 15.0,
            fail: 0.0,
        }
    }
}

fn parse_mock_url(endpoint: &str) -> CliResult<MockUrlParams> {
    let url = url::Url::parse(endpoint)
        .map_err(|e| CliError::validation(format!("invalid backend URL {endpoint:?}: {e}")))?;
    if url.host_str().unwrap_or("qrels") != "qrels" {
        return Err(CliError::validation(format!(
            "unknown mock oracle source {:?}; only mock://qrels is supported",
            url.host_str().unwrap_or("")
        )));
    }
    let mut params = MockUrlParams::default();
    for (key, value) in url.query_pairs() {
        let parsed: f64 = value.parse().map_err(|_| {
            CliError::validation(format!("mock URL parameter {key}={value} is not a number"))
        })?;
        match key.as_ref() {
            "positive" => params.positive = parsed,
            "negative" => params.negative = parsed,
            "noise" => params.noise = parsed,
            "fail" => params.fail = parsed,
            other => {
                return Err(CliError::validation(format!(
                    "unknown mock URL parameter {other:?} (expected positive, negative, noise, fail)"
                )))
            }
        }
    }
    Ok(params)
}

pub fn is_mock(endpoint: &str) -> bool {
    endpoint.starts_with("mock:")
}

/// Build the scoring backend named by `config.endpoint_url`. Mock oracles
/// center on the qrels: judged-relevant pairs score around `positive`,
/// everything else around `negative`.
pub fn build(
    config: &ScoringBackendConfig,
    seed: u64,
    weighting: Weighting,
    qrels: Option<&Qrels>,
) -> CliResult<Arc<dyn ScoringBackend>> {
    let endpoint = &config.endpoint_url;
    if is_mock(endpoint) {
        let params = parse_mock_url(endpoint)?;
        let mut backend = MockBackend::new(seed, MockParams {
            noise_std: params.noise,
            fail_rate: params.fail,
            default_score: params.negative,
            with_logprobs: weighting == Weighting::Likelihood,
        });
        if let Some(qrels) = qrels {
            let query_ids: Vec<String> = qrels.queries().map(str::to_string).collect();
            for query_id in query_ids {
                if let Some(judged) = qrels.judged(&query_id) {
                    for (doc_id, &rel) in judged {
                        let center = if rel > 0 { params.positive } else { params.negative };
                        backend.set_oracle(&query_id, doc_id, center);
                    }
                }
            }
        }
        return Ok(Arc::new(backend));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Arc::new(HttpBackend::new(
            endpoint.clone(),
            config.model_name.clone(),
            config.temperature,
            config.request_timeout,
            weighting == Weighting::Likelihood,
        )));
    }
    Err(CliError::validation(format!(
        "backend URL {endpoint:?} must use the http, https, or mock scheme"
    )))
}
