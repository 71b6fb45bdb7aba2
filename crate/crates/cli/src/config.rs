//! Config resolution: command-line flags override the optional TOML config
//! file, which overrides built-in defaults.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use rubric_rerank::integrate::Weighting;
use rubric_rerank::orchestrator::ScoringBackendConfig;

use crate::{BackendArgs, CliError, CliResult};

pub const DEFAULT_BACKEND: &str = "mock://qrels?positive=80&negative=25&noise=15";
pub const DEFAULT_MODEL: &str = "local-model";
pub const DEFAULT_CONCURRENCY: usize = 8;
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DEPTH: usize = 100;
pub const DEFAULT_EVAL_K: usize = 10;
pub const DEFAULT_RERANK_SAMPLES: usize = 1;
pub const DEFAULT_TEACHER_SAMPLES: usize = 8;
pub const DEFAULT_ROLLOUTS: usize = 8;
pub const DEFAULT_TAG: &str = "rubric-rerank";

/// On-disk config file shape. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub rerank: RerankSection,
    #[serde(default)]
    pub sft: SftSection,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub concurrency: Option<usize>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankSection {
    pub samples: Option<usize>,
    pub depth: Option<usize>,
    pub weighting: Option<String>,
    pub tag: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftSection {
    pub samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub rollouts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::validation(format!("invalid config {}: {e}", path.display()))
        })
    }
}

/// Backend settings with all defaults applied.
#[derive(Debug, Clone)]
pub struct ResolvedBackend {
    pub endpoint: String,
    pub model: String,
    /// As requested; `None` means derive from the sample count.
    pub temperature: Option<f64>,
    pub concurrency: usize,
    pub retries: u32,
    pub timeout: Duration,
    pub seed: u64,
}

impl ResolvedBackend {
    pub fn resolve(args: &BackendArgs, file: &ConfigFile) -> Self {
        Self {
            endpoint: args
                .backend
                .clone()
                .or_else(|| file.backend.endpoint.clone())
                .unwrap_or_else(|| DEFAULT_BACKEND.to_string()),
            model: args
                .model
                .clone()
                .or_else(|| file.backend.model.clone())
                .unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            temperature: args.temperature.or(file.backend.temperature),
            concurrency: args
                .concurrency
                .or(file.backend.concurrency)
                .unwrap_or(DEFAULT_CONCURRENCY),
            retries: args.retries.or(file.backend.retries).unwrap_or(DEFAULT_RETRIES),
            timeout: Duration::from_secs(
                args.timeout_secs
                    .or(file.backend.timeout_secs)
                    .unwrap_or(DEFAULT_TIMEOUT_SECS),
            ),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        }
    }

    /// Final scoring config for a given sample count. Unspecified
    /// temperature defaults to 1.0 when sampling more than once (diversity)
    /// and 0.0 for single-sample greedy scoring.
    pub fn scoring_config(&self, samples_per_pair: usize) -> ScoringBackendConfig {
        let temperature = self
            .temperature
            .unwrap_or(if samples_per_pair > 1 { 1.0 } else { 0.0 });
        ScoringBackendConfig {
            endpoint_url: self.endpoint.clone(),
            model_name: self.model.clone(),
            temperature,
            samples_per_pair,
            max_retries_per_sample: self.retries,
            concurrency_limit: self.concurrency,
            request_timeout: self.timeout,
        }
    }
}

pub fn parse_weighting(value: Option<&str>) -> CliResult<Weighting> {
    match value {
        None | Some("uniform") => Ok(Weighting::Uniform),
        Some("likelihood") => Ok(Weighting::Likelihood),
        Some(other) => Err(CliError::validation(format!(
            "weighting must be 'uniform' or 'likelihood', got {other:?}"
        ))),
    }
}
