//! Rubric prompt rendering and strict completion parsing.
//!
//! The prompt template is fixed: a task-specific relevance definition is
//! spliced into a scaffold that walks the model through query analysis,
//! document analysis, and relevance annotation against five scoring bands,
//! and demands the final integer score between `<score>` tags. Rendering is
//! bit-exact and parsing is strict — no fuzzy extraction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scaffold for the standard prompt.
const TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
/// Variant with the explicit 512-token length-control instruction, used when
/// distilling concise teacher trajectories.
const TEMPLATE_LENGTH_CONTROL: &str =
    include_str!("../assets/prompt_template_length_control.txt");
/// Per-dataset rubric entries shipped as defaults.
const DEFAULT_RUBRICS_JSON: &str = include_str!("../assets/default_rubrics.json");

const OPEN_TAG: &str = "<score>";
const CLOSE_TAG: &str = "</score>";

#[derive(Debug, Error)]
pub enum RubricError {
    /// A rubric field or substitution value that must be non-empty was empty.
    #[error("empty field: {field}")]
    EmptyField { field: &'static str },
    #[error("field {field} must not contain newlines: {value:?}")]
    EmbeddedNewline { field: &'static str, value: String },
    #[error("no rubric configured for dataset {dataset:?}")]
    UnknownDataset { dataset: String },
    #[error("failed to read rubric config {path}: {source}")]
    ConfigIo {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse rubric config {path}: {source}")]
    ConfigParse {
        path: String,
        source: serde_json::Error,
    },
}

/// Why a completion failed to yield a score. Each variant carries the
/// offending completion so callers can log it verbatim.
#[derive(Debug, Error)]
pub enum ParseScoreError {
    #[error("no well-formed <score>...</score> block in completion")]
    MissingScoreTag { completion: String },
    #[error("score tag content {content:?} is not a bare integer")]
    MalformedScore { completion: String, content: String },
    #[error("score {found} outside 0..=100")]
    OutOfRange { completion: String, found: String },
}

impl ParseScoreError {
    /// The completion that failed to parse.
    pub fn completion(&self) -> &str {
        match self {
            Self::MissingScoreTag { completion }
            | Self::MalformedScore { completion, .. }
            | Self::OutOfRange { completion, .. } => completion,
        }
    }
}

/// Task-specific rubric: a relevance definition plus the query/document type
/// labels spliced into the prompt scaffold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelevanceRubric {
    relevance_definition: String,
    query_type: String,
    doc_type: String,
    length_control: bool,
}

impl RelevanceRubric {
    /// Build a rubric, validating that the definition is non-empty and the
    /// type labels are non-empty single-line strings.
    pub fn new(
        relevance_definition: impl Into<String>,
        query_type: impl Into<String>,
        doc_type: impl Into<String>,
    ) -> Result<Self, RubricError> {
        let relevance_definition = relevance_definition.into();
        let query_type = query_type.into();
        let doc_type = doc_type.into();
        if relevance_definition.is_empty() {
            return Err(RubricError::EmptyField {
                field: "relevance_definition",
            });
        }
        for (field, value) in [("query_type", &query_type), ("doc_type", &doc_type)] {
            if value.is_empty() {
                return Err(RubricError::EmptyField { field });
            }
            if value.contains('\n') || value.contains('\r') {
                return Err(RubricError::EmbeddedNewline {
                    field,
                    value: value.clone(),
                });
            }
        }
        Ok(Self {
            relevance_definition,
            query_type,
            doc_type,
            length_control: false,
        })
    }

    /// Toggle the 512-token length-control instruction.
    pub fn with_length_control(mut self, enabled: bool) -> Self {
        self.length_control = enabled;
        self
    }

    pub fn relevance_definition(&self) -> &str {
        &self.relevance_definition
    }

    pub fn query_type(&self) -> &str {
        &self.query_type
    }

    pub fn doc_type(&self) -> &str {
        &self.doc_type
    }

    pub fn length_control(&self) -> bool {
        self.length_control
    }
}

/// A fully rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptText(String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One sampled reasoning output: raw completion text, the parsed relevance
/// score, and an optional generation-likelihood weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRaw")]
pub struct Trajectory {
    text: String,
    score: u8,
    weight: Option<f64>,
}

#[derive(Deserialize)]
struct TrajectoryRaw {
    text: String,
    score: u8,
    #[serde(default)]
    weight: Option<f64>,
}

impl TryFrom<TrajectoryRaw> for Trajectory {
    type Error = String;

    fn try_from(raw: TrajectoryRaw) -> Result<Self, Self::Error> {
        Trajectory::new(raw.text, raw.score, raw.weight)
            .map_err(|e| format!("invalid trajectory: {e}"))
    }
}

impl Trajectory {
    /// Build a trajectory, validating the score range and (when present)
    /// that the weight is finite and positive.
    pub fn new(
        text: impl Into<String>,
        score: u8,
        weight: Option<f64>,
    ) -> Result<Self, TrajectoryError> {
        if score > 100 {
            return Err(TrajectoryError::ScoreOutOfRange(score));
        }
        if let Some(w) = weight {
            if !w.is_finite() || w <= 0.0 {
                return Err(TrajectoryError::InvalidWeight(w));
            }
        }
        Ok(Self {
            text: text.into(),
            score,
            weight,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn score(&self) -> u8 {
        self.score
    }

    pub fn weight(&self) -> Option<f64> {
        self.weight
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory score {0} outside 0..=100")]
    ScoreOutOfRange(u8),
    #[error("trajectory weight {0} must be finite and positive")]
    InvalidWeight(f64),
}

/// Render the rubric prompt for one (query, document) pair.
///
/// The output is byte-identical to the embedded template with the five
/// placeholders substituted. Substitution values are never re-scanned, so a
/// document containing `{query}` cannot corrupt the rendering.
pub fn render_prompt(
    rubric: &RelevanceRubric,
    query: &str,
    doc: &str,
) -> Result<PromptText, RubricError> {
    if query.is_empty() {
        return Err(RubricError::EmptyField { field: "query" });
    }
    if doc.is_empty() {
        return Err(RubricError::EmptyField { field: "doc" });
    }
    let template = if rubric.length_control {
        TEMPLATE_LENGTH_CONTROL
    } else {
        TEMPLATE
    };
    let subs: [(&str, &str); 5] = [
        ("{relevance_definition}", &rubric.relevance_definition),
        ("{query_type}", &rubric.query_type),
        ("{doc_type}", &rubric.doc_type),
        ("{query}", query),
        ("{doc}", doc),
    ];
    let mut out = String::with_capacity(template.len() + query.len() + doc.len());
    let mut rest = template;
    'outer: while let Some(brace) = rest.find('{') {
        out.push_str(&rest[..brace]);
        let tail = &rest[brace..];
        for (placeholder, value) in &subs {
            if let Some(after) = tail.strip_prefix(placeholder) {
                out.push_str(value);
                rest = after;
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    Ok(PromptText(out))
}

/// Extract the integer relevance score from a completion.
///
/// The content of the last well-formed `<score>...</score>` block is
/// trimmed, one surrounding pair of square brackets is stripped if present
/// (the template shows the placeholder in brackets and models occasionally
/// echo them), and the remainder must be a bare unsigned decimal integer in
/// `[0, 100]`. Decimals, signs, and anything else are rejected.
pub fn parse_score(completion: &str) -> Result<u8, ParseScoreError> {
    let mut search_end = completion.len();
    loop {
        let Some(open) = completion[..search_end].rfind(OPEN_TAG) else {
            return Err(ParseScoreError::MissingScoreTag {
                completion: completion.to_string(),
            });
        };
        let content_start = open + OPEN_TAG.len();
        if let Some(close) = completion[content_start..].find(CLOSE_TAG) {
            let content = &completion[content_start..content_start + close];
            return parse_tag_content(content, completion);
        }
        // This open tag is never closed; try an earlier one.
        search_end = open;
    }
}

fn parse_tag_content(content: &str, completion: &str) -> Result<u8, ParseScoreError> {
    let mut inner = content.trim();
    if inner.len() >= 2 && inner.starts_with('[') && inner.ends_with(']') {
        inner = inner[1..inner.len() - 1].trim();
    }
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseScoreError::MalformedScore {
            completion: completion.to_string(),
            content: content.to_string(),
        });
    }
    match inner.parse::<u64>() {
        Ok(value) if value <= 100 => Ok(value as u8),
        // All-digit content that is too large (including u64 overflow) is a
        // range violation, not a syntax error.
        _ => Err(ParseScoreError::OutOfRange {
            completion: completion.to_string(),
            found: inner.to_string(),
        }),
    }
}

/// One entry of the rubric config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RubricEntry {
    pub relevance_definition: String,
    pub query_type: String,
    pub doc_type: String,
    #[serde(default)]
    pub length_control: bool,
}

/// Rubric config: dataset name → rubric entry. The shipped defaults cover
/// the BRIGHT and BEIR dataset names; a user-supplied file extends or
/// overrides them.
#[derive(Debug, Clone)]
pub struct RubricConfig {
    entries: BTreeMap<String, RubricEntry>,
}

impl RubricConfig {
    /// The built-in per-dataset rubrics.
    pub fn shipped_defaults() -> Self {
        let entries: BTreeMap<String, RubricEntry> =
            serde_json::from_str(DEFAULT_RUBRICS_JSON).expect("embedded rubric config is valid");
        Self { entries }
    }

    /// Load a config file and overlay it on the shipped defaults.
    pub fn load_with_defaults(path: &Path) -> Result<Self, RubricError> {
        let mut config = Self::shipped_defaults();
        let text = std::fs::read_to_string(path).map_err(|source| RubricError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        let extra: BTreeMap<String, RubricEntry> =
            serde_json::from_str(&text).map_err(|source| RubricError::ConfigParse {
                path: path.display().to_string(),
                source,
            })?;
        config.entries.extend(extra);
        Ok(config)
    }

    /// Resolve the rubric for a dataset, applying an optional length-control
    /// override on top of the entry's own flag.
    pub fn resolve(
        &self,
        dataset: &str,
        length_control_override: Option<bool>,
    ) -> Result<RelevanceRubric, RubricError> {
        let entry = self
            .entries
            .get(dataset)
            .ok_or_else(|| RubricError::UnknownDataset {
                dataset: dataset.to_string(),
            })?;
        let rubric = RelevanceRubric::new(
            entry.relevance_definition.clone(),
            entry.query_type.clone(),
            entry.doc_type.clone(),
        )?;
        Ok(rubric.with_length_control(length_control_override.unwrap_or(entry.length_control)))
    }

    pub fn dataset_names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, dataset: &str) -> bool {
        self.entries.contains_key(dataset)
    }
}
