//! Dataset ingestion and artifact persistence.
//!
//! Canonical formats, all line-oriented so they stream:
//! - queries/corpus: JSONL with `query_id`/`doc_id` and `text` fields;
//! - candidates and run output: six-column run format
//!   `query_id Q0 doc_id rank score tag`;
//! - qrels: whitespace-separated `query_id 0 doc_id relevance`;
//! - SFT/reward exports: JSONL with a leading `#` header line.
//!
//! Document text is passed to prompts verbatim — no normalization beyond
//! trailing-newline trimming at the line level, since rubric reasoning is
//! sensitive to content.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::SftTuple;
use crate::metrics::Qrels;
use crate::orchestrator::{RankedEntry, RankedList};
use crate::reward::{DocLabel, RewardRecord, RolloutGroup, RolloutTrajectory};
use crate::rubric::{RelevanceRubric, RubricConfig, RubricError};

/// Run-file score written for pairs whose samples all failed. Real
/// integrated scores live in [0, 100], so the sentinel is unambiguous and
/// keeps run files monotone.
pub const FAILED_PAIR_SCORE: f64 = -1.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dangling {kind} reference: {id}")]
    DanglingReference { kind: &'static str, id: String },
    #[error(transparent)]
    Rubric(#[from] RubricError),
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

/// One first-stage candidate for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub doc_id: String,
    pub first_stage_score: f64,
}

/// A query's first-stage candidates, best first.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

/// A training sample: one query with a positive and a negative document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSample {
    pub query_id: String,
    pub positive_doc_id: String,
    pub negative_doc_id: String,
}

/// Conventional file layout for one dataset under a root directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub root: PathBuf,
    pub name: String,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            name: name.into(),
        }
    }

    fn dir(&self) -> PathBuf {
        self.root.join(&self.name)
    }

    pub fn queries(&self) -> PathBuf {
        self.dir().join("queries.jsonl")
    }

    pub fn corpus(&self) -> PathBuf {
        self.dir().join("corpus.jsonl")
    }

    pub fn candidates(&self) -> PathBuf {
        self.dir().join("candidates.run")
    }

    pub fn qrels(&self) -> PathBuf {
        self.dir().join("qrels.txt")
    }
}

/// A fully cross-referenced dataset ready for scoring.
#[derive(Debug)]
pub struct Dataset {
    pub name: String,
    pub queries: Vec<Query>,
    pub corpus: HashMap<String, Document>,
    pub candidates: Vec<CandidateSet>,
    pub qrels: Qrels,
    pub rubric: RelevanceRubric,
    /// Candidate entries dropped because their doc_id or query_id did not
    /// resolve (non-strict mode).
    pub dangling_references: usize,
}

impl Dataset {
    pub fn query(&self, query_id: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.corpus.get(doc_id)
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line)))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let mut items = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let item: T = serde_json::from_str(trimmed)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>, DataError> {
    let queries: Vec<Query> = read_jsonl(path)?;
    let mut seen = HashMap::new();
    for (i, query) in queries.iter().enumerate() {
        if query.text.is_empty() {
            return Err(parse_err(path, i + 1, format!("query {} has empty text", query.query_id)));
        }
        if seen.insert(query.query_id.clone(), ()).is_some() {
            return Err(parse_err(path, i + 1, format!("duplicate query_id {}", query.query_id)));
        }
    }
    Ok(queries)
}

pub fn load_corpus(path: &Path) -> Result<HashMap<String, Document>, DataError> {
    let docs: Vec<Document> = read_jsonl(path)?;
    let mut corpus = HashMap::with_capacity(docs.len());
    for (i, doc) in docs.into_iter().enumerate() {
        if doc.text.is_empty() {
            return Err(parse_err(path, i + 1, format!("document {} has empty text", doc.doc_id)));
        }
        if corpus.insert(doc.doc_id.clone(), doc).is_some() {
            return Err(parse_err(path, i + 1, "duplicate doc_id"));
        }
    }
    Ok(corpus)
}

/// Load first-stage candidates from a six-column run file, keeping at most
/// `depth` per query. Entries must arrive rank-ordered with non-increasing
/// scores within each query.
pub fn load_candidates(path: &Path, depth: usize) -> Result<Vec<CandidateSet>, DataError> {
    let mut sets: Vec<CandidateSet> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(path, line_no, format!("expected 6 columns, got {}", fields.len())));
        }
        let query_id = fields[0];
        let doc_id = fields[2];
        let score: f64 = fields[4]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad score: {e}")))?;
        let set_idx = *index.entry(query_id.to_string()).or_insert_with(|| {
            sets.push(CandidateSet {
                query_id: query_id.to_string(),
                candidates: Vec::new(),
            });
            sets.len() - 1
        });
        let set = &mut sets[set_idx];
        if let Some(last) = set.candidates.last() {
            if score > last.first_stage_score {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("first-stage scores not non-increasing for query {query_id}"),
                ));
            }
        }
        if set.candidates.len() < depth {
            set.candidates.push(Candidate {
                doc_id: doc_id.to_string(),
                first_stage_score: score,
            });
        }
    }
    Ok(sets)
}

/// Parse whitespace-separated qrels: `query_id 0 doc_id relevance`.
pub fn load_qrels(path: &Path) -> Result<Qrels, DataError> {
    let mut qrels = Qrels::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line_no, format!("expected 4 columns, got {}", fields.len())));
        }
        let relevance: u32 = fields[3]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad relevance: {e}")))?;
        if !qrels.insert(fields[0], fields[2], relevance) {
            return Err(parse_err(
                path,
                line_no,
                format!("duplicate qrels entry for {} {}", fields[0], fields[2]),
            ));
        }
    }
    Ok(qrels)
}

pub fn load_training_samples(path: &Path) -> Result<Vec<TrainingSample>, DataError> {
    let samples: Vec<TrainingSample> = read_jsonl(path)?;
    for (i, sample) in samples.iter().enumerate() {
        if sample.positive_doc_id == sample.negative_doc_id {
            return Err(parse_err(
                path,
                i + 1,
                format!(
                    "sample for {} has identical positive and negative doc {}",
                    sample.query_id, sample.positive_doc_id
                ),
            ));
        }
    }
    Ok(samples)
}

/// Load and cross-reference one dataset. Every candidate must resolve to a
/// loaded query and document; dangling entries are an error in strict mode
/// and are dropped (with a count) otherwise.
pub fn load_dataset(
    paths: &DatasetPaths,
    rubrics: &RubricConfig,
    depth: usize,
    strict: bool,
    length_control: Option<bool>,
) -> Result<Dataset, DataError> {
    let rubric = rubrics.resolve(&paths.name, length_control)?;
    let queries = load_queries(&paths.queries())?;
    let corpus = load_corpus(&paths.corpus())?;
    let mut candidates = load_candidates(&paths.candidates(), depth)?;
    let qrels = load_qrels(&paths.qrels())?;

    let query_ids: HashMap<&str, ()> = queries.iter().map(|q| (q.query_id.as_str(), ())).collect();
    let mut dangling = 0usize;
    for set in &mut candidates {
        if !query_ids.contains_key(set.query_id.as_str()) {
            if strict {
                return Err(DataError::DanglingReference {
                    kind: "query",
                    id: set.query_id.clone(),
                });
            }
            dangling += set.candidates.len();
            set.candidates.clear();
            continue;
        }
        let before = set.candidates.len();
        if strict {
            if let Some(missing) = set
                .candidates
                .iter()
                .find(|c| !corpus.contains_key(&c.doc_id))
            {
                return Err(DataError::DanglingReference {
                    kind: "document",
                    id: missing.doc_id.clone(),
                });
            }
        }
        set.candidates.retain(|c| corpus.contains_key(&c.doc_id));
        dangling += before - set.candidates.len();
    }
    candidates.retain(|set| !set.candidates.is_empty());

    Ok(Dataset {
        name: paths.name.clone(),
        queries,
        corpus,
        candidates,
        qrels,
        rubric,
        dangling_references: dangling,
    })
}

/// Format an f64 so that parsing it back recovers the exact value.
fn format_score(score: f64) -> String {
    format!("{score}")
}

/// Write rankings in the six-column run format, sorted by (query_id, rank),
/// ranks starting at 1. Failed pairs get the sentinel score. Returns the
/// number of lines written; output is byte-stable for identical input.
pub fn write_run_file(path: &Path, rankings: &[RankedList], tag: &str) -> Result<usize, DataError> {
    let mut order: Vec<&RankedList> = rankings.iter().collect();
    order.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut lines = 0usize;
    for ranking in order {
        for (i, entry) in ranking.entries.iter().enumerate() {
            let score = entry.score.unwrap_or(FAILED_PAIR_SCORE);
            writeln!(
                writer,
                "{} Q0 {} {} {} {}",
                ranking.query_id,
                entry.doc_id,
                i + 1,
                format_score(score),
                tag
            )
            .map_err(|e| io_err(path, e))?;
            lines += 1;
        }
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(lines)
}

/// Load a run file back into ranked lists, ordered by query_id, entries by
/// rank. The failed-pair sentinel becomes `score: None`.
pub fn load_run_file(path: &Path) -> Result<Vec<RankedList>, DataError> {
    let mut per_query: HashMap<String, Vec<(u32, RankedEntry)>> = HashMap::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(path, line_no, format!("expected 6 columns, got {}", fields.len())));
        }
        let rank: u32 = fields[3]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad rank: {e}")))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad score: {e}")))?;
        per_query.entry(fields[0].to_string()).or_default().push((
            rank,
            RankedEntry {
                doc_id: fields[2].to_string(),
                score: (score != FAILED_PAIR_SCORE).then_some(score),
            },
        ));
    }
    let mut rankings: Vec<RankedList> = per_query
        .into_iter()
        .map(|(query_id, mut entries)| {
            entries.sort_by_key(|(rank, _)| *rank);
            RankedList {
                query_id,
                entries: entries.into_iter().map(|(_, e)| e).collect(),
            }
        })
        .collect();
    rankings.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    Ok(rankings)
}

/// One line of the SFT export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftExportRecord {
    pub query_id: String,
    pub doc_id: String,
    pub prompt: String,
    pub response: String,
    pub score: u8,
    pub integrated: f64,
    pub k: usize,
}

impl From<SftTuple> for SftExportRecord {
    fn from(tuple: SftTuple) -> Self {
        Self {
            query_id: tuple.query_id,
            doc_id: tuple.doc_id,
            prompt: tuple.prompt.into_string(),
            response: tuple.trajectory.text().to_string(),
            score: tuple.trajectory.score(),
            integrated: tuple.integrated.value,
            k: tuple.integrated.k,
        }
    }
}

/// Per-group slice of a reward export record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupExport {
    pub doc_id: String,
    pub label: DocLabel,
    pub trajectories: Vec<RolloutTrajectory>,
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub composite: Vec<f64>,
}

impl GroupExport {
    pub fn new(group: &RolloutGroup, record: RewardRecord) -> Self {
        Self {
            doc_id: group.doc_id.clone(),
            label: group.label,
            trajectories: group.trajectories.clone(),
            intra: record.intra,
            inter: record.inter,
            composite: record.composite,
        }
    }
}

/// One line of the reward export: everything an external trainer needs for
/// one (query, positive, negative) sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardExportRecord {
    pub query_id: String,
    pub alpha: f64,
    pub tau: f64,
    pub positive: GroupExport,
    pub negative: GroupExport,
}

const SFT_HEADER: &str = "# sft export v1: query_id, doc_id, prompt, response, score, integrated, k";
const REWARD_HEADER: &str =
    "# reward export v1: query_id, alpha, tau, positive/negative {doc_id, label, trajectories, intra, inter, composite}";

fn write_jsonl_with_header<T: Serialize>(
    path: &Path,
    header: &str,
    records: impl IntoIterator<Item = T>,
) -> Result<usize, DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "{header}").map_err(|e| io_err(path, e))?;
    let mut count = 0usize;
    for record in records {
        let json = serde_json::to_string(&record).map_err(|e| {
            parse_err(path, count + 2, format!("serialization failed: {e}"))
        })?;
        writeln!(writer, "{json}").map_err(|e| io_err(path, e))?;
        count += 1;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(count)
}

/// Stream SFT tuples to disk. The iterator is consumed lazily, so exports of
/// any size run in constant memory.
pub fn write_sft_export(
    path: &Path,
    tuples: impl IntoIterator<Item = SftTuple>,
) -> Result<usize, DataError> {
    write_jsonl_with_header(path, SFT_HEADER, tuples.into_iter().map(SftExportRecord::from))
}

pub fn load_sft_export(path: &Path) -> Result<Vec<SftExportRecord>, DataError> {
    read_jsonl(path)
}

/// Stream reward records to disk; same constant-memory contract as the SFT
/// export.
pub fn write_reward_export(
    path: &Path,
    records: impl IntoIterator<Item = RewardExportRecord>,
) -> Result<usize, DataError> {
    write_jsonl_with_header(path, REWARD_HEADER, records)
}

pub fn load_reward_export(path: &Path) -> Result<Vec<RewardExportRecord>, DataError> {
    read_jsonl(path)
}

/// Rollout trajectories for one training sample, as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutPairRecord {
    pub query_id: String,
    pub positive: RolloutDocRecord,
    pub negative: RolloutDocRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutDocRecord {
    pub doc_id: String,
    pub trajectories: Vec<RolloutTrajectory>,
}

impl RolloutPairRecord {
    pub fn into_groups(self) -> (RolloutGroup, RolloutGroup) {
        let positive = RolloutGroup {
            query_id: self.query_id.clone(),
            doc_id: self.positive.doc_id,
            label: DocLabel::Positive,
            trajectories: self.positive.trajectories,
        };
        let negative = RolloutGroup {
            query_id: self.query_id,
            doc_id: self.negative.doc_id,
            label: DocLabel::Negative,
            trajectories: self.negative.trajectories,
        };
        (positive, negative)
    }
}

pub fn load_rollout_pairs(path: &Path) -> Result<Vec<RolloutPairRecord>, DataError> {
    read_jsonl(path)
}

/// Audit records are plain JSONL of scored candidates.
pub fn write_audit_file(
    path: &Path,
    records: impl IntoIterator<Item = crate::orchestrator::ScoredCandidate>,
) -> Result<usize, DataError> {
    write_jsonl_with_header(path, "# audit v1: one scored pair per line", records)
}

pub fn load_audit_file(path: &Path) -> Result<Vec<crate::orchestrator::ScoredCandidate>, DataError> {
    read_jsonl(path)
}

/// Uniform random (positive, negative) sampling per query. This is a
/// convenience for synthetic experiments, not a reproduction of any
/// benchmark's published pair construction: positives are drawn from docs
/// judged relevant, negatives from candidates judged irrelevant or unjudged.
pub fn sample_training_pairs(
    qrels: &Qrels,
    candidates: &[CandidateSet],
    seed: u64,
    per_query: usize,
) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for set in candidates {
        let positives: Vec<&str> = set
            .candidates
            .iter()
            .filter(|c| qrels.relevance(&set.query_id, &c.doc_id).unwrap_or(0) > 0)
            .map(|c| c.doc_id.as_str())
            .collect();
        let negatives: Vec<&str> = set
            .candidates
            .iter()
            .filter(|c| qrels.relevance(&set.query_id, &c.doc_id).unwrap_or(0) == 0)
            .map(|c| c.doc_id.as_str())
            .collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        for _ in 0..per_query {
            let positive = *positives.choose(&mut rng).expect("non-empty");
            let negative = *negatives.choose(&mut rng).expect("non-empty");
            samples.push(TrainingSample {
                query_id: set.query_id.clone(),
                positive_doc_id: positive.to_string(),
                negative_doc_id: negative.to_string(),
            });
        }
    }
    samples
}
