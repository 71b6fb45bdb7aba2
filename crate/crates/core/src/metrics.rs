//! Evaluation: nDCG@k against graded judgments, score-distribution
//! separation reports, and run-to-run comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::RankedList;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("query {query_id} has no relevance judgments")]
    UnknownQuery { query_id: String },
    #[error("bucket width {0} must be positive and divide 100")]
    InvalidBucketWidth(u32),
    #[error("runs cover different query sets: {detail}")]
    MismatchedQueries { detail: String },
    #[error("comparison needs at least one run")]
    NoRuns,
}

/// Graded relevance judgments keyed by (query, document).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert one judgment. Returns false if the (query, doc) key was
    /// already present (the new value wins).
    pub fn insert(&mut self, query_id: &str, doc_id: &str, relevance: u32) -> bool {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), relevance)
            .is_none()
    }

    pub fn relevance(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn has_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Whether the query has at least one judgment with relevance > 0.
    pub fn has_relevant(&self, query_id: &str) -> bool {
        self.judgments
            .get(query_id)
            .is_some_and(|docs| docs.values().any(|&rel| rel > 0))
    }
}

fn gain(relevance: u32) -> f64 {
    2.0f64.powi(relevance.min(60) as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k with exponential gain `2^rel - 1` and log2 positional discount.
///
/// The ideal DCG is computed over all judged documents for the query, not
/// just retrieved ones, so first-stage recall misses cost score. Unjudged
/// documents in the ranking gain nothing. A query with no relevant judgment
/// scores 0.
pub fn ndcg_at_k(ranking: &RankedList, qrels: &Qrels, k: usize) -> f64 {
    let Some(judged) = qrels.judged(&ranking.query_id) else {
        return 0.0;
    };
    let mut dcg = 0.0;
    for (rank, entry) in ranking.entries.iter().take(k).enumerate() {
        if let Some(&rel) = judged.get(&entry.doc_id) {
            dcg += gain(rel) / discount(rank + 1);
        }
    }
    let mut rels: Vec<u32> = judged.values().copied().collect();
    rels.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = rels
        .iter()
        .take(k)
        .enumerate()
        .map(|(rank, &rel)| gain(rel) / discount(rank + 1))
        .sum();
    if idcg <= 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Per-query nDCG@k values for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub tag: String,
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    /// Queries that had no positive judgment (scored 0 by convention).
    pub zero_relevant_queries: Vec<String>,
}

impl MetricReport {
    /// Arithmetic mean over evaluated queries.
    pub fn mean(&self) -> f64 {
        if self.per_query.is_empty() {
            return 0.0;
        }
        self.per_query.values().sum::<f64>() / self.per_query.len() as f64
    }
}

/// Evaluate a whole run. In strict mode a ranking for a query absent from
/// the qrels is an error; otherwise it scores 0 and is flagged.
pub fn evaluate_run(
    rankings: &[RankedList],
    qrels: &Qrels,
    k: usize,
    tag: &str,
    strict: bool,
) -> Result<MetricReport, MetricsError> {
    let mut per_query = BTreeMap::new();
    let mut zero_relevant = Vec::new();
    for ranking in rankings {
        if !qrels.has_query(&ranking.query_id) {
            if strict {
                return Err(MetricsError::UnknownQuery {
                    query_id: ranking.query_id.clone(),
                });
            }
            zero_relevant.push(ranking.query_id.clone());
            per_query.insert(ranking.query_id.clone(), 0.0);
            continue;
        }
        if !qrels.has_relevant(&ranking.query_id) {
            zero_relevant.push(ranking.query_id.clone());
        }
        per_query.insert(ranking.query_id.clone(), ndcg_at_k(ranking, qrels, k));
    }
    Ok(MetricReport {
        tag: tag.to_string(),
        k,
        per_query,
        zero_relevant_queries: zero_relevant,
    })
}

/// An integrated score observation for the distribution report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorePoint {
    pub query_id: String,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub low: u32,
    /// Exclusive upper bound, except the final bucket which closes at 100.
    pub high: u32,
    pub positive: usize,
    pub negative: usize,
}

/// Histogram of integrated scores, split into qrels-positive and
/// qrels-negative documents. Documents without a judgment are skipped and
/// counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub bucket_width: u32,
    pub buckets: Vec<Bucket>,
    pub skipped_unjudged: usize,
}

impl ScoreDistribution {
    pub fn total_positive(&self) -> usize {
        self.buckets.iter().map(|b| b.positive).sum()
    }

    pub fn total_negative(&self) -> usize {
        self.buckets.iter().map(|b| b.negative).sum()
    }

    /// Fraction of positive-document scores strictly above the threshold.
    pub fn positive_fraction_above(&self, threshold: u32) -> f64 {
        fraction(
            self.buckets.iter().filter(|b| b.low >= threshold),
            self.total_positive(),
            |b| b.positive,
        )
    }

    /// Fraction of negative-document scores strictly below the threshold.
    pub fn negative_fraction_below(&self, threshold: u32) -> f64 {
        fraction(
            self.buckets.iter().filter(|b| b.high <= threshold),
            self.total_negative(),
            |b| b.negative,
        )
    }

    /// Plot-ready rows: (bucket_low, bucket_high, class, count).
    pub fn tabular(&self) -> Vec<(u32, u32, &'static str, usize)> {
        let mut rows = Vec::with_capacity(self.buckets.len() * 2);
        for bucket in &self.buckets {
            rows.push((bucket.low, bucket.high, "positive", bucket.positive));
            rows.push((bucket.low, bucket.high, "negative", bucket.negative));
        }
        rows
    }
}

fn fraction<'a>(
    buckets: impl Iterator<Item = &'a Bucket>,
    total: usize,
    count: impl Fn(&Bucket) -> usize,
) -> f64 {
    if total == 0 {
        return 0.0;
    }
    buckets.map(count).sum::<usize>() as f64 / total as f64
}

/// Bucket scored documents into fixed-width bins over [0, 100], classed by
/// judgment: relevance > 0 is positive, relevance 0 is negative.
pub fn score_distribution(
    points: &[ScorePoint],
    qrels: &Qrels,
    bucket_width: u32,
) -> Result<ScoreDistribution, MetricsError> {
    if bucket_width == 0 || 100 % bucket_width != 0 {
        return Err(MetricsError::InvalidBucketWidth(bucket_width));
    }
    let n_buckets = (100 / bucket_width) as usize;
    let mut buckets: Vec<Bucket> = (0..n_buckets)
        .map(|i| Bucket {
            low: i as u32 * bucket_width,
            high: (i as u32 + 1) * bucket_width,
            positive: 0,
            negative: 0,
        })
        .collect();
    let mut skipped = 0usize;
    for point in points {
        let Some(rel) = qrels.relevance(&point.query_id, &point.doc_id) else {
            skipped += 1;
            continue;
        };
        let clamped = point.score.clamp(0.0, 100.0);
        // Score 100 lands in the final closed bucket.
        let index = ((clamped / f64::from(bucket_width)) as usize).min(n_buckets - 1);
        if rel > 0 {
            buckets[index].positive += 1;
        } else {
            buckets[index].negative += 1;
        }
    }
    Ok(ScoreDistribution {
        bucket_width,
        buckets,
        skipped_unjudged: skipped,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub tag: String,
    pub mean: f64,
    /// Difference from the first (baseline) run.
    pub delta: f64,
}

/// Side-by-side means with deltas against the first run. All runs must
/// cover the same query set.
pub fn compare_runs(reports: &[MetricReport]) -> Result<Vec<ComparisonRow>, MetricsError> {
    let Some(baseline) = reports.first() else {
        return Err(MetricsError::NoRuns);
    };
    let baseline_queries: BTreeSet<&String> = baseline.per_query.keys().collect();
    for report in &reports[1..] {
        let queries: BTreeSet<&String> = report.per_query.keys().collect();
        if queries != baseline_queries {
            let only_base: Vec<_> = baseline_queries.difference(&queries).take(3).collect();
            let only_this: Vec<_> = queries.difference(&baseline_queries).take(3).collect();
            return Err(MetricsError::MismatchedQueries {
                detail: format!(
                    "run {:?} vs {:?}: only-baseline {:?}, only-other {:?}",
                    baseline.tag, report.tag, only_base, only_this
                ),
            });
        }
    }
    let base_mean = baseline.mean();
    Ok(reports
        .iter()
        .map(|report| ComparisonRow {
            tag: report.tag.clone(),
            mean: report.mean(),
            delta: report.mean() - base_mean,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::RankedEntry;
    use proptest::prelude::*;

    fn ranking(query_id: &str, doc_ids: &[&str]) -> RankedList {
        RankedList {
            query_id: query_id.to_string(),
            entries: doc_ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    doc_id: id.to_string(),
                    score: Some(100.0 - i as f64),
                })
                .collect(),
        }
    }

    fn qrels_from(entries: &[(&str, &str, u32)]) -> Qrels {
        let mut qrels = Qrels::new();
        for (q, d, rel) in entries {
            qrels.insert(q, d, *rel);
        }
        qrels
    }

    #[test]
    fn ideal_ranking_scores_one() {
        let qrels = qrels_from(&[("q", "a", 2), ("q", "b", 1), ("q", "c", 0)]);
        let value = ndcg_at_k(&ranking("q", &["a", "b", "c"]), &qrels, 10);
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relevant_at_rank_two_binary() {
        let qrels = qrels_from(&[("q", "rel", 1)]);
        let value = ndcg_at_k(&ranking("q", &["other", "rel", "x"]), &qrels, 10);
        assert!((value - 1.0 / 3.0f64.log2()).abs() < 1e-12);
        assert!((value - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn all_irrelevant_scores_zero() {
        let qrels = qrels_from(&[("q", "rel", 1)]);
        let value = ndcg_at_k(&ranking("q", &["a", "b", "c"]), &qrels, 10);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn zero_relevant_query_scores_zero_and_is_flagged() {
        let qrels = qrels_from(&[("q", "a", 0)]);
        let report = evaluate_run(&[ranking("q", &["a"])], &qrels, 10, "t", false).unwrap();
        assert_eq!(report.per_query["q"], 0.0);
        assert_eq!(report.zero_relevant_queries, vec!["q".to_string()]);
    }

    #[test]
    fn unknown_query_errors_only_in_strict_mode() {
        let qrels = qrels_from(&[("other", "a", 1)]);
        let rankings = [ranking("q", &["a"])];
        assert!(matches!(
            evaluate_run(&rankings, &qrels, 10, "t", true),
            Err(MetricsError::UnknownQuery { .. })
        ));
        let report = evaluate_run(&rankings, &qrels, 10, "t", false).unwrap();
        assert_eq!(report.per_query["q"], 0.0);
    }

    #[test]
    fn idcg_counts_unretrieved_judged_docs() {
        // Two relevant docs judged, only one retrieved: nDCG < 1 even with
        // the retrieved one at rank 1.
        let qrels = qrels_from(&[("q", "in", 1), ("q", "missing", 1)]);
        let value = ndcg_at_k(&ranking("q", &["in"]), &qrels, 10);
        let expected = 1.0 / (1.0 + 1.0 / 3.0f64.log2());
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn distribution_buckets_split_by_class() {
        let qrels = qrels_from(&[
            ("q", "p1", 1),
            ("q", "p2", 2),
            ("q", "n1", 0),
            ("q", "n2", 0),
        ]);
        let points = vec![
            ScorePoint { query_id: "q".into(), doc_id: "p1".into(), score: 95.0 },
            ScorePoint { query_id: "q".into(), doc_id: "p2".into(), score: 90.0 },
            ScorePoint { query_id: "q".into(), doc_id: "n1".into(), score: 10.0 },
            ScorePoint { query_id: "q".into(), doc_id: "n2".into(), score: 5.0 },
            ScorePoint { query_id: "q".into(), doc_id: "unjudged".into(), score: 50.0 },
        ];
        let dist = score_distribution(&points, &qrels, 10).unwrap();
        assert_eq!(dist.buckets.len(), 10);
        assert_eq!(dist.buckets[9].positive, 2);
        assert_eq!(dist.buckets[1].negative, 1);
        assert_eq!(dist.buckets[0].negative, 1);
        assert_eq!(dist.skipped_unjudged, 1);
        assert_eq!(dist.total_positive(), 2);
        assert_eq!(dist.total_negative(), 2);
    }

    #[test]
    fn score_100_lands_in_the_final_closed_bucket() {
        let qrels = qrels_from(&[("q", "p", 1)]);
        let points = vec![ScorePoint {
            query_id: "q".into(),
            doc_id: "p".into(),
            score: 100.0,
        }];
        let dist = score_distribution(&points, &qrels, 10).unwrap();
        assert_eq!(dist.buckets[9].positive, 1);
    }

    #[test]
    fn bucket_width_must_divide_100() {
        let qrels = Qrels::new();
        assert!(matches!(
            score_distribution(&[], &qrels, 7),
            Err(MetricsError::InvalidBucketWidth(7))
        ));
        assert!(matches!(
            score_distribution(&[], &qrels, 0),
            Err(MetricsError::InvalidBucketWidth(0))
        ));
        for width in [1u32, 2, 4, 5, 10, 20, 25, 50, 100] {
            assert!(score_distribution(&[], &qrels, width).is_ok());
        }
    }

    #[test]
    fn comparing_a_run_to_itself_gives_zero_deltas() {
        let qrels = qrels_from(&[("q", "a", 1)]);
        let report = evaluate_run(&[ranking("q", &["a"])], &qrels, 10, "same", false).unwrap();
        let rows = compare_runs(&[report.clone(), report]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].delta, 0.0);
        assert_eq!(rows[1].delta, 0.0);
    }

    #[test]
    fn disjoint_query_sets_are_rejected() {
        let a = MetricReport {
            tag: "a".into(),
            k: 10,
            per_query: BTreeMap::from([("q1".to_string(), 1.0)]),
            zero_relevant_queries: vec![],
        };
        let b = MetricReport {
            tag: "b".into(),
            k: 10,
            per_query: BTreeMap::from([("q2".to_string(), 1.0)]),
            zero_relevant_queries: vec![],
        };
        assert!(matches!(
            compare_runs(&[a, b]),
            Err(MetricsError::MismatchedQueries { .. })
        ));
    }

    proptest! {
        #[test]
        fn ndcg_is_invariant_under_doc_relabeling(
            rels in prop::collection::vec(0u32..=2, 1..6),
        ) {
            let ids: Vec<String> = (0..rels.len()).map(|i| format!("d{i}")).collect();
            let renamed: Vec<String> = (0..rels.len()).map(|i| format!("z{i}")).collect();
            let mut qrels_a = Qrels::new();
            let mut qrels_b = Qrels::new();
            for (i, &rel) in rels.iter().enumerate() {
                qrels_a.insert("q", &ids[i], rel);
                qrels_b.insert("q", &renamed[i], rel);
            }
            let ids_ref: Vec<&str> = ids.iter().map(String::as_str).collect();
            let renamed_ref: Vec<&str> = renamed.iter().map(String::as_str).collect();
            let a = ndcg_at_k(&ranking("q", &ids_ref), &qrels_a, 10);
            let b = ndcg_at_k(&ranking("q", &renamed_ref), &qrels_b, 10);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn swapping_a_relevant_doc_upward_never_hurts(
            rels in prop::collection::vec(0u32..=2, 2..6),
            swap_at in 0usize..5,
        ) {
            let i = swap_at % (rels.len() - 1);
            // Only meaningful when a more relevant doc sits below a less
            // relevant one.
            prop_assume!(rels[i] < rels[i + 1]);
            let ids: Vec<String> = (0..rels.len()).map(|n| format!("d{n}")).collect();
            let mut qrels = Qrels::new();
            for (n, &rel) in rels.iter().enumerate() {
                qrels.insert("q", &ids[n], rel);
            }
            let before_ids: Vec<&str> = ids.iter().map(String::as_str).collect();
            let mut after = before_ids.clone();
            after.swap(i, i + 1);
            let before = ndcg_at_k(&ranking("q", &before_ids), &qrels, 10);
            let after = ndcg_at_k(&ranking("q", &after), &qrels, 10);
            prop_assert!(after + 1e-12 >= before);
        }

        #[test]
        fn histogram_mass_is_conserved_across_widths(
            scores in prop::collection::vec(0.0f64..=100.0, 1..40),
        ) {
            let mut qrels = Qrels::new();
            let mut points = Vec::new();
            for (i, &score) in scores.iter().enumerate() {
                let doc = format!("d{i}");
                qrels.insert("q", &doc, (i % 2) as u32);
                points.push(ScorePoint { query_id: "q".into(), doc_id: doc, score });
            }
            for width in [5u32, 10, 20, 50] {
                let dist = score_distribution(&points, &qrels, width).unwrap();
                prop_assert_eq!(dist.total_positive() + dist.total_negative(), scores.len());
            }
        }
    }
}
