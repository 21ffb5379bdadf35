//! Evaluation protocol: grading, accuracy grouping, per-domain means, AUROC.
//!
//! The graded prediction is the text of the highest-likelihood sample. AUROC
//! treats entropy as a score for predicting an *incorrect* answer, so an
//! overconfident model (higher entropy on correct answers) lands below 0.5.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::clustering::{greedy_cluster, normalize_for_match, ClusterError, EquivalenceOracle};
use crate::entropy::{uncertainty_report, EntropyConfig};
use crate::error::{EntropyError, HarnessError};
use crate::records::{BenchmarkRecord, EvaluatedRecord, SampleSet};

/// Equality after [`normalize_for_match`].
pub fn score_exact_match(prediction: &str, gold: &str) -> bool {
    normalize_for_match(prediction) == normalize_for_match(gold)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError<E> {
    Cluster(ClusterError<E>),
    Entropy(EntropyError),
}

impl<E: fmt::Display> fmt::Display for EvalError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cluster(e) => e.fmt(f),
            Self::Entropy(e) => e.fmt(f),
        }
    }
}

impl<E: fmt::Debug + fmt::Display> core::error::Error for EvalError<E> {}

/// Grades the top sample against the gold answer and attaches a full report.
pub fn evaluate_record<O: EquivalenceOracle + ?Sized>(
    record: &BenchmarkRecord,
    set: &SampleSet,
    oracle: &O,
    config: &EntropyConfig,
) -> Result<EvaluatedRecord, EvalError<O::Error>> {
    let top = set.top_index().ok_or(EvalError::Entropy(EntropyError::EmptySampleSet))?;
    let partition = greedy_cluster(set, oracle).map_err(EvalError::Cluster)?;
    let mut report = uncertainty_report(set, &partition, config).map_err(EvalError::Entropy)?;
    report.oracle = Some(oracle.kind());
    let top_prediction = set.samples[top].text.clone();
    let is_correct = score_exact_match(&top_prediction, &record.gold_answer);
    Ok(EvaluatedRecord { record: record.clone(), sample_set: set.clone(), report, top_prediction, is_correct })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Npe,
    Se,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::Npe, Measure::Se];

    pub fn of(self, record: &EvaluatedRecord) -> f64 {
        match self {
            Self::Npe => record.report.npe,
            Self::Se => record.report.se,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Npe => "npe",
            Self::Se => "se",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    CorrectHigher,
    IncorrectHigher,
    Equal,
}

/// Mean entropy of correct versus incorrect predictions. A group with no
/// members has `None` for its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGroupReport {
    pub benchmark: String,
    pub measure: Measure,
    pub mean_correct: Option<f64>,
    pub mean_incorrect: Option<f64>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub overall_accuracy: f64,
    /// Present only when both groups are non-empty.
    pub comparison: Option<Comparison>,
}

fn common_benchmark<'a>(names: impl Iterator<Item = &'a str>) -> String {
    let mut first: Option<&str> = None;
    for n in names {
        match first {
            None => first = Some(n),
            Some(f) if f != n => return String::from("all"),
            _ => {}
        }
    }
    String::from(first.unwrap_or("all"))
}

pub fn group_by_correctness<'a, I>(records: I, measure: Measure) -> Result<AccuracyGroupReport, HarnessError>
where
    I: IntoIterator<Item = &'a EvaluatedRecord>,
{
    let records: Vec<&EvaluatedRecord> = records.into_iter().collect();
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    for r in &records {
        if r.is_correct {
            sum_c += measure.of(r);
            n_c += 1;
        } else {
            sum_i += measure.of(r);
            n_i += 1;
        }
    }
    let mean_correct = (n_c > 0).then(|| sum_c / n_c as f64);
    let mean_incorrect = (n_i > 0).then(|| sum_i / n_i as f64);
    let comparison = match (mean_correct, mean_incorrect) {
        (Some(c), Some(i)) if c > i => Some(Comparison::CorrectHigher),
        (Some(c), Some(i)) if c < i => Some(Comparison::IncorrectHigher),
        (Some(_), Some(_)) => Some(Comparison::Equal),
        _ => None,
    };
    Ok(AccuracyGroupReport {
        benchmark: common_benchmark(records.iter().map(|r| r.record.benchmark.as_str())),
        measure,
        mean_correct,
        mean_incorrect,
        n_correct: n_c,
        n_incorrect: n_i,
        overall_accuracy: n_c as f64 / (n_c + n_i) as f64,
        comparison,
    })
}

/// One row of a per-domain summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReportRow {
    pub domain: String,
    pub npe_mean: f64,
    pub se_mean: f64,
    pub n: usize,
    pub model_id: String,
}

/// Unweighted NPE and SE means per domain, rows sorted by domain name.
pub fn domain_aggregate<'a, I>(records: I, model_id: &str) -> Vec<DomainReportRow>
where
    I: IntoIterator<Item = &'a EvaluatedRecord>,
{
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.record.domain.as_str()).or_insert((0.0, 0.0, 0));
        e.0 += r.report.npe;
        e.1 += r.report.se;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(domain, (npe, se, n))| DomainReportRow {
            domain: domain.into(),
            npe_mean: npe / n as f64,
            se_mean: se / n as f64,
            n,
            model_id: model_id.into(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auroc {
    pub value: f64,
    /// `n_incorrect * n_correct`.
    pub n_pairs: usize,
    /// Set when one class is empty; `value` is then 0.5.
    pub degenerate: bool,
}

/// Probability that a random positive (`labels[i] == true`, an incorrect
/// prediction) outscores a random negative, ties counting one half.
///
/// Uses the Mann-Whitney rank-sum with mid-ranks for ties, O(n log n).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<Auroc, HarnessError> {
    if scores.len() != labels.len() {
        return Err(HarnessError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(HarnessError::NonFiniteScore { index });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Auroc { value: 0.5, n_pairs: 0, degenerate: true });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += mid_rank * positives as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    let u = rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0;
    let n_pairs = n_pos * n_neg;
    Ok(Auroc { value: u / n_pairs as f64, n_pairs, degenerate: false })
}

/// AUROC of one entropy measure as a detector of incorrect predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub benchmark: String,
    pub measure: Measure,
    pub auroc: f64,
    pub n_pairs: usize,
    /// One class was empty, so `auroc` is the uninformative 0.5.
    pub degenerate: bool,
}

pub fn calibration<'a, I>(records: I, measure: Measure) -> Result<CalibrationReport, HarnessError>
where
    I: IntoIterator<Item = &'a EvaluatedRecord>,
{
    let records: Vec<&EvaluatedRecord> = records.into_iter().collect();
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let scores: Vec<f64> = records.iter().map(|r| measure.of(r)).collect();
    let labels: Vec<bool> = records.iter().map(|r| !r.is_correct).collect();
    let a = auroc(&scores, &labels)?;
    Ok(CalibrationReport {
        benchmark: common_benchmark(records.iter().map(|r| r.record.benchmark.as_str())),
        measure,
        auroc: a.value,
        n_pairs: a.n_pairs,
        degenerate: a.degenerate,
    })
}
