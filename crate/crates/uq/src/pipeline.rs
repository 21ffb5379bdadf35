//! Offline evaluation: join benchmark items to their sample sets, grade,
//! score, aggregate and write the report files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use uq_core::harness::{
    calibration, domain_aggregate, evaluate_record, group_by_correctness, AccuracyGroupReport, CalibrationReport,
    DomainReportRow, Measure,
};
use uq_core::{greedy_cluster, BenchmarkRecord, EntropyConfig, EquivalenceOracle, EvaluatedRecord, SampleSet, Validate};

use crate::analysis::{analyze, cluster_views, ClusterView};
use crate::export::{plotdata, save_domain_csv, save_json, PlotPoint};
use crate::jsonl::{load_jsonl, serialize_record, Mode};

pub const DOMAIN_REPORT: &str = "domain_report.csv";
pub const ACCURACY_GROUPS: &str = "accuracy_groups.json";
pub const CALIBRATION: &str = "calibration.json";
pub const EVALUATED: &str = "evaluated.jsonl";
pub const PLOTDATA: &str = "plotdata.json";

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub entropy: EntropyConfig,
    /// Drop samples whose normalized text repeats an earlier one before scoring.
    pub dedup_exact: bool,
    /// Overrides the model id column; otherwise the sample sets' common id.
    pub model_id: Option<String>,
    /// Worker threads for grading; 0 picks the machine's parallelism.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub evaluated: Vec<EvaluatedRecord>,
    pub domain_rows: Vec<DomainReportRow>,
    /// Pooled reports (one per measure), then per-benchmark reports when
    /// more than one benchmark is present.
    pub accuracy_groups: Vec<AccuracyGroupReport>,
    pub calibration: Vec<CalibrationReport>,
    /// Bars for the pooled reports.
    pub plotdata: Vec<PlotPoint>,
}

/// Pairs each record with the sample set whose query matches its query.
pub fn join<'a>(records: &'a [BenchmarkRecord], sets: &'a [SampleSet]) -> Result<Vec<(&'a BenchmarkRecord, &'a SampleSet)>> {
    let mut by_query: HashMap<&str, &SampleSet> = HashMap::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        if by_query.insert(s.query.as_str(), s).is_some() {
            bail!("sample set {i}: query {:?} appears more than once", s.query);
        }
    }
    records
        .iter()
        .map(|r| match by_query.get(r.query.as_str()) {
            Some(s) => Ok((r, *s)),
            None => bail!("record {:?}: no sample set for query {:?}", r.id, r.query),
        })
        .collect()
}

fn common_model_id(sets: &[SampleSet]) -> String {
    let mut ids = sets.iter().map(|s| s.model_id.as_str());
    match ids.next() {
        Some(first) if ids.all(|id| id == first) => first.into(),
        Some(_) => "mixed".into(),
        None => String::new(),
    }
}

fn grade<O>(pairs: &[(&BenchmarkRecord, &SampleSet)], oracle: &O, options: &EvalOptions) -> Result<Vec<EvaluatedRecord>>
where
    O: EquivalenceOracle + Sync + ?Sized,
    O::Error: std::fmt::Display,
{
    let one = |(record, set): &(&BenchmarkRecord, &SampleSet)| -> Result<EvaluatedRecord> {
        let deduped;
        let set = if options.dedup_exact {
            deduped = set.dedup_exact();
            &deduped
        } else {
            *set
        };
        evaluate_record(record, set, oracle, &options.entropy).map_err(|e| anyhow::anyhow!("record {:?}: {e}", record.id))
    };
    let threads = match options.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    if threads <= 1 || pairs.len() < 2 {
        return pairs.iter().map(one).collect();
    }
    let chunk = pairs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = pairs.chunks(chunk).map(|c| scope.spawn(move || c.iter().map(one).collect::<Vec<_>>())).collect();
        // joined in spawn order, so output order is input order
        handles.into_iter().flat_map(|h| h.join().expect("grading thread panicked")).collect()
    })
}

pub fn evaluate<O>(records: &[BenchmarkRecord], sets: &[SampleSet], oracle: &O, options: &EvalOptions) -> Result<EvalOutput>
where
    O: EquivalenceOracle + Sync + ?Sized,
    O::Error: std::fmt::Display,
{
    let pairs = join(records, sets)?;
    let evaluated = grade(&pairs, oracle, options)?;
    let model_id = options.model_id.clone().unwrap_or_else(|| common_model_id(sets));
    let domain_rows = domain_aggregate(&evaluated, &model_id);

    let mut accuracy_groups = Vec::new();
    let mut calibration_reports = Vec::new();
    if !evaluated.is_empty() {
        let mut benchmarks: Vec<&str> = evaluated.iter().map(|r| r.record.benchmark.as_str()).collect();
        benchmarks.sort_unstable();
        benchmarks.dedup();
        let mut subsets = vec![evaluated.iter().collect::<Vec<_>>()];
        if benchmarks.len() > 1 {
            for b in benchmarks {
                subsets.push(evaluated.iter().filter(|r| r.record.benchmark == b).collect());
            }
        }
        for subset in &subsets {
            for m in Measure::ALL {
                accuracy_groups.push(group_by_correctness(subset.iter().copied(), m)?);
                calibration_reports.push(calibration(subset.iter().copied(), m)?);
            }
        }
    }
    let plotdata = plotdata(&accuracy_groups[..accuracy_groups.len().min(Measure::ALL.len())]);
    Ok(EvalOutput { evaluated, domain_rows, accuracy_groups, calibration: calibration_reports, plotdata })
}

pub fn write_outputs(output: &EvalOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_domain_csv(&dir.join(DOMAIN_REPORT), &output.domain_rows)?;
    save_json(&dir.join(ACCURACY_GROUPS), &output.accuracy_groups)?;
    save_json(&dir.join(CALIBRATION), &output.calibration)?;
    save_json(&dir.join(PLOTDATA), &output.plotdata)?;

    let path = dir.join(EVALUATED);
    let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for r in &output.evaluated {
        let line = serialize_record(r).with_context(|| format!("record {:?}", r.record.id))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Scores every sample set in `input`, writing one report per line. Returns
/// the number of sets scored.
pub fn score_stream<R, W, O>(input: R, mut output: W, oracle: &O, config: &EntropyConfig, dedup_exact: bool) -> Result<usize>
where
    R: BufRead,
    W: Write,
    O: EquivalenceOracle + ?Sized,
    O::Error: std::fmt::Display,
{
    let mut n = 0;
    for set in load_jsonl::<_, SampleSet>(input, Mode::Strict) {
        let set = set?;
        let set = if dedup_exact { set.dedup_exact() } else { set };
        let analysis = analyze(&set, oracle, config).map_err(|e| anyhow::anyhow!("sample set {}: {e}", n + 1))?;
        analysis.report.validate().map_err(|e| anyhow::anyhow!("sample set {}: {e}", n + 1))?;
        writeln!(output, "{}", serde_json::to_string(&analysis.report)?)?;
        n += 1;
    }
    output.flush()?;
    Ok(n)
}

/// One line of `uq cluster` output.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterLine {
    pub query: String,
    pub clusters: Vec<ClusterView>,
}

pub fn cluster_stream<R, W, O>(input: R, mut output: W, oracle: &O) -> Result<usize>
where
    R: BufRead,
    W: Write,
    O: EquivalenceOracle + ?Sized,
    O::Error: std::fmt::Display,
{
    let mut n = 0;
    for set in load_jsonl::<_, SampleSet>(input, Mode::Strict) {
        let set = set?;
        let partition = greedy_cluster(&set, oracle).map_err(|e| anyhow::anyhow!("sample set {}: {e}", n + 1))?;
        let line = ClusterLine { query: set.query.clone(), clusters: cluster_views(&set, partition) };
        writeln!(output, "{}", serde_json::to_string(&line)?)?;
        n += 1;
    }
    output.flush()?;
    Ok(n)
}
