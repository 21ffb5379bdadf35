//! The JSONL record format: one UTF-8 JSON object per line, snake_case fields.
//!
//! Floats are written in their shortest round-trip form and parsed exactly, so
//! `parse(serialize(r)) == r` holds bit-for-bit. NaN and infinities are
//! rejected on both sides.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::marker::PhantomData;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uq_core::{BenchmarkRecord, EvaluatedRecord, SampleSet, Validate, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Schema {
    Benchmark,
    Evaluated,
    SampleSet,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::Benchmark => "benchmark",
            Schema::Evaluated => "evaluated",
            Schema::SampleSet => "sample_set",
        })
    }
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "benchmark" => Ok(Schema::Benchmark),
            "evaluated" => Ok(Schema::Evaluated),
            "sample_set" => Ok(Schema::SampleSet),
            other => Err(format!("unknown schema {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("validation failed: {0}")]
    Validation(#[from] ValidationError),
}

impl RecordError {
    fn from_json(line: &str, err: serde_json::Error) -> Self {
        if err.is_data() {
            // type mismatches and missing fields are schema problems, reported by field
            let message = err.to_string();
            let field = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("missing field"))
                .unwrap_or("")
                .to_string();
            return RecordError::Validation(ValidationError::new(field, message));
        }
        RecordError::Json { offset: byte_offset(line, err.line(), err.column()), message: err.to_string() }
    }
}

/// serde_json reports 1-based line and column (in bytes); convert to a 0-based offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// A record type that can appear in a JSONL file.
pub trait JsonlRecord: Serialize + DeserializeOwned + Validate {
    const SCHEMA: Schema;

    /// Identifier that must be unique within a file, if the schema has one.
    fn record_id(&self) -> Option<&str> {
        None
    }
}

impl JsonlRecord for BenchmarkRecord {
    const SCHEMA: Schema = Schema::Benchmark;

    fn record_id(&self) -> Option<&str> {
        Some(&self.id)
    }
}

impl JsonlRecord for EvaluatedRecord {
    const SCHEMA: Schema = Schema::Evaluated;

    fn record_id(&self) -> Option<&str> {
        Some(&self.record.id)
    }
}

impl JsonlRecord for SampleSet {
    const SCHEMA: Schema = Schema::SampleSet;
}

/// Deserializes without validating; errors carry a byte offset or a field name.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, RecordError> {
    serde_json::from_str(text).map_err(|e| RecordError::from_json(text, e))
}

/// Parses and validates one line as `T`.
pub fn parse_line<T: JsonlRecord>(line: &str) -> Result<T, RecordError> {
    let record: T = parse_json(line)?;
    record.validate()?;
    Ok(record)
}

/// Any of the three record kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Benchmark(BenchmarkRecord),
    Evaluated(Box<EvaluatedRecord>),
    SampleSet(SampleSet),
}

impl Record {
    pub fn schema(&self) -> Schema {
        match self {
            Record::Benchmark(_) => Schema::Benchmark,
            Record::Evaluated(_) => Schema::Evaluated,
            Record::SampleSet(_) => Schema::SampleSet,
        }
    }

    fn id(&self) -> Option<&str> {
        match self {
            Record::Benchmark(r) => r.record_id(),
            Record::Evaluated(r) => r.record_id(),
            Record::SampleSet(r) => r.record_id(),
        }
    }
}

impl From<BenchmarkRecord> for Record {
    fn from(r: BenchmarkRecord) -> Self {
        Record::Benchmark(r)
    }
}

impl From<EvaluatedRecord> for Record {
    fn from(r: EvaluatedRecord) -> Self {
        Record::Evaluated(Box::new(r))
    }
}

impl From<SampleSet> for Record {
    fn from(r: SampleSet) -> Self {
        Record::SampleSet(r)
    }
}

pub fn parse_record_line(line: &str, schema: Schema) -> Result<Record, RecordError> {
    Ok(match schema {
        Schema::Benchmark => Record::Benchmark(parse_line(line)?),
        Schema::Evaluated => Record::Evaluated(Box::new(parse_line(line)?)),
        Schema::SampleSet => Record::SampleSet(parse_line(line)?),
    })
}

/// One-line JSON for a valid record. Invalid records (including NaN values) are refused.
pub fn serialize_record<T: JsonlRecord>(record: &T) -> Result<String, ValidationError> {
    record.validate()?;
    Ok(serde_json::to_string(record).expect("validated records serialize"))
}

pub fn serialize_any(record: &Record) -> Result<String, ValidationError> {
    match record {
        Record::Benchmark(r) => serialize_record(r),
        Record::Evaluated(r) => serialize_record(r.as_ref()),
        Record::SampleSet(r) => serialize_record(r),
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {source}")]
    Io { line: usize, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The first bad line ends the stream with an error.
    Strict,
    /// Bad lines are skipped and counted.
    Lenient,
}

/// Lazily reads records from newline-delimited input, one line buffered at a
/// time. Blank lines are skipped. Unique ids are tracked for schemas that
/// have them, which is the only state growing with the file.
pub struct JsonlReader<R, T> {
    source: R,
    mode: Mode,
    buf: String,
    line: usize,
    skipped: usize,
    seen_ids: HashSet<String>,
    done: bool,
    _record: PhantomData<fn() -> T>,
}

impl<R: BufRead, T: JsonlRecord> JsonlReader<R, T> {
    pub fn new(source: R, mode: Mode) -> Self {
        Self { source, mode, buf: String::new(), line: 0, skipped: 0, seen_ids: HashSet::new(), done: false, _record: PhantomData }
    }

    /// Lines rejected so far in lenient mode.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn next_record(&mut self) -> Option<Result<T, LoadError>> {
        loop {
            self.buf.clear();
            self.line += 1;
            let line = self.line;
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(source) => return Some(Err(LoadError::Io { line, source })),
            }
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() {
                continue;
            }
            let result = match parse_line::<T>(text) {
                Ok(r) => match r.record_id() {
                    Some(id) if !self.seen_ids.insert(id.to_string()) => {
                        Err(LoadError::DuplicateId { line, id: id.to_string() })
                    }
                    _ => Ok(r),
                },
                Err(source) => Err(LoadError::Record { line, source }),
            };
            match (result, self.mode) {
                (Ok(r), _) => return Some(Ok(r)),
                (Err(e), Mode::Strict) => return Some(Err(e)),
                (Err(_), Mode::Lenient) => self.skipped += 1,
            }
        }
    }
}

impl<R: BufRead, T: JsonlRecord> Iterator for JsonlReader<R, T> {
    type Item = Result<T, LoadError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record();
        if matches!(item, None | Some(Err(_))) {
            self.done = true;
        }
        item
    }
}

pub fn load_jsonl<R: BufRead, T: JsonlRecord>(source: R, mode: Mode) -> JsonlReader<R, T> {
    JsonlReader::new(source, mode)
}

/// Reads every record of a file into memory, strict mode.
pub fn read_all<T: JsonlRecord>(path: &std::path::Path) -> anyhow::Result<Vec<T>> {
    use anyhow::Context;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_jsonl(std::io::BufReader::new(file), Mode::Strict)
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

/// Counts from validating a file against a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub errors: usize,
}

/// Validates every line of `source` as `schema`. In strict mode the first
/// failure is returned as an error.
pub fn ingest<R: BufRead>(source: R, schema: Schema, mode: Mode) -> Result<IngestSummary, LoadError> {
    fn count<R: BufRead, T: JsonlRecord>(source: R, mode: Mode) -> Result<IngestSummary, LoadError> {
        let mut reader: JsonlReader<R, T> = JsonlReader::new(source, mode);
        let mut records = 0;
        for item in reader.by_ref() {
            item?;
            records += 1;
        }
        Ok(IngestSummary { records, errors: reader.skipped() })
    }
    match schema {
        Schema::Benchmark => count::<R, BenchmarkRecord>(source, mode),
        Schema::Evaluated => count::<R, EvaluatedRecord>(source, mode),
        Schema::SampleSet => count::<R, SampleSet>(source, mode),
    }
}

#[doc(hidden)]
pub fn record_id(record: &Record) -> Option<&str> {
    record.id()
}
