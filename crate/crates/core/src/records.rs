//! Data model for generations and benchmark items.
//!
//! Every type here is plain data with serde derives; the JSONL reader and
//! writer live in the `uq` crate. Log-probabilities are natural-log units.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::decoding::DecodingConfig;
use crate::entropy::UncertaintyReport;
use crate::error::ValidationError;

/// Invariant check for a record. Parsers call this on every record they build.
pub trait Validate {
    fn validate(&self) -> Result<(), ValidationError>;
}

/// One token of a generation with the log-probability the model assigned it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_id: Option<u32>,
    pub logprob: f64,
}

impl TokenScore {
    pub fn new(text: impl Into<String>, token_id: Option<u32>, logprob: f64) -> Self {
        Self { text: text.into(), token_id, logprob }
    }
}

impl Validate for TokenScore {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.text.is_empty() {
            return Err(ValidationError::new("text", "must be non-empty"));
        }
        if !self.logprob.is_finite() {
            return Err(ValidationError::new("logprob", "must be finite"));
        }
        if self.logprob > 0.0 {
            return Err(ValidationError::new("logprob", "logprob > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    MaxTokens,
}

/// One generated sequence.
///
/// `text` is authoritative and need not equal the concatenation of the token
/// texts, since tokenizers insert markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub text: String,
    pub tokens: Vec<TokenScore>,
    pub finish_reason: FinishReason,
}

impl GenerationSample {
    /// Sum of token log-probabilities, `log P(s | x)`.
    pub fn log_likelihood(&self) -> f64 {
        self.tokens.iter().map(|t| t.logprob).sum()
    }

    /// Number of tokens, `N_s`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// True when both samples walk the same token path.
    pub fn same_path(&self, other: &GenerationSample) -> bool {
        self.tokens.len() == other.tokens.len()
            && self
                .tokens
                .iter()
                .zip(&other.tokens)
                .all(|(a, b)| a.token_id == b.token_id && a.text == b.text)
    }
}

impl Validate for GenerationSample {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.tokens.is_empty() {
            return Err(ValidationError::new("tokens", "must be non-empty"));
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            tok.validate().map_err(|e| e.within(&format!("tokens[{i}]")))?;
        }
        let ll = self.log_likelihood();
        if !ll.is_finite() {
            return Err(ValidationError::new("tokens", "sequence log-likelihood is not finite"));
        }
        Ok(())
    }
}

/// The M generations produced for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub query: String,
    pub samples: Vec<GenerationSample>,
    pub model_id: String,
    #[serde(default)]
    pub decoding: DecodingConfig,
}

impl SampleSet {
    /// Number of samples, `M`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the highest-likelihood sample; the first one wins ties.
    pub fn top_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.samples.iter().enumerate() {
            let ll = s.log_likelihood();
            match best {
                Some((_, b)) if ll <= b => {}
                _ => best = Some((i, ll)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// Drops samples whose normalized text repeats an earlier sample's.
    pub fn dedup_exact(&self) -> SampleSet {
        let mut seen: Vec<String> = Vec::new();
        let mut samples = Vec::new();
        for s in &self.samples {
            let key = crate::clustering::normalize_for_match(&s.text);
            if !seen.contains(&key) {
                seen.push(key);
                samples.push(s.clone());
            }
        }
        SampleSet { samples, ..self.clone() }
    }
}

impl Validate for SampleSet {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.samples.is_empty() {
            return Err(ValidationError::new("samples", "M must be ≥ 1"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            s.validate().map_err(|e| e.within(&format!("samples[{i}]")))?;
        }
        self.decoding.validate().map_err(|e| e.within("decoding"))
    }
}

/// One evaluation item from a benchmark file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub id: String,
    pub query: String,
    pub gold_answer: String,
    pub domain: String,
    pub benchmark: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved_passages: Option<Vec<String>>,
}

impl Validate for BenchmarkRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        for (field, value) in [("id", &self.id), ("query", &self.query), ("gold_answer", &self.gold_answer)] {
            if value.is_empty() {
                return Err(ValidationError::new(field, "must be non-empty"));
            }
        }
        Ok(())
    }
}

/// A benchmark item joined with its generations, uncertainty report and grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedRecord {
    pub record: BenchmarkRecord,
    pub sample_set: SampleSet,
    pub report: UncertaintyReport,
    pub top_prediction: String,
    pub is_correct: bool,
}

impl Validate for EvaluatedRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        self.record.validate().map_err(|e| e.within("record"))?;
        self.sample_set.validate().map_err(|e| e.within("sample_set"))?;
        self.report.validate().map_err(|e| e.within("report"))?;
        if self.report.per_sequence_entropy.len() != self.sample_set.len() {
            return Err(ValidationError::new(
                "report.per_sequence_entropy",
                "length must equal the number of samples",
            ));
        }
        let top = self.sample_set.top_index().expect("validated non-empty");
        if self.sample_set.samples[top].text != self.top_prediction {
            return Err(ValidationError::new(
                "top_prediction",
                "must equal the text of the highest-likelihood sample",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn sample(text: &str, logprobs: &[f64]) -> GenerationSample {
        GenerationSample {
            text: text.into(),
            tokens: logprobs.iter().map(|&lp| TokenScore::new("t", None, lp)).collect(),
            finish_reason: FinishReason::Stop,
        }
    }

    #[test]
    fn positive_logprob_is_rejected() {
        let err = TokenScore::new("a", None, 0.5).validate().unwrap_err();
        assert_eq!(err.field, "logprob");
        assert_eq!(err.message, "logprob > 0");
    }

    #[test]
    fn nested_field_paths() {
        let set = SampleSet {
            query: "q".into(),
            samples: vec![sample("a", &[-0.1]), sample("b", &[-0.2, 0.3])],
            model_id: "m".into(),
            decoding: DecodingConfig::default(),
        };
        let err = set.validate().unwrap_err();
        assert_eq!(err.field, "samples[1].tokens[1].logprob");
    }

    #[test]
    fn empty_samples_rejected() {
        let set = SampleSet { query: "q".into(), samples: vec![], model_id: "m".into(), decoding: Default::default() };
        let err = set.validate().unwrap_err();
        assert_eq!(err.field, "samples");
        assert_eq!(err.message, "M must be ≥ 1");
    }

    #[test]
    fn empty_tokens_rejected() {
        let s = GenerationSample { text: "x".into(), tokens: vec![], finish_reason: FinishReason::Stop };
        assert_eq!(s.validate().unwrap_err().field, "tokens");
    }

    #[test]
    fn benchmark_record_requires_fields() {
        let mut r = BenchmarkRecord {
            id: "q1".into(),
            query: "Which field?".into(),
            gold_answer: "Biology".into(),
            domain: "Biology".into(),
            benchmark: "FOS".into(),
            retrieved_passages: None,
        };
        assert!(r.validate().is_ok());
        r.gold_answer.clear();
        assert_eq!(r.validate().unwrap_err().field, "gold_answer");
    }

    #[test]
    fn top_index_ties_go_to_first() {
        let set = SampleSet {
            query: "q".into(),
            samples: vec![sample("a", &[-1.0]), sample("b", &[-0.5]), sample("c", &[-0.5])],
            model_id: "m".into(),
            decoding: Default::default(),
        };
        assert_eq!(set.top_index(), Some(1));
    }

    #[test]
    fn dedup_exact_keeps_first() {
        let set = SampleSet {
            query: "q".into(),
            samples: vec![sample("Tokyo", &[-1.0]), sample("tokyo.", &[-0.5]), sample("Kyoto", &[-0.5])],
            model_id: "m".into(),
            decoding: Default::default(),
        };
        let d = set.dedup_exact();
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples[0].text, "Tokyo");
        assert_eq!(d.samples[1].text, "Kyoto");
    }
}
