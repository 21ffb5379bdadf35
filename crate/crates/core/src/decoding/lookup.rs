//! Enumerable toy models used as exact oracles for the decoders.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::LogitProvider;
use crate::error::{DecodeError, ProviderError, ValidationError};
use crate::records::FinishReason;

const MAX_VOCAB: usize = 16;

/// Logit standing in for a zero-probability token; its softmax weight is 0.
const ZERO_PROB_LOGIT: f64 = -1.0e300;

/// Upper bound on `vocab^max_len` accepted by [`enumerate_all_sequences`].
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// On-disk form: `{"vocab": [...], "stop": 2, "table": {"": [...], "0,1": [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTableSpec {
    pub vocab: Vec<String>,
    pub stop: u32,
    pub table: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Joins token texts into sequence text. Defaults to a single space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separator: Option<String>,
}

/// Explicit prefix → next-token distribution map over at most 16 tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTableModel {
    vocab: Vec<String>,
    stop: u32,
    table: BTreeMap<Vec<u32>, Vec<f64>>,
    model_id: String,
    separator: String,
}

fn parse_prefix(key: &str) -> Result<Vec<u32>, ValidationError> {
    if key.is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| ValidationError::new(format!("table[{key:?}]"), "prefix must be comma-joined token ids"))
        })
        .collect()
}

fn prefix_key(prefix: &[u32]) -> String {
    let parts: Vec<String> = prefix.iter().map(|id| id.to_string()).collect();
    parts.join(",")
}

impl LookupTableModel {
    pub fn from_spec(spec: LookupTableSpec) -> Result<Self, ValidationError> {
        let mut table = BTreeMap::new();
        for (key, probs) in spec.table {
            table.insert(parse_prefix(&key)?, probs);
        }
        let mut model = Self::from_table(spec.vocab, spec.stop, table)?;
        if let Some(id) = spec.model_id {
            model.model_id = id;
        }
        if let Some(sep) = spec.separator {
            model.separator = sep;
        }
        Ok(model)
    }

    pub fn from_table(
        vocab: Vec<String>,
        stop: u32,
        table: impl IntoIterator<Item = (Vec<u32>, Vec<f64>)>,
    ) -> Result<Self, ValidationError> {
        if vocab.is_empty() || vocab.len() > MAX_VOCAB {
            return Err(ValidationError::new("vocab", format!("size must be in 1..={MAX_VOCAB}")));
        }
        if let Some(i) = vocab.iter().position(|t| t.is_empty()) {
            return Err(ValidationError::new(format!("vocab[{i}]"), "token text must be non-empty"));
        }
        if stop as usize >= vocab.len() {
            return Err(ValidationError::new("stop", "must index into vocab"));
        }
        let table: BTreeMap<Vec<u32>, Vec<f64>> = table.into_iter().collect();
        for (prefix, probs) in &table {
            let field = format!("table[{:?}]", prefix_key(prefix));
            if prefix.iter().any(|&id| id as usize >= vocab.len()) {
                return Err(ValidationError::new(field, "prefix token id out of range"));
            }
            if probs.len() != vocab.len() {
                return Err(ValidationError::new(field, "probability vector length must equal vocab size"));
            }
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(ValidationError::new(field, "probabilities must be finite and ≥ 0"));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ValidationError::new(field, format!("probabilities sum to {total}, not 1")));
            }
        }
        Ok(Self { vocab, stop, table, model_id: String::from("lookup-table"), separator: String::from(" ") })
    }

    pub fn to_spec(&self) -> LookupTableSpec {
        LookupTableSpec {
            vocab: self.vocab.clone(),
            stop: self.stop,
            table: self.table.iter().map(|(k, v)| (prefix_key(k), v.clone())).collect(),
            model_id: Some(self.model_id.clone()),
            separator: Some(self.separator.clone()),
        }
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Next-token distribution after `prefix`.
    pub fn probs(&self, prefix: &[u32]) -> Option<&[f64]> {
        self.table.get(prefix).map(Vec::as_slice)
    }

    /// Exact probability of a token path (stop token included if present).
    pub fn path_probability(&self, prompt: &[u32], path: &[u32]) -> Option<f64> {
        let mut prefix = prompt.to_vec();
        let mut p = 1.0;
        for &id in path {
            p *= self.probs(&prefix)?.get(id as usize)?;
            prefix.push(id);
        }
        Some(p)
    }
}

impl LogitProvider for LookupTableModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn stop_token_id(&self) -> u32 {
        self.stop
    }

    fn next_logits(&self, prefix: &[u32]) -> Result<Vec<f64>, ProviderError> {
        let probs = self.probs(prefix).ok_or_else(|| ProviderError::UnknownPrefix(prefix_key(prefix)))?;
        Ok(probs.iter().map(|&p| if p > 0.0 { libm::log(p) } else { ZERO_PROB_LOGIT }).collect())
    }

    fn token_text(&self, id: u32) -> String {
        self.vocab.get(id as usize).cloned().unwrap_or_else(|| format!("<{id}>"))
    }

    fn detokenize(&self, ids: &[u32]) -> String {
        let words: Vec<&str> = ids.iter().map(|&id| self.vocab[id as usize].as_str()).collect();
        words.join(&self.separator)
    }

    fn model_id(&self) -> String {
        self.model_id.clone()
    }
}

/// One complete sequence and its exact probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedSequence {
    /// Generated ids; ends with the stop token when `finish_reason` is `Stop`.
    pub token_ids: Vec<u32>,
    pub text: String,
    pub probability: f64,
    pub finish_reason: FinishReason,
}

/// Every positive-probability sequence of at most `max_len` tokens, in
/// depth-first token-id order. Sequences cut at `max_len` count as terminal,
/// so the probabilities sum to one.
pub fn enumerate_all_sequences(
    model: &LookupTableModel,
    prompt: &[u32],
    max_len: usize,
) -> Result<Vec<EnumeratedSequence>, DecodeError> {
    let vocab = model.vocab_size();
    let within = u32::try_from(max_len)
        .ok()
        .and_then(|e| vocab.checked_pow(e))
        .is_some_and(|n| n <= ENUMERATION_LIMIT);
    if !within {
        return Err(DecodeError::EnumerationBound { vocab, max_len });
    }
    let mut out = Vec::new();
    if max_len == 0 {
        return Ok(out);
    }
    let mut path = Vec::new();
    walk(model, prompt, &mut path, 1.0, max_len, &mut out)?;
    Ok(out)
}

fn walk(
    model: &LookupTableModel,
    prompt: &[u32],
    path: &mut Vec<u32>,
    prob: f64,
    max_len: usize,
    out: &mut Vec<EnumeratedSequence>,
) -> Result<(), DecodeError> {
    let mut prefix = prompt.to_vec();
    prefix.extend_from_slice(path);
    let probs = model.probs(&prefix).ok_or_else(|| ProviderError::UnknownPrefix(prefix_key(&prefix)))?;
    for (id, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let id = id as u32;
        path.push(id);
        let total = prob * p;
        if id == model.stop || path.len() == max_len {
            let finish_reason = if id == model.stop { FinishReason::Stop } else { FinishReason::MaxTokens };
            let generated = if id == model.stop { &path[..path.len() - 1] } else { &path[..] };
            out.push(EnumeratedSequence {
                token_ids: path.clone(),
                text: model.detokenize(generated),
                probability: total,
                finish_reason,
            });
        } else {
            walk(model, prompt, path, total, max_len, out)?;
        }
        path.pop();
    }
    Ok(())
}
