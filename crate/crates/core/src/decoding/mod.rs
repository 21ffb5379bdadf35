//! Decoding over an abstract next-token logit provider.
//!
//! Three methods are provided: temperature sampling, nucleus (top-p) sampling
//! and beam search. Every emitted token carries the log-probability of the
//! distribution it was actually chosen from, so the output feeds straight into
//! [`crate::entropy`].

mod beam;
mod lookup;
mod sampling;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{DecodeError, ProviderError, ValidationError};
use crate::records::{SampleSet, Validate};

pub use beam::beam_search;
pub use lookup::{enumerate_all_sequences, EnumeratedSequence, LookupTableModel, LookupTableSpec, ENUMERATION_LIMIT};
pub use sampling::sample_decode;

/// Source of next-token logits. `next_logits` must be a pure function of the
/// prefix and tolerate concurrent calls.
pub trait LogitProvider {
    fn vocab_size(&self) -> usize;

    fn stop_token_id(&self) -> u32;

    /// Logits for the token following `prefix` (prompt ids then generated ids).
    fn next_logits(&self, prefix: &[u32]) -> Result<Vec<f64>, ProviderError>;

    fn token_text(&self, id: u32) -> String;

    /// Surface text for a run of generated ids (stop token excluded).
    fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter().map(|&id| self.token_text(id)).collect()
    }

    fn model_id(&self) -> String {
        String::from("unknown")
    }
}

impl<P: LogitProvider + ?Sized> LogitProvider for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn stop_token_id(&self) -> u32 {
        (**self).stop_token_id()
    }
    fn next_logits(&self, prefix: &[u32]) -> Result<Vec<f64>, ProviderError> {
        (**self).next_logits(prefix)
    }
    fn token_text(&self, id: u32) -> String {
        (**self).token_text(id)
    }
    fn detokenize(&self, ids: &[u32]) -> String {
        (**self).detokenize(ids)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

/// Fetches logits and enforces the length and finiteness contract.
pub(crate) fn checked_logits<P: LogitProvider + ?Sized>(model: &P, prefix: &[u32]) -> Result<Vec<f64>, ProviderError> {
    let logits = model.next_logits(prefix)?;
    if logits.len() != model.vocab_size() {
        return Err(ProviderError::LengthMismatch { expected: model.vocab_size(), actual: logits.len() });
    }
    if let Some(index) = logits.iter().position(|l| !l.is_finite()) {
        return Err(ProviderError::NonFinite { index });
    }
    Ok(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMethod {
    Temperature,
    TopP,
    #[default]
    Beam,
}

impl DecodingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Temperature => "temperature",
            Self::TopP => "top_p",
            Self::Beam => "beam",
        }
    }
}

/// Decoding parameters. Defaults: beam search, width 3, five returned sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub method: DecodingMethod,
    pub temperature: f64,
    pub top_p: f64,
    pub beam_width: usize,
    pub num_return_sequences: usize,
    pub max_tokens: usize,
    pub seed: u64,
    /// Live hypotheses actually kept by beam search, `max(beam_width, num_return_sequences)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub internal_beam_width: Option<usize>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            method: DecodingMethod::Beam,
            temperature: 1.0,
            top_p: 1.0,
            beam_width: 3,
            num_return_sequences: 5,
            max_tokens: 16,
            seed: 0,
            internal_beam_width: None,
        }
    }
}

impl DecodingConfig {
    pub fn with_method(method: DecodingMethod) -> Self {
        Self { method, ..Self::default() }
    }

    /// Number of live hypotheses beam search keeps.
    pub fn effective_beam_width(&self) -> usize {
        self.beam_width.max(self.num_return_sequences)
    }
}

impl Validate for DecodingConfig {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.num_return_sequences == 0 {
            return Err(ValidationError::new("num_return_sequences", "must be ≥ 1"));
        }
        if self.max_tokens == 0 {
            return Err(ValidationError::new("max_tokens", "must be ≥ 1"));
        }
        // serialized even when the method ignores them
        if !self.temperature.is_finite() {
            return Err(ValidationError::new("temperature", "must be finite"));
        }
        if !self.top_p.is_finite() {
            return Err(ValidationError::new("top_p", "must be finite"));
        }
        match self.method {
            DecodingMethod::Temperature | DecodingMethod::TopP => {
                if !(self.temperature.is_finite() && self.temperature > 0.0) {
                    return Err(ValidationError::new("temperature", "must be > 0"));
                }
                if self.method == DecodingMethod::TopP && !(self.top_p > 0.0 && self.top_p <= 1.0) {
                    return Err(ValidationError::new("top_p", "must be in (0, 1]"));
                }
            }
            DecodingMethod::Beam => {
                if self.beam_width == 0 {
                    return Err(ValidationError::new("beam_width", "must be ≥ 1"));
                }
            }
        }
        Ok(())
    }
}

/// `exp(l_i / T) / Σ_j exp(l_j / T)`, max-subtracted.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, DecodeError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(DecodeError::Temperature(temperature));
    }
    if logits.is_empty() {
        return Err(DecodeError::EmptyLogits);
    }
    if let Some(index) = logits.iter().position(|l| !l.is_finite()) {
        return Err(ProviderError::NonFinite { index }.into());
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| libm::exp((l - max) / temperature)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Result of [`nucleus_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    /// Kept token ids, ascending.
    pub kept: Vec<u32>,
    /// Full-length vector: renormalized mass on kept ids, zero elsewhere.
    pub probs: Vec<f64>,
}

/// Keeps the smallest most-probable prefix whose cumulative mass reaches `p`
/// (inclusive, with 1e-12 slack for summation error), ties by ascending id,
/// and renormalizes it. `p = 1` returns the input unchanged.
pub fn nucleus_filter(probs: &[f64], p: f64) -> Result<Nucleus, DecodeError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DecodeError::TopP(p));
    }
    if p == 1.0 {
        return Ok(Nucleus { kept: (0..probs.len() as u32).collect(), probs: probs.to_vec() });
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut cumulative = 0.0;
    let mut cut = order.len();
    for (rank, &id) in order.iter().enumerate() {
        cumulative += probs[id];
        if cumulative >= p - 1e-12 {
            cut = rank + 1;
            break;
        }
    }
    let mut kept: Vec<u32> = order[..cut].iter().map(|&i| i as u32).collect();
    kept.sort_unstable();
    let mass: f64 = kept.iter().map(|&i| probs[i as usize]).sum();
    let mut out = alloc::vec![0.0; probs.len()];
    for &i in &kept {
        out[i as usize] = probs[i as usize] / mass;
    }
    Ok(Nucleus { kept, probs: out })
}

/// Runs the decoder selected by `config.method`.
pub fn decode<P: LogitProvider + ?Sized>(
    model: &P,
    query: &str,
    prompt: &[u32],
    config: &DecodingConfig,
) -> Result<SampleSet, DecodeError> {
    match config.method {
        DecodingMethod::Temperature | DecodingMethod::TopP => sample_decode(model, query, prompt, config),
        DecodingMethod::Beam => beam_search(model, query, prompt, config),
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}
