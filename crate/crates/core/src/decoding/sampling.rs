use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{checked_logits, nucleus_filter, softmax_with_temperature, DecodingConfig, DecodingMethod, LogitProvider};
use crate::error::DecodeError;
use crate::records::{FinishReason, GenerationSample, SampleSet, TokenScore, Validate};

/// Inverse-CDF draw in token-id order. Zero-mass tokens are never chosen.
fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        cumulative += p;
        if target < cumulative {
            return i;
        }
    }
    last_positive
}

/// Temperature or nucleus sampling of `num_return_sequences` independent
/// sequences from one ChaCha8 stream seeded with `config.seed`.
///
/// Each token's logprob is the log of its probability under the distribution it
/// was drawn from (after temperature and, for top-p, after renormalization).
pub fn sample_decode<P: LogitProvider + ?Sized>(
    model: &P,
    query: &str,
    prompt: &[u32],
    config: &DecodingConfig,
) -> Result<SampleSet, DecodeError> {
    config.validate()?;
    if config.method == DecodingMethod::Beam {
        return Err(DecodeError::WrongMethod("beam"));
    }
    let stop = model.stop_token_id();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.num_return_sequences);
    for _ in 0..config.num_return_sequences {
        let mut prefix = prompt.to_vec();
        let mut generated: Vec<u32> = Vec::new();
        let mut tokens = Vec::new();
        let mut finish_reason = FinishReason::MaxTokens;
        for _ in 0..config.max_tokens {
            let logits = checked_logits(model, &prefix)?;
            let mut probs = softmax_with_temperature(&logits, config.temperature)?;
            if config.method == DecodingMethod::TopP {
                probs = nucleus_filter(&probs, config.top_p)?.probs;
            }
            let id = draw(&probs, &mut rng);
            let token_id = id as u32;
            tokens.push(TokenScore::new(model.token_text(token_id), Some(token_id), libm::log(probs[id]).min(0.0)));
            prefix.push(token_id);
            if token_id == stop {
                finish_reason = FinishReason::Stop;
                break;
            }
            generated.push(token_id);
        }
        samples.push(GenerationSample { text: model.detokenize(&generated), tokens, finish_reason });
    }
    Ok(SampleSet {
        query: query.into(),
        samples,
        model_id: model.model_id(),
        decoding: DecodingConfig { internal_beam_width: None, ..config.clone() },
    })
}
