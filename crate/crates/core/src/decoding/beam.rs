use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{checked_logits, DecodingConfig, DecodingMethod, LogitProvider};
use crate::error::DecodeError;
use crate::math::log_softmax;
use crate::records::{FinishReason, GenerationSample, SampleSet, TokenScore, Validate};

#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<u32>,
    logprobs: Vec<f64>,
    score: f64,
    created: u64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    token: u32,
    created: u64,
    parent: usize,
    logprob: f64,
}

fn rank_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then(a.token.cmp(&b.token)).then(a.created.cmp(&b.created))
}

fn rank_finished(a: &(Hypothesis, FinishReason), b: &(Hypothesis, FinishReason)) -> Ordering {
    b.0.score.total_cmp(&a.0.score).then_with(|| a.0.ids.cmp(&b.0.ids)).then(a.0.created.cmp(&b.0.created))
}

/// Beam search ranked by total sequence log-probability, no length penalty.
///
/// Keeps `k = max(beam_width, num_return_sequences)` live hypotheses. A
/// candidate ending in the stop token moves to the finished pool when it ranks
/// inside the top `k`; hypotheses reaching `max_tokens` finish as truncated.
/// Search ends once at least `num_return_sequences` hypotheses are finished
/// and no live hypothesis scores above the worst of those, or when nothing is
/// live. Ties break by token id, then hypothesis creation order. Token
/// logprobs come from the untempered softmax.
pub fn beam_search<P: LogitProvider + ?Sized>(
    model: &P,
    query: &str,
    prompt: &[u32],
    config: &DecodingConfig,
) -> Result<SampleSet, DecodeError> {
    config.validate()?;
    if config.method != DecodingMethod::Beam {
        return Err(DecodeError::WrongMethod(config.method.as_str()));
    }
    let k = config.effective_beam_width();
    let wanted = config.num_return_sequences;
    let stop = model.stop_token_id();

    let mut next_id: u64 = 1;
    let mut live = alloc::vec![Hypothesis { ids: Vec::new(), logprobs: Vec::new(), score: 0.0, created: 0 }];
    let mut finished: Vec<(Hypothesis, FinishReason)> = Vec::new();

    for step in 0..config.max_tokens {
        let mut candidates = Vec::new();
        for (parent, h) in live.iter().enumerate() {
            let mut prefix = prompt.to_vec();
            prefix.extend_from_slice(&h.ids);
            let logits = checked_logits(model, &prefix)?;
            for (token, lp) in log_softmax(&logits, 1.0).into_iter().enumerate() {
                if libm::exp(lp) == 0.0 {
                    continue;
                }
                let lp = lp.min(0.0);
                candidates.push(Candidate { score: h.score + lp, token: token as u32, created: h.created, parent, logprob: lp });
            }
        }
        candidates.sort_by(rank_candidates);

        let mut next_live = Vec::with_capacity(k);
        for (rank, c) in candidates.iter().enumerate() {
            if next_live.len() == k {
                break;
            }
            let is_stop = c.token == stop;
            if is_stop && rank >= k {
                continue;
            }
            let parent = &live[c.parent];
            let mut ids = parent.ids.clone();
            ids.push(c.token);
            let mut logprobs = parent.logprobs.clone();
            logprobs.push(c.logprob);
            let h = Hypothesis { ids, logprobs, score: c.score, created: next_id };
            next_id += 1;
            if is_stop {
                finished.push((h, FinishReason::Stop));
            } else {
                next_live.push(h);
            }
        }
        live = next_live;

        if step + 1 == config.max_tokens {
            finished.extend(live.drain(..).map(|h| (h, FinishReason::MaxTokens)));
        }
        if live.is_empty() {
            break;
        }
        if finished.len() >= wanted {
            finished.sort_by(rank_finished);
            let floor = finished[wanted - 1].0.score;
            if live.iter().all(|h| h.score < floor) {
                break;
            }
        }
    }

    finished.sort_by(rank_finished);
    finished.truncate(wanted);
    let samples = finished
        .into_iter()
        .map(|(h, finish_reason)| {
            let generated = if finish_reason == FinishReason::Stop { &h.ids[..h.ids.len() - 1] } else { &h.ids[..] };
            GenerationSample {
                text: model.detokenize(generated),
                tokens: h
                    .ids
                    .iter()
                    .zip(&h.logprobs)
                    .map(|(&id, &lp)| TokenScore::new(model.token_text(id), Some(id), lp))
                    .collect(),
                finish_reason,
            }
        })
        .collect();
    Ok(SampleSet {
        query: query.into(),
        samples,
        model_id: model.model_id(),
        decoding: DecodingConfig { internal_beam_width: Some(k), ..config.clone() },
    })
}
