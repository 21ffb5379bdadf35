//! Log-space helpers shared by the entropy and decoding code.

/// `log(Σ exp(x_i))` without overflow or underflow.
///
/// Returns `-inf` for an empty input or when every term is `-inf`.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = iter.map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

/// Log-softmax of `logits / temperature`, max-subtracted.
pub(crate) fn log_softmax(logits: &[f64], temperature: f64) -> alloc::vec::Vec<f64> {
    let scaled: alloc::vec::Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let lse = log_sum_exp(scaled.iter().copied());
    scaled.into_iter().map(|s| s - lse).collect()
}
