//! Predictive, normalized predictive and semantic entropy.
//!
//! All values are reported in nats and are non-negative: the printed sums of
//! `p log p` are negated. Two per-sequence estimators are available:
//!
//! * [`EntropyVariant::TokenWeighted`]: `-Σ_i p_i log p_i` over the realized tokens
//! * [`EntropyVariant::LogLikelihood`]: `-Σ_i log p_i`, the negative sequence log-likelihood
//!
//! Predictive entropy averages the per-sequence value over the M samples;
//! the normalized form divides each sequence's value by its token count first.
//! Semantic entropy averages `-log p(C)` over meaning clusters, where `p(C)`
//! sums the likelihoods of the distinct sequences in the cluster.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::clustering::{MeaningCluster, OracleKind};
use crate::error::{EntropyError, ValidationError};
use crate::math::log_sum_exp;
use crate::records::{GenerationSample, SampleSet, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyVariant {
    #[default]
    TokenWeighted,
    LogLikelihood,
}

/// Sign convention marker. Only one convention exists: reported entropies are ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    ReportNonnegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    pub variant: EntropyVariant,
    /// Applies to `per_sequence_entropy` in reports; `pe`/`npe` fix it themselves.
    pub length_normalize: bool,
    pub sign: Sign,
    /// Scale sequence likelihoods to sum to 1 over the sample set before clustering sums.
    pub renormalize_sample_probs: bool,
    /// Use `log P(s|x) / N_s` instead of `log P(s|x)` as the cluster member score.
    pub cluster_length_normalize: bool,
}

impl EntropyConfig {
    pub fn with_variant(variant: EntropyVariant) -> Self {
        Self { variant, ..Self::default() }
    }
}

/// Uncertainty measures for one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub pe: f64,
    pub npe: f64,
    pub se: f64,
    pub num_clusters: usize,
    pub per_sequence_entropy: Vec<f64>,
    pub config: EntropyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleKind>,
}

impl Validate for UncertaintyReport {
    fn validate(&self) -> Result<(), ValidationError> {
        for (name, v) in [("pe", self.pe), ("npe", self.npe), ("se", self.se)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ValidationError::new(name, "must be finite and ≥ 0"));
            }
        }
        for (i, v) in self.per_sequence_entropy.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(ValidationError::new(
                    alloc::format!("per_sequence_entropy[{i}]"),
                    "must be finite and ≥ 0",
                ));
            }
        }
        if self.num_clusters < 1 || self.num_clusters > self.per_sequence_entropy.len() {
            return Err(ValidationError::new("num_clusters", "must satisfy 1 ≤ num_clusters ≤ M"));
        }
        Ok(())
    }
}

fn check_tokens(sample: &GenerationSample) -> Result<(), EntropyError> {
    if sample.tokens.is_empty() {
        return Err(EntropyError::EmptySequence);
    }
    for (index, t) in sample.tokens.iter().enumerate() {
        if !t.logprob.is_finite() {
            return Err(EntropyError::NonFiniteLogprob { index, value: t.logprob });
        }
    }
    Ok(())
}

/// Entropy of one sequence under `config.variant`, divided by `N_s` when
/// `config.length_normalize` is set.
pub fn sequence_entropy(sample: &GenerationSample, config: &EntropyConfig) -> Result<f64, EntropyError> {
    check_tokens(sample)?;
    let total: f64 = match config.variant {
        EntropyVariant::TokenWeighted => {
            -sample.tokens.iter().map(|t| libm::exp(t.logprob) * t.logprob).sum::<f64>()
        }
        EntropyVariant::LogLikelihood => -sample.log_likelihood(),
    };
    let value = if config.length_normalize { total / sample.len() as f64 } else { total };
    // -0.0 -> 0.0
    Ok(value + 0.0)
}

fn mean_sequence_entropy(set: &SampleSet, config: &EntropyConfig, normalize: bool) -> Result<f64, EntropyError> {
    if set.samples.is_empty() {
        return Err(EntropyError::EmptySampleSet);
    }
    let cfg = EntropyConfig { length_normalize: normalize, ..*config };
    let mut sum = 0.0;
    for s in &set.samples {
        sum += sequence_entropy(s, &cfg)?;
    }
    Ok(sum / set.len() as f64)
}

/// `PE(x)`: mean unnormalized sequence entropy over the sample set.
pub fn predictive_entropy(set: &SampleSet, config: &EntropyConfig) -> Result<f64, EntropyError> {
    mean_sequence_entropy(set, config, false)
}

/// `NPE(x)`: mean length-normalized sequence entropy over the sample set.
pub fn normalized_predictive_entropy(set: &SampleSet, config: &EntropyConfig) -> Result<f64, EntropyError> {
    mean_sequence_entropy(set, config, true)
}

fn member_score(sample: &GenerationSample, config: &EntropyConfig) -> f64 {
    let ll = sample.log_likelihood();
    if config.cluster_length_normalize {
        ll / sample.len() as f64
    } else {
        ll
    }
}

/// Keeps the first sample of each distinct token path, preserving order.
fn distinct_paths(set: &SampleSet, indices: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in indices {
        if !kept.iter().any(|&k| set.samples[k].same_path(&set.samples[i])) {
            kept.push(i);
        }
    }
    kept
}

/// `log p(C | x)`: log of the summed likelihoods of the cluster's distinct
/// sequences, computed in log space. Repeated draws of the same token path
/// count once. The result is capped at 0 since a cluster probability never
/// exceeds one.
pub fn cluster_log_probability(
    cluster: &MeaningCluster,
    set: &SampleSet,
    config: &EntropyConfig,
) -> Result<f64, EntropyError> {
    if cluster.member_indices.is_empty() {
        return Err(EntropyError::EmptyCluster);
    }
    let m = set.len();
    let mut members = cluster.member_indices.clone();
    members.sort_unstable();
    for &i in &members {
        if i >= m {
            return Err(EntropyError::IndexOutOfRange { index: i, len: m });
        }
        check_tokens(&set.samples[i])?;
    }
    members.dedup();
    let kept = distinct_paths(set, members.into_iter());
    let lp = log_sum_exp(kept.iter().map(|&i| member_score(&set.samples[i], config)));
    let lp = if config.renormalize_sample_probs {
        let all = distinct_paths(set, 0..m);
        for &i in &all {
            check_tokens(&set.samples[i])?;
        }
        let z = log_sum_exp(all.iter().map(|&i| member_score(&set.samples[i], config)));
        lp - z
    } else {
        lp
    };
    Ok(lp.min(0.0))
}

/// Checks that `partition` covers `0..m` with disjoint member sets.
pub fn check_partition(partition: &[MeaningCluster], m: usize) -> Result<(), EntropyError> {
    let mut seen = alloc::vec![false; m];
    for c in partition {
        if c.member_indices.is_empty() {
            return Err(EntropyError::EmptyCluster);
        }
        for &i in &c.member_indices {
            if i >= m {
                return Err(EntropyError::IndexOutOfRange { index: i, len: m });
            }
            if seen[i] {
                return Err(EntropyError::DuplicateIndex(i));
            }
            seen[i] = true;
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(EntropyError::MissingIndex(i)),
        None => Ok(()),
    }
}

/// `SE(x) ≈ -(1/|C|) Σ_i log p(C_i | x)`.
pub fn semantic_entropy(
    set: &SampleSet,
    partition: &[MeaningCluster],
    config: &EntropyConfig,
) -> Result<f64, EntropyError> {
    if set.samples.is_empty() {
        return Err(EntropyError::EmptySampleSet);
    }
    check_partition(partition, set.len())?;
    let mut sum = 0.0;
    for c in partition {
        sum += cluster_log_probability(c, set, config)?;
    }
    Ok(-sum / partition.len() as f64 + 0.0)
}

/// Fills `log_prob` on every cluster.
pub fn annotate_clusters(
    set: &SampleSet,
    partition: &mut [MeaningCluster],
    config: &EntropyConfig,
) -> Result<(), EntropyError> {
    for c in partition.iter_mut() {
        c.log_prob = Some(cluster_log_probability(c, set, config)?);
    }
    Ok(())
}

/// Computes every measure for one sample set against a given partition.
pub fn uncertainty_report(
    set: &SampleSet,
    partition: &[MeaningCluster],
    config: &EntropyConfig,
) -> Result<UncertaintyReport, EntropyError> {
    let pe = predictive_entropy(set, config)?;
    let npe = normalized_predictive_entropy(set, config)?;
    let se = semantic_entropy(set, partition, config)?;
    let per_sequence_entropy = set
        .samples
        .iter()
        .map(|s| sequence_entropy(s, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UncertaintyReport {
        pe,
        npe,
        se,
        num_clusters: partition.len(),
        per_sequence_entropy,
        config: *config,
        oracle: None,
    })
}
