//! Meaning clusters over a sample set.
//!
//! Samples are visited in descending sequence likelihood (ties by index). Each
//! one is compared against the representative of every existing cluster, in
//! creation order, and joins the first equivalent one; otherwise it opens a new
//! cluster and becomes its representative. No transitive closure is applied, so
//! a non-transitive oracle yields whatever this rule produces.

use alloc::string::String;
use alloc::vec::Vec;
use core::convert::Infallible;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::records::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    ExactNormalized,
    BidirectionalEntailment,
    AlwaysDistinct,
    AlwaysEqual,
}

/// A set of samples judged to share one meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaningCluster {
    /// Sorted ascending.
    pub member_indices: Vec<usize>,
    pub representative_index: usize,
    /// `log p(C | x)`, filled by [`crate::entropy::annotate_clusters`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_prob: Option<f64>,
}

impl MeaningCluster {
    pub fn new(mut member_indices: Vec<usize>, representative_index: usize) -> Self {
        member_indices.sort_unstable();
        Self { member_indices, representative_index, log_prob: None }
    }
}

/// Decides whether two generated texts mean the same thing.
///
/// Implementations must be reflexive. The clusterer queries each unordered
/// pair at most once, so an asymmetric oracle cannot produce an inconsistent
/// partition.
pub trait EquivalenceOracle {
    type Error;

    fn kind(&self) -> OracleKind;

    fn equivalent(&self, a: &str, b: &str) -> Result<bool, Self::Error>;
}

impl<O: EquivalenceOracle + ?Sized> EquivalenceOracle for &O {
    type Error = O::Error;

    fn kind(&self) -> OracleKind {
        (**self).kind()
    }

    fn equivalent(&self, a: &str, b: &str) -> Result<bool, Self::Error> {
        (**self).equivalent(a, b)
    }
}

/// Equal after [`normalize_for_match`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactNormalized;

impl EquivalenceOracle for ExactNormalized {
    type Error = Infallible;

    fn kind(&self) -> OracleKind {
        OracleKind::ExactNormalized
    }

    fn equivalent(&self, a: &str, b: &str) -> Result<bool, Infallible> {
        Ok(normalize_for_match(a) == normalize_for_match(b))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysDistinct;

impl EquivalenceOracle for AlwaysDistinct {
    type Error = Infallible;

    fn kind(&self) -> OracleKind {
        OracleKind::AlwaysDistinct
    }

    fn equivalent(&self, _: &str, _: &str) -> Result<bool, Infallible> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysEqual;

impl EquivalenceOracle for AlwaysEqual {
    type Error = Infallible;

    fn kind(&self) -> OracleKind {
        OracleKind::AlwaysEqual
    }

    fn equivalent(&self, _: &str, _: &str) -> Result<bool, Infallible> {
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entailment label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for EntailmentLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "entailment" => Ok(Self::Entailment),
            "neutral" => Ok(Self::Neutral),
            "contradiction" => Ok(Self::Contradiction),
            _ => Err(UnknownLabel(s.into())),
        }
    }
}

/// An NLI classifier, typically remote.
pub trait EntailmentClassifier {
    type Error;

    fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, Self::Error>;
}

impl<C: EntailmentClassifier + ?Sized> EntailmentClassifier for &C {
    type Error = C::Error;

    fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, Self::Error> {
        (**self).classify(premise, hypothesis)
    }
}

impl<C: EntailmentClassifier + ?Sized> EntailmentClassifier for alloc::sync::Arc<C> {
    type Error = C::Error;

    fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, Self::Error> {
        (**self).classify(premise, hypothesis)
    }
}

/// True iff `a` entails `b` and `b` entails `a`.
pub fn bidirectional_entailment<C: EntailmentClassifier + ?Sized>(
    a: &str,
    b: &str,
    classifier: &C,
) -> Result<bool, C::Error> {
    if classifier.classify(a, b)? != EntailmentLabel::Entailment {
        return Ok(false);
    }
    Ok(classifier.classify(b, a)? == EntailmentLabel::Entailment)
}

/// Bidirectional entailment as an [`EquivalenceOracle`]. Identical strings are
/// equivalent without a classifier call.
#[derive(Debug, Clone)]
pub struct BidirectionalEntailment<C> {
    pub classifier: C,
}

impl<C: EntailmentClassifier> EquivalenceOracle for BidirectionalEntailment<C> {
    type Error = C::Error;

    fn kind(&self) -> OracleKind {
        OracleKind::BidirectionalEntailment
    }

    fn equivalent(&self, a: &str, b: &str) -> Result<bool, C::Error> {
        if a == b {
            return Ok(true);
        }
        bidirectional_entailment(a, b, &self.classifier)
    }
}

/// The oracle failed while comparing two samples. No partial partition is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterError<E> {
    pub pair: (usize, usize),
    pub cause: E,
}

impl<E: fmt::Display> fmt::Display for ClusterError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "equivalence check failed for samples {} and {}: {}", self.pair.0, self.pair.1, self.cause)
    }
}

impl<E: fmt::Debug + fmt::Display> core::error::Error for ClusterError<E> {}

/// Sample indices in descending log-likelihood, ties by index.
pub fn likelihood_order(set: &SampleSet) -> Vec<usize> {
    let ll: Vec<f64> = set.samples.iter().map(|s| s.log_likelihood()).collect();
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| ll[b].total_cmp(&ll[a]).then(a.cmp(&b)));
    order
}

/// Greedy representative clustering; see the module docs for the rule.
pub fn greedy_cluster<O: EquivalenceOracle + ?Sized>(
    set: &SampleSet,
    oracle: &O,
) -> Result<Vec<MeaningCluster>, ClusterError<O::Error>> {
    let mut clusters: Vec<MeaningCluster> = Vec::new();
    for i in likelihood_order(set) {
        let text = &set.samples[i].text;
        let mut joined = false;
        for c in clusters.iter_mut() {
            let rep = c.representative_index;
            let same = oracle
                .equivalent(&set.samples[rep].text, text)
                .map_err(|cause| ClusterError { pair: (rep, i), cause })?;
            if same {
                c.member_indices.push(i);
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(MeaningCluster { member_indices: alloc::vec![i], representative_index: i, log_prob: None });
        }
    }
    for c in &mut clusters {
        c.member_indices.sort_unstable();
    }
    Ok(clusters)
}

/// Lowercase, NFC, trimmed, internal whitespace collapsed, trailing `.,;:!?` removed.
pub fn normalize_for_match(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let lowered = nfc.to_lowercase();
    let mut collapsed = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !collapsed.is_empty() {
            collapsed.push(' ');
        }
        collapsed.push_str(word);
    }
    let mut out: &str = &collapsed;
    loop {
        let next = out.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim_end();
        if next.len() == out.len() {
            break;
        }
        out = next;
    }
    String::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{FinishReason, GenerationSample, TokenScore};
    use alloc::vec;
    use core::cell::{Cell, RefCell};

    fn set_of(texts: &[(&str, f64)]) -> SampleSet {
        SampleSet {
            query: "q".into(),
            samples: texts
                .iter()
                .map(|&(t, lp)| GenerationSample {
                    text: t.into(),
                    tokens: vec![TokenScore::new(t, None, lp)],
                    finish_reason: FinishReason::Stop,
                })
                .collect(),
            model_id: "m".into(),
            decoding: Default::default(),
        }
    }

    fn members(clusters: &[MeaningCluster]) -> Vec<Vec<usize>> {
        clusters.iter().map(|c| c.member_indices.clone()).collect()
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_for_match("  Tokyo. "), "tokyo");
        assert_eq!(normalize_for_match("Computer   Science"), "computer science");
        assert_eq!(normalize_for_match("B"), normalize_for_match("b"));
        assert_eq!(normalize_for_match("tokyo ?!"), "tokyo");
        assert_eq!(normalize_for_match("..."), "");
        // NFD "é" composes to NFC
        assert_eq!(normalize_for_match("Cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn single_sample() {
        let set = set_of(&[("Tokyo", -0.1)]);
        let c = greedy_cluster(&set, &ExactNormalized).unwrap();
        assert_eq!(members(&c), vec![vec![0]]);
        assert_eq!(c[0].representative_index, 0);
    }

    #[test]
    fn tokyo_kyoto() {
        let set = set_of(&[("Tokyo", -0.5), ("tokyo.", -0.7), ("Kyoto", -1.0)]);
        let c = greedy_cluster(&set, &ExactNormalized).unwrap();
        assert_eq!(members(&c), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn representative_is_most_likely_member() {
        let set = set_of(&[("tokyo.", -0.9), ("Kyoto", -1.0), ("Tokyo", -0.2)]);
        let c = greedy_cluster(&set, &ExactNormalized).unwrap();
        assert_eq!(members(&c), vec![vec![0, 2], vec![1]]);
        assert_eq!(c[0].representative_index, 2);
    }

    #[test]
    fn trivial_oracles() {
        let set = set_of(&[("a", -0.1), ("a", -0.2), ("b", -0.3)]);
        assert_eq!(greedy_cluster(&set, &AlwaysDistinct).unwrap().len(), 3);
        assert_eq!(greedy_cluster(&set, &AlwaysEqual).unwrap().len(), 1);
    }

    struct Scripted<'a> {
        answers: &'a [(EntailmentLabel, EntailmentLabel)],
        calls: Cell<usize>,
    }

    impl EntailmentClassifier for Scripted<'_> {
        type Error = Infallible;

        fn classify(&self, _: &str, _: &str) -> Result<EntailmentLabel, Infallible> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            let (first, second) = self.answers[n / 2];
            Ok(if n.is_multiple_of(2) { first } else { second })
        }
    }

    #[test]
    fn bidirectional_requires_both_directions() {
        use EntailmentLabel::*;
        for (pair, expected) in [((Entailment, Entailment), true), ((Entailment, Neutral), false), ((Contradiction, Contradiction), false)] {
            let answers = [pair];
            let c = Scripted { answers: &answers, calls: Cell::new(0) };
            assert_eq!(bidirectional_entailment("a", "b", &c).unwrap(), expected);
        }
    }

    #[test]
    fn label_parse_is_case_insensitive() {
        assert_eq!("ENTAILMENT".parse::<EntailmentLabel>().unwrap(), EntailmentLabel::Entailment);
        assert_eq!("Neutral".parse::<EntailmentLabel>().unwrap(), EntailmentLabel::Neutral);
        assert!("maybe".parse::<EntailmentLabel>().is_err());
    }

    /// Treats texts that contain the same words (any order) as mutual entailment.
    struct BagOfWords;

    impl EntailmentClassifier for BagOfWords {
        type Error = Infallible;

        fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, Infallible> {
            let bag = |s: &str| {
                let mut w: Vec<String> = s.split_whitespace().map(|w| w.to_lowercase()).collect();
                w.sort();
                w
            };
            Ok(if bag(premise) == bag(hypothesis) { EntailmentLabel::Entailment } else { EntailmentLabel::Neutral })
        }
    }

    #[test]
    fn paraphrases_share_a_cluster() {
        let set = set_of(&[("Japan's capital is Tokyo", -0.5), ("Tokyo is Japan's capital", -1.2)]);
        let oracle = BidirectionalEntailment { classifier: BagOfWords };
        let c = greedy_cluster(&set, &oracle).unwrap();
        assert_eq!(members(&c), vec![vec![0, 1]]);
    }

    struct Failing;

    impl EquivalenceOracle for Failing {
        type Error = &'static str;

        fn kind(&self) -> OracleKind {
            OracleKind::BidirectionalEntailment
        }

        fn equivalent(&self, _: &str, _: &str) -> Result<bool, &'static str> {
            Err("unreachable")
        }
    }

    #[test]
    fn oracle_failure_carries_pair() {
        let set = set_of(&[("a", -0.1), ("b", -0.5)]);
        let err = greedy_cluster(&set, &Failing).unwrap_err();
        assert_eq!(err.pair, (0, 1));
        assert_eq!(err.cause, "unreachable");
    }

    struct Counting {
        pairs: RefCell<Vec<(String, String)>>,
    }

    impl EquivalenceOracle for Counting {
        type Error = Infallible;

        fn kind(&self) -> OracleKind {
            OracleKind::AlwaysDistinct
        }

        fn equivalent(&self, a: &str, b: &str) -> Result<bool, Infallible> {
            self.pairs.borrow_mut().push((a.into(), b.into()));
            Ok(false)
        }
    }

    #[test]
    fn each_pair_queried_once() {
        let set = set_of(&[("a", -0.1), ("b", -0.2), ("c", -0.3), ("d", -0.4)]);
        let oracle = Counting { pairs: RefCell::new(Vec::new()) };
        greedy_cluster(&set, &oracle).unwrap();
        let mut pairs: Vec<(String, String)> = oracle
            .pairs
            .into_inner()
            .into_iter()
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        let n = pairs.len();
        assert_eq!(n, 6);
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), n);
    }
}
