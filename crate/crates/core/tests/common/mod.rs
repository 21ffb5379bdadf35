#![allow(dead_code)]

use rand::Rng;
use uq_core::decoding::LookupTableModel;
use uq_core::records::{FinishReason, GenerationSample, SampleSet, TokenScore};

/// A complete model of the given depth: every prefix of non-stop tokens shorter
/// than `depth` has a strictly positive next-token distribution. The last
/// vocabulary entry is the stop token.
pub fn random_model<R: Rng>(rng: &mut R, vocab: usize, depth: usize) -> LookupTableModel {
    let stop = (vocab - 1) as u32;
    let names: Vec<String> = (0..vocab - 1).map(|i| format!("w{i}")).chain(["<stop>".to_string()]).collect();
    let mut table = Vec::new();
    let mut frontier: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..depth {
        let mut next = Vec::new();
        for prefix in frontier {
            let weights: Vec<f64> = (0..vocab).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            table.push((prefix.clone(), weights.iter().map(|w| w / total).collect::<Vec<f64>>()));
            for t in 0..stop {
                let mut p = prefix.clone();
                p.push(t);
                next.push(p);
            }
        }
        frontier = next;
    }
    LookupTableModel::from_table(names, stop, table).unwrap()
}

/// Sample set with one-token samples of the given likelihoods and distinct ids.
pub fn set_from_likelihoods(likelihoods: &[f64]) -> SampleSet {
    SampleSet {
        query: "q".into(),
        samples: likelihoods
            .iter()
            .enumerate()
            .map(|(i, &p)| GenerationSample {
                text: format!("s{i}"),
                tokens: vec![TokenScore::new("t", Some(i as u32), p.ln())],
                finish_reason: FinishReason::Stop,
            })
            .collect(),
        model_id: "m".into(),
        decoding: Default::default(),
    }
}

/// Random multi-token sample set; token paths are distinct per sample.
pub fn random_set<R: Rng>(rng: &mut R, m: usize, max_len: usize) -> SampleSet {
    SampleSet {
        query: "q".into(),
        samples: (0..m)
            .map(|i| {
                let n = rng.random_range(1..=max_len);
                GenerationSample {
                    text: format!("s{}", rng.random_range(0..3)),
                    tokens: (0..n)
                        .map(|j| TokenScore::new("t", Some((i * 100 + j) as u32), -rng.random_range(0.0..4.0)))
                        .collect(),
                    finish_reason: FinishReason::Stop,
                }
            })
            .collect(),
        model_id: "m".into(),
        decoding: Default::default(),
    }
}
