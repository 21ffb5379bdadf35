#![allow(dead_code)]

use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use axum::Router;
use rand::Rng;
use uq_core::{BenchmarkRecord, FinishReason, GenerationSample, LookupTableModel, SampleSet, TokenScore};

pub const BIN: &str = env!("CARGO_BIN_EXE_uq");

/// Serves `app` on an ephemeral loopback port from a background runtime.
pub fn spawn(app: Router) -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    addr
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

pub fn http_get(url: &str) -> (u16, String) {
    let mut r = agent().get(url).call().unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
}

pub fn http_post(url: &str, body: &str) -> (u16, String) {
    let mut r = agent().post(url).header("content-type", "application/json").send(body).unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
}

pub fn post_json(url: &str, body: &str) -> (u16, serde_json::Value) {
    let (status, text) = http_post(url, body);
    (status, serde_json::from_str(&text).unwrap_or_else(|e| panic!("non-JSON body {text:?}: {e}")))
}

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

pub fn one_token(text: &str, id: u32, p: f64) -> GenerationSample {
    GenerationSample {
        text: text.into(),
        tokens: vec![TokenScore::new(text, Some(id), p.ln())],
        finish_reason: FinishReason::Stop,
    }
}

pub fn set_of(query: &str, samples: Vec<GenerationSample>) -> SampleSet {
    SampleSet { query: query.into(), samples, model_id: "fixture".into(), decoding: Default::default() }
}

/// Sample set with one-token samples of the given likelihoods and distinct ids.
pub fn set_from_likelihoods(likelihoods: &[f64]) -> SampleSet {
    set_of("q", likelihoods.iter().enumerate().map(|(i, &p)| one_token(&format!("s{i}"), i as u32, p)).collect())
}

/// Random multi-token sample set; token paths are distinct per sample.
pub fn random_set<R: Rng>(rng: &mut R, m: usize, max_len: usize) -> SampleSet {
    set_of(
        "q",
        (0..m)
            .map(|i| {
                let n = rng.random_range(1..=max_len);
                GenerationSample {
                    text: format!("answer {}", rng.random_range(0..3)),
                    tokens: (0..n)
                        .map(|j| TokenScore::new("t", Some((i * 100 + j) as u32), -rng.random_range(0.0..4.0)))
                        .collect(),
                    finish_reason: FinishReason::Stop,
                }
            })
            .collect(),
    )
}

/// Hand fixtures plus seeded random sets, all valid.
pub fn fixture_suite() -> Vec<SampleSet> {
    use rand::SeedableRng;
    let mut sets = vec![
        set_of(
            "two-token coin",
            vec![GenerationSample {
                text: "heads heads".into(),
                tokens: vec![TokenScore::new("heads", Some(0), 0.5f64.ln()), TokenScore::new("heads", Some(0), 0.5f64.ln())],
                finish_reason: FinishReason::Stop,
            }],
        ),
        set_of("tokyo singletons", vec![one_token("Tokyo", 0, 0.6), one_token("Kyoto", 1, 0.3)]),
        set_of("tokyo merged", vec![one_token("Tokyo", 0, 0.6), one_token("tokyo.", 1, 0.3)]),
        set_of("certain", vec![one_token("yes", 0, 1.0)]),
        set_of("point mass repeated", vec![one_token("yes", 0, 1.0); 5]),
        set_of("regression", vec![one_token("a", 0, 0.5), one_token("b", 1, 0.49), one_token("c", 2, 1e-6)]),
        set_of("unicode", vec![one_token("東京", 0, 0.7), one_token("東京。", 1, 0.2), one_token("Ｔｏｋｙｏ", 2, 0.1)]),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for i in 0..40 {
        let mut s = random_set(&mut rng, 1 + i % 8, 6);
        s.query = format!("random {i}");
        sets.push(s);
    }
    sets
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for item in items {
        writeln!(f, "{}", serde_json::to_string(item).unwrap()).unwrap();
    }
    f.flush().unwrap();
}

pub const DOMAINS: [&str; 5] = ["Art", "Biology", "Chemistry", "Economics", "Physics"];

/// Answer patterns for the planted evaluation fixture: (text, probability)
/// per one-token sample. The first sample is always the most likely.
pub const PATTERNS: [&[(&str, f64)]; 4] = [
    &[("alpha", 0.6), ("Alpha", 0.3)],
    &[("alpha", 0.6), ("beta", 0.3)],
    &[("alpha", 0.9)],
    &[("alpha", 0.4), ("beta", 0.35), ("gamma", 0.2), ("alpha.", 0.05)],
];

pub struct Planted {
    pub domain: &'static str,
    pub benchmark: &'static str,
    pub pattern: usize,
    pub correct: bool,
}

/// Layout of the planted fixture: domain, benchmark, answer pattern and
/// correctness of record `j`.
pub fn planted(j: usize) -> Planted {
    Planted {
        domain: DOMAINS[j % DOMAINS.len()],
        benchmark: if j.is_multiple_of(2) { "FOS" } else { "MMLU" },
        pattern: (j / DOMAINS.len()) % PATTERNS.len(),
        correct: !j.is_multiple_of(7) && j % 11 != 3,
    }
}

pub fn planted_fixture(n: usize) -> (Vec<BenchmarkRecord>, Vec<SampleSet>) {
    let mut records = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for j in 0..n {
        let p = planted(j);
        let query = format!("query {j:04}");
        records.push(BenchmarkRecord {
            id: format!("r{j:04}"),
            query: query.clone(),
            gold_answer: if p.correct { "Alpha".into() } else { "omega".into() },
            domain: p.domain.into(),
            benchmark: p.benchmark.into(),
            retrieved_passages: None,
        });
        let samples = PATTERNS[p.pattern].iter().enumerate().map(|(i, &(t, prob))| one_token(t, i as u32, prob)).collect();
        sets.push(SampleSet { query, samples, model_id: "planted-model".into(), decoding: Default::default() });
    }
    // generation logs need not be in benchmark order
    sets.reverse();
    (records, sets)
}

/// Closed-form NPE (token-weighted) and SE of a pattern under exact matching,
/// computed without the library: one token per sample, so NPE is the mean
/// of `-p ln p`, and clusters are the samples sharing a normalized text.
pub fn pattern_entropies(pattern: usize) -> (f64, f64) {
    let samples = PATTERNS[pattern];
    let npe = samples.iter().map(|&(_, p)| -p * p.ln()).sum::<f64>() / samples.len() as f64;
    let mut clusters: Vec<(String, f64)> = Vec::new();
    for &(t, p) in samples {
        let key = t.trim_end_matches('.').to_lowercase();
        match clusters.iter_mut().find(|(k, _)| *k == key) {
            Some(c) => c.1 += p,
            None => clusters.push((key, p)),
        }
    }
    let se = -clusters.iter().map(|(_, p)| p.ln()).sum::<f64>() / clusters.len() as f64;
    (npe, se)
}
