//! HTTP clients for the two remote seams: a logit backend and an NLI classifier.
//!
//! Wire format, JSON over HTTP/1.1:
//!
//! ```text
//! GET  {backend}/v1/info         -> {"vocab": [str], "stop": id, "model_id": str?}
//! POST {backend}/v1/next_logits  {"prefix": [ids], "prompt": str} -> {"logits": [f64]}
//! POST {entail}/v1/classify      {"premise": str, "hypothesis": str} -> {"label": str}
//! ```
//!
//! Both clients block; async callers should run them on a blocking pool.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use ureq::Agent;
use uq_core::clustering::{BidirectionalEntailment, EntailmentClassifier, EntailmentLabel, ExactNormalized};
use uq_core::{EquivalenceOracle, LogitProvider, OracleKind, ProviderError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("request to {0} timed out")]
    Timeout(String),
    #[error("{url} unreachable: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("{url} returned status {status}")]
    Status { url: String, status: u16 },
    #[error("protocol error from {url}: {reason}")]
    Protocol { url: String, reason: String },
}

impl From<RemoteError> for ProviderError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Timeout(_) => ProviderError::Timeout,
            RemoteError::Unreachable { reason, .. } => ProviderError::Unreachable(reason),
            RemoteError::Status { status, .. } => ProviderError::Status(status),
            RemoteError::Protocol { reason, .. } => ProviderError::Protocol(reason),
        }
    }
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

fn transport_error(url: &str, err: ureq::Error) -> RemoteError {
    match err {
        ureq::Error::Timeout(_) => RemoteError::Timeout(url.into()),
        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => RemoteError::Timeout(url.into()),
        ureq::Error::Json(e) => RemoteError::Protocol { url: url.into(), reason: e.to_string() },
        other => RemoteError::Unreachable { url: url.into(), reason: other.to_string() },
    }
}

fn call<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &Agent,
    url: &str,
    body: Option<&Req>,
) -> Result<Resp, RemoteError> {
    let response = match body {
        Some(body) => agent.post(url).send_json(body),
        None => agent.get(url).call(),
    };
    let mut response = response.map_err(|e| transport_error(url, e))?;
    let status = response.status().as_u16();
    if status != 200 {
        return Err(RemoteError::Status { url: url.into(), status });
    }
    let text = response.body_mut().read_to_string().map_err(|e| transport_error(url, e))?;
    serde_json::from_str(&text).map_err(|e| RemoteError::Protocol { url: url.into(), reason: e.to_string() })
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}{path}", base.trim_end_matches('/'))
}

/// What a backend advertises about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub vocab: Vec<String>,
    pub stop: u32,
    #[serde(default)]
    pub model_id: Option<String>,
}

#[derive(Serialize)]
struct NextLogitsRequest<'a> {
    prefix: &'a [u32],
    prompt: &'a str,
}

#[derive(Deserialize)]
struct NextLogitsResponse {
    logits: Vec<f64>,
}

/// A [`LogitProvider`] backed by a remote model.
///
/// The backend owns tokenization of the prompt, so the prefix sent on the wire
/// holds generated ids only and the prompt text travels alongside.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    agent: Agent,
    url: String,
    info: Arc<BackendInfo>,
    prompt: Arc<str>,
}

impl RemoteBackend {
    /// Fetches `/v1/info` once.
    pub fn connect(url: &str, timeout: Duration) -> Result<Self, RemoteError> {
        let agent = agent(timeout);
        let info_url = endpoint(url, "/v1/info");
        let info: BackendInfo = call::<(), _>(&agent, &info_url, None)?;
        if info.stop as usize >= info.vocab.len() {
            return Err(RemoteError::Protocol {
                url: info_url,
                reason: format!("stop id {} outside vocab of {}", info.stop, info.vocab.len()),
            });
        }
        Ok(Self::with_info(url, timeout, info))
    }

    /// Skips the info round-trip when the vocabulary is known up front.
    pub fn with_info(url: &str, timeout: Duration, info: BackendInfo) -> Self {
        Self { agent: agent(timeout), url: url.trim_end_matches('/').into(), info: Arc::new(info), prompt: "".into() }
    }

    /// A handle that sends `prompt` with every request.
    pub fn for_prompt(&self, prompt: &str) -> Self {
        Self { prompt: prompt.into(), ..self.clone() }
    }

    pub fn info(&self) -> &BackendInfo {
        &self.info
    }
}

impl LogitProvider for RemoteBackend {
    fn vocab_size(&self) -> usize {
        self.info.vocab.len()
    }

    fn stop_token_id(&self) -> u32 {
        self.info.stop
    }

    fn next_logits(&self, prefix: &[u32]) -> Result<Vec<f64>, ProviderError> {
        let url = endpoint(&self.url, "/v1/next_logits");
        let body = NextLogitsRequest { prefix, prompt: &self.prompt };
        let response: NextLogitsResponse = call(&self.agent, &url, Some(&body))?;
        Ok(response.logits)
    }

    fn token_text(&self, id: u32) -> String {
        self.info.vocab.get(id as usize).cloned().unwrap_or_else(|| format!("<{id}>"))
    }

    fn model_id(&self) -> String {
        self.info.model_id.clone().unwrap_or_else(|| self.url.clone())
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
}

/// Remote NLI classifier.
#[derive(Debug, Clone)]
pub struct EntailmentClient {
    agent: Agent,
    url: String,
}

impl EntailmentClient {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self { agent: agent(timeout), url: endpoint(url, "/v1/classify") }
    }
}

impl EntailmentClassifier for EntailmentClient {
    type Error = RemoteError;

    fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, RemoteError> {
        let response: ClassifyResponse = call(&self.agent, &self.url, Some(&ClassifyRequest { premise, hypothesis }))?;
        response.label.parse().map_err(|e: uq_core::clustering::UnknownLabel| RemoteError::Protocol {
            url: self.url.clone(),
            reason: e.to_string(),
        })
    }
}

/// Caches labels by ordered (premise, hypothesis) pair. Safe to share across
/// threads; failures are not cached.
#[derive(Debug)]
pub struct Memoized<C> {
    inner: C,
    cache: Mutex<HashMap<(String, String), EntailmentLabel>>,
}

impl<C> Memoized<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("memo lock").len()
    }
}

impl<C: EntailmentClassifier> EntailmentClassifier for Memoized<C> {
    type Error = C::Error;

    fn classify(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel, C::Error> {
        let key = (premise.to_string(), hypothesis.to_string());
        if let Some(label) = self.cache.lock().expect("memo lock").get(&key) {
            return Ok(*label);
        }
        // the lock is not held across the request
        let label = self.inner.classify(premise, hypothesis)?;
        self.cache.lock().expect("memo lock").insert(key, label);
        Ok(label)
    }
}

pub type SharedClassifier = Arc<Memoized<EntailmentClient>>;

/// Oracle names accepted on the command line and over HTTP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleChoice {
    #[default]
    Exact,
    Entailment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("the entailment oracle needs an entailment URL")]
pub struct NoEntailmentUrl;

impl OracleChoice {
    pub fn build(self, classifier: Option<&SharedClassifier>) -> Result<Oracle, NoEntailmentUrl> {
        match self {
            OracleChoice::Exact => Ok(Oracle::Exact),
            OracleChoice::Entailment => classifier.cloned().map(Oracle::entailment).ok_or(NoEntailmentUrl),
        }
    }
}

/// Builds the shared, memoized classifier for `url`.
pub fn shared_classifier(url: &str, timeout: Duration) -> SharedClassifier {
    Arc::new(Memoized::new(EntailmentClient::new(url, timeout)))
}

/// The oracles selectable from the command line and the HTTP API.
#[derive(Debug, Clone)]
pub enum Oracle {
    Exact,
    Entailment(BidirectionalEntailment<SharedClassifier>),
}

impl Oracle {
    pub fn entailment(classifier: SharedClassifier) -> Self {
        Oracle::Entailment(BidirectionalEntailment { classifier })
    }
}

impl EquivalenceOracle for Oracle {
    type Error = RemoteError;

    fn kind(&self) -> OracleKind {
        match self {
            Oracle::Exact => OracleKind::ExactNormalized,
            Oracle::Entailment(_) => OracleKind::BidirectionalEntailment,
        }
    }

    fn equivalent(&self, a: &str, b: &str) -> Result<bool, RemoteError> {
        match self {
            Oracle::Exact => Ok(ExactNormalized.equivalent(a, b).unwrap_or_else(|never| match never {})),
            Oracle::Entailment(o) => o.equivalent(a, b),
        }
    }
}
