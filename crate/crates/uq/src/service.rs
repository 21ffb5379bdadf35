//! HTTP API for generation and analysis.
//!
//! | method | path          | body                | response                       |
//! |--------|---------------|---------------------|--------------------------------|
//! | GET    | `/v1/health`  |                     | `{"status":"ok"}`              |
//! | GET    | `/v1/version` |                     | `{"name","version"}`           |
//! | POST   | `/v1/generate`| [`GenerateRequest`] | [`GenerateResponse`]           |
//! | POST   | `/v1/analyze` | `SampleSet`         | [`Analysis`]                   |
//!
//! `/v1/analyze` takes `oracle`, `variant` and `normalize` as query
//! parameters. Every error is `{"error":{"code","message","field"?}}`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use uq_core::error::DecodeError;
use uq_core::harness::EvalError;
use uq_core::{DecodingConfig, EntropyVariant, ProviderError, SampleSet, UncertaintyReport, Validate, ValidationError};

use crate::analysis::{analyze, entropy_config, Analysis, ClusterView};
use crate::backend::Backend;
use crate::jsonl::{parse_json, parse_line, RecordError};
use crate::remote::{OracleChoice, RemoteError, SharedClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    #[serde(flatten)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub oracle: OracleChoice,
    #[serde(default)]
    pub variant: EntropyVariant,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub sample_set: SampleSet,
    pub report: UncertaintyReport,
    pub clusters: Vec<ClusterView>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct AnalyzeParams {
    #[serde(default)]
    pub oracle: OracleChoice,
    #[serde(default)]
    pub variant: EntropyVariant,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub backend: Option<Backend>,
    pub entailment: Option<SharedClassifier>,
    /// Served at `/` in place of the built-in page.
    pub static_dir: Option<PathBuf>,
    /// Each generation is appended to `generations.jsonl` here.
    pub log_dir: Option<PathBuf>,
}

struct AppState {
    backend: Option<Backend>,
    entailment: Option<SharedClassifier>,
    log: Option<(PathBuf, Mutex<()>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), field: None } }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        let field = field.into();
        self.body.field = (!field.is_empty()).then_some(field);
        self
    }

    fn validation(e: ValidationError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()).with_field(e.field)
    }

    fn record(e: RecordError) -> Self {
        match e {
            RecordError::Json { .. } => Self::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()),
            RecordError::Validation(v) => Self::validation(v),
        }
    }

    fn provider(e: &ProviderError) -> Self {
        match e {
            ProviderError::Timeout => Self::new(StatusCode::GATEWAY_TIMEOUT, "backend_timeout", e.to_string()),
            _ => Self::new(StatusCode::BAD_GATEWAY, "backend_error", e.to_string()),
        }
    }

    fn decode(e: DecodeError) -> Self {
        match e {
            DecodeError::Config(v) => Self::validation(v),
            DecodeError::Temperature(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()).with_field("temperature")
            }
            DecodeError::TopP(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()).with_field("top_p"),
            DecodeError::Provider(p) => Self::provider(&p),
            DecodeError::EmptyLogits => Self::new(StatusCode::BAD_GATEWAY, "backend_error", e.to_string()),
            DecodeError::WrongMethod(_) | DecodeError::EnumerationBound { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            }
        }
    }

    fn eval(e: EvalError<RemoteError>) -> Self {
        match e {
            EvalError::Cluster(c) => match c.cause {
                RemoteError::Timeout(_) => Self::new(StatusCode::GATEWAY_TIMEOUT, "entailment_timeout", c.to_string()),
                _ => Self::new(StatusCode::BAD_GATEWAY, "entailment_error", c.to_string()),
            },
            EvalError::Entropy(e) => Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Envelope {
            error: ErrorBody,
        }
        (self.status, Json(Envelope { error: self.body })).into_response()
    }
}

fn utf8(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", format!("body is not UTF-8: {e}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn version() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") }))
}

async fn generate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let request: GenerateRequest = parse_json(utf8(&body)?).map_err(ApiError::record)?;
    request.decoding.validate().map_err(ApiError::validation)?;
    let oracle = request
        .oracle
        .build(state.entailment.as_ref())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()).with_field("oracle"))?;
    let backend = state
        .backend
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_backend", "no generation backend is configured"))?;
    let config = entropy_config(request.variant, request.normalize);

    let worker_state = Arc::clone(&state);
    let response = tokio::task::spawn_blocking(move || {
        let sample_set = backend.generate(&request.prompt, &[], &request.decoding).map_err(ApiError::decode)?;
        let Analysis { report, clusters } = analyze(&sample_set, &oracle, &config).map_err(ApiError::eval)?;
        let response = GenerateResponse { sample_set, report, clusters };
        if let Some((dir, lock)) = &worker_state.log {
            append_log(dir, lock, &request, &response);
        }
        Ok::<_, ApiError>(response)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(response))
}

fn append_log(dir: &std::path::Path, lock: &Mutex<()>, request: &GenerateRequest, response: &GenerateResponse) {
    let line = serde_json::json!({ "request": request, "response": response }).to_string();
    let _guard = lock.lock().expect("log lock");
    let result = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("generations.jsonl"))
        .and_then(|mut f| writeln!(f, "{line}"));
    if let Err(e) = result {
        tracing::warn!("could not append generation log: {e}");
    }
}

async fn analyze_handler(
    State(state): State<Arc<AppState>>,
    params: Result<Query<AnalyzeParams>, QueryRejection>,
    body: Bytes,
) -> Result<Json<Analysis>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
    let set: SampleSet = parse_line(utf8(&body)?.trim()).map_err(ApiError::record)?;
    let oracle = params
        .oracle
        .build(state.entailment.as_ref())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()).with_field("oracle"))?;
    let config = entropy_config(params.variant, params.normalize);
    let analysis = tokio::task::spawn_blocking(move || analyze(&set, &oracle, &config).map_err(ApiError::eval))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(analysis))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

const INDEX_HTML: &str = r#"<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>uq</title></head>
<body>
<h1>uq</h1>
<p>No dashboard assets are installed. Start the server with <code>--static-dir</code> to serve them.</p>
<ul>
<li><code>GET /v1/health</code></li>
<li><code>GET /v1/version</code></li>
<li><code>POST /v1/generate</code></li>
<li><code>POST /v1/analyze</code></li>
</ul>
</body>
</html>
"#;

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        backend: config.backend,
        entailment: config.entailment,
        log: config.log_dir.map(|d| (d, Mutex::new(()))),
    });
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/version", get(version))
        .route("/v1/generate", post(generate))
        .route("/v1/analyze", post(analyze_handler))
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).not_found_service(get(not_found).post(not_found))),
        None => api.route("/", get(index)).fallback(not_found),
    }
}

/// Serves `app` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
