//! Generation backends: an in-process lookup table or a remote logit server.

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use uq_core::decoding::{decode, LookupTableSpec};
use uq_core::error::DecodeError;
use uq_core::{DecodingConfig, LookupTableModel, SampleSet};

use crate::remote::RemoteBackend;

/// Reads a lookup-table model from its JSON spec.
pub fn load_model_spec(path: &Path) -> Result<LookupTableModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: LookupTableSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing model spec {}", path.display()))?;
    LookupTableModel::from_spec(spec).with_context(|| format!("invalid model spec {}", path.display()))
}

#[derive(Debug, Clone)]
pub enum Backend {
    Lookup(Arc<LookupTableModel>),
    Remote(RemoteBackend),
}

impl Backend {
    /// Decodes from `prompt`. The lookup table has no tokenizer, so its
    /// prompt is `prompt_ids` (usually empty) and the text is only recorded;
    /// a remote backend receives the text itself.
    pub fn generate(&self, prompt: &str, prompt_ids: &[u32], config: &DecodingConfig) -> Result<SampleSet, DecodeError> {
        match self {
            Backend::Lookup(model) => decode(model.as_ref(), prompt, prompt_ids, config),
            Backend::Remote(remote) => decode(&remote.for_prompt(prompt), prompt, prompt_ids, config),
        }
    }
}
