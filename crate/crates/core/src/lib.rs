//! Uncertainty quantification for sets of generated sequences.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It covers:
//!
//! * [`records`]: the data model for generations, sample sets and benchmark items
//! * [`entropy`]: per-sequence, predictive, normalized predictive and semantic entropy
//! * [`clustering`]: greedy meaning clustering over a pluggable equivalence oracle
//! * [`decoding`]: temperature, nucleus and beam decoding over a logit provider
//! * [`harness`]: exact-match grading, accuracy grouping, domain aggregation, AUROC
//!
//! File formats, the HTTP service and the CLI live in the companion `uq` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod clustering;
pub mod decoding;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod math;
pub mod records;

pub use clustering::{greedy_cluster, normalize_for_match, EquivalenceOracle, MeaningCluster, OracleKind};
pub use decoding::{DecodingConfig, DecodingMethod, LogitProvider, LookupTableModel};
pub use entropy::{EntropyConfig, EntropyVariant, UncertaintyReport};
pub use error::{ProviderError, ValidationError};
pub use records::{
    BenchmarkRecord, EvaluatedRecord, FinishReason, GenerationSample, SampleSet, TokenScore, Validate,
};
