pub mod analysis;
pub mod backend;
pub mod export;
pub mod jsonl;
pub mod pipeline;
pub mod remote;
pub mod service;
