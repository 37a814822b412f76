//! Knowledge-infused classification of mental-health posts: lexicon-driven
//! phrase tagging, commonsense aspect enrichment, an attention fusion network,
//! evaluation metrics and attention-based explanation reports.

pub mod backend;
pub mod commands;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod explain;
pub mod features;
pub mod label;
pub mod lexicon;
pub mod metrics;
pub mod network;
pub mod synth;
pub mod tagging;
pub mod text;

pub use error::{Error, Result};
pub use label::{Label, Task};
