//! Account-level fraud detection over blockchain transaction graphs.
//!
//! The pipeline runs in stages that communicate through plain files:
//!
//! 1. [`ingest`] parses per-chain transaction exports into a [`TransactionGraph`]
//!    with one aggregated edge per ordered account pair.
//! 2. [`subgraph`] samples a value-guided h-hop neighbourhood around each labelled
//!    account and compresses it by structural importance.
//! 3. [`summary`] builds redacted account dossiers, turns them into forensic
//!    summaries through a pluggable backend, and splits each summary into a
//!    discriminative and a residual part with a trainable sentence policy.
//! 4. [`model`] embeds the texts and runs the two-branch graph encoder with
//!    attention fusion and the tri-view loss.
//! 5. [`train`] alternates policy-gradient updates of the split policy with
//!    backprop updates of the encoder.
//! 6. [`eval`] computes Precision/Recall/F1/AUC/KS and generates synthetic corpora.
//!
//! [`pipeline`] wires the stages together over a working directory.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod subgraph;
pub mod summary;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use ingest::{Amount, Chain, EdgeRecord, Label, NodeId, RawTransaction, TransactionGraph};
pub use subgraph::{SamplingConfig, Subgraph};
