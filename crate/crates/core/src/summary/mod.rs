//! Forensic summaries of accounts and their split into discriminative and
//! residual parts.
//!
//! Summaries are produced by a [`Summarizer`]: either a remote completion
//! endpoint or the offline [`MockSummarizer`], whose output is a fixed rule
//! table over the dossier aggregates. The split is done either by the
//! trainable [`SplitPolicy`] or by two free-form analyst prompts.

mod agents;
mod backend;
mod dossier;
mod prompt;
mod split;
mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use agents::{agent_prompt, overlap_score, remote_llm_split, AgentRole, COVER_MIN};
pub use backend::{
    BackendTag, Completion, MockSummarizer, RemoteConfig, RemoteSummarizer, Summarizer, BURST_MIN_PARTNERS,
    DOMINANCE_RATIO, FAN_MIN_PARTNERS, HIGH_FREQUENCY_TX,
};
pub use dossier::{AccountDossier, Aggregates, Direction, PartnerRow, BURST_WINDOW_SECS, CENTER_PSEUDONYM};
pub use prompt::{
    build_forensic_prompt, PromptConfig, RedactionAuditor, DEFAULT_ROW_BUDGET, DEFAULT_TEMPLATE_VERSION, DIMENSIONS,
    NO_LOOKUP_INSTRUCTION,
};
pub use split::{
    feature_names, sentence_features, split_summary, SplitMode, SplitPolicy, SummarySplit, FEATURE_DIM,
    HEDGE_FEATURE, KEYWORD_GROUPS,
};
pub use store::{EvidenceRecord, EvidenceStore};

use crate::error::{Error, Result};
use crate::ingest::{NodeId, TransactionGraph};
use crate::text::split_sentences;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionSummary {
    pub account: NodeId,
    pub text: String,
    pub sentences: Vec<String>,
    pub backend_tag: BackendTag,
    pub cache_key: String,
}

impl TransactionSummary {
    /// Segments `text` into sentences; text without any sentence is an error.
    pub fn new(account: NodeId, text: String, backend_tag: BackendTag, cache_key: String) -> Result<Self> {
        let sentences = split_sentences(&text);
        if sentences.is_empty() {
            return Err(Error::Data(format!("summary for node {} is empty", account.0)));
        }
        Ok(TransactionSummary { account, text, sentences, backend_tag, cache_key })
    }
}

/// Digest of a forensic prompt. The prompt carries the template version and
/// the full serialized dossier, so this keys the cache on both.
pub fn cache_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Returns the cached summary for `prompt`, or asks the backend and caches the
/// result.
pub fn summarize_account(
    account: NodeId,
    prompt: &str,
    backend: &dyn Summarizer,
    store: &EvidenceStore,
) -> Result<TransactionSummary> {
    let key = cache_key(prompt);
    if let Some(hit) = store.get(&key) {
        return Ok(TransactionSummary { account, ..hit });
    }
    let completion = backend.complete(prompt, false)?;
    let summary = TransactionSummary::new(account, completion.text.trim().to_string(), backend.tag(), key)?;
    let stored = store.insert(&summary)?;
    Ok(TransactionSummary { account, ..stored })
}

/// Summarizes many accounts in parallel with at most `max_in_flight`
/// concurrent backend calls. Output order follows `accounts`.
pub fn summarize_accounts(
    graph: &TransactionGraph,
    accounts: &[NodeId],
    backend: &dyn Summarizer,
    store: &EvidenceStore,
    cfg: &PromptConfig,
    max_in_flight: usize,
) -> Result<Vec<TransactionSummary>> {
    if max_in_flight == 0 {
        return Err(Error::Config("max_in_flight must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        accounts
            .par_iter()
            .map(|&a| {
                let dossier = AccountDossier::from_graph(graph, a)?;
                let prompt = build_forensic_prompt(&dossier, cfg)?;
                summarize_account(a, &prompt, backend, store)
            })
            .collect()
    })
}
