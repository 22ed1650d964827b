use std::collections::HashSet;
use std::fmt::Write as _;

use super::backend::Summarizer;
use super::split::{promote_if_empty, SummarySplit};
use super::TransactionSummary;
use crate::error::{Error, Result};
use crate::text::{split_sentences, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    Discriminative,
    Residual,
}

impl AgentRole {
    fn marker(self) -> &'static str {
        match self {
            AgentRole::Discriminative => "[agent discriminative]",
            AgentRole::Residual => "[agent residual]",
        }
    }
}

/// Minimum token overlap for an output sentence to count as covering a source
/// sentence.
pub const COVER_MIN: f64 = 0.5;

const SURROGATE_FLOOR: f64 = 1e-6;

pub fn agent_prompt(role: AgentRole, sentences: &[String]) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "{}", role.marker());
    match role {
        AgentRole::Discriminative => p.push_str(
            "You are a discriminative summary analyst. Copy, verbatim, every sentence below that carries \
             evidence useful for telling fraudulent accounts from benign ones, judged on four aspects:\n\
             1. Transaction patterns: recurring structures such as fan-in, fan-out or repeated transfers.\n\
             2. Fund flows: direction, dominance and pass-through of value.\n\
             3. Associated addresses: how counterparties are connected to the account.\n\
             4. Temporal signs: bursts, dormancy and unusual timing.\n",
        ),
        AgentRole::Residual => p.push_str(
            "You are a residual summary analyst. Copy, verbatim, every sentence below that belongs to one \
             of two groups:\n\
             1. Noise: prompt-like wording, repetition, or risk judgments not backed by transaction evidence.\n\
             2. Factual statements: plain descriptions of transaction data that say nothing about risk.\n",
        ),
    }
    p.push_str("Output only the copied sentences, separated by spaces.\nSentences:\n");
    for (i, s) in sentences.iter().enumerate() {
        let _ = writeln!(p, "S{}: {s}", i + 1);
    }
    p
}

pub(crate) fn parse_agent_prompt(prompt: &str) -> Option<(AgentRole, Vec<String>)> {
    let first = prompt.lines().next()?.trim();
    let role = [AgentRole::Discriminative, AgentRole::Residual].into_iter().find(|r| r.marker() == first)?;
    let sentences = prompt
        .lines()
        .filter_map(|l| {
            let rest = l.strip_prefix('S')?;
            let (n, s) = rest.split_once(": ")?;
            n.parse::<usize>().ok().map(|_| s.to_string())
        })
        .collect();
    Some((role, sentences))
}

/// Token overlap between a source sentence and the closest output sentence,
/// normalized by the longer of the two.
pub fn overlap_score(source: &str, outputs: &[String]) -> f64 {
    let src: HashSet<String> = tokenize(source).into_iter().collect();
    if src.is_empty() {
        return 0.0;
    }
    outputs
        .iter()
        .map(|o| {
            let out: HashSet<String> = tokenize(o).into_iter().collect();
            src.intersection(&out).count() as f64 / src.len().max(out.len()) as f64
        })
        .fold(0.0, f64::max)
}

/// Splits a summary with two free-form analyst prompts, then maps each source
/// sentence to the side whose output overlaps it most. Sentences neither side
/// covers go to the residual side.
///
/// Log-probabilities come from backend token log-probabilities when reported,
/// otherwise from the surrogate `Σ ln(overlap)` over the sentences on each side.
pub fn remote_llm_split(summary: &TransactionSummary, backend: &dyn Summarizer) -> Result<SummarySplit> {
    if summary.sentences.is_empty() {
        return Err(Error::Precondition("summary has no sentences".into()));
    }
    let disc = backend.complete(&agent_prompt(AgentRole::Discriminative, &summary.sentences), true)?;
    let resi = backend.complete(&agent_prompt(AgentRole::Residual, &summary.sentences), true)?;
    let disc_out = split_sentences(&disc.text);
    let resi_out = split_sentences(&resi.text);
    let sd: Vec<f64> = summary.sentences.iter().map(|s| overlap_score(s, &disc_out)).collect();
    let sr: Vec<f64> = summary.sentences.iter().map(|s| overlap_score(s, &resi_out)).collect();
    if sd.iter().chain(&sr).all(|&x| x < COVER_MIN) {
        return Err(Error::Data("unusable split: agent output covers no source sentence".into()));
    }
    let mut selections: Vec<bool> = sd.iter().zip(&sr).map(|(&d, &r)| d >= COVER_MIN && d >= r).collect();
    let fallback = promote_if_empty(&mut selections, &sd);
    let surrogate = |side: bool, scores: &[f64]| -> f64 {
        selections
            .iter()
            .zip(scores)
            .filter(|(&s, _)| s == side)
            .map(|(_, &x)| x.clamp(SURROGATE_FLOOR, 1.0).ln())
            .sum()
    };
    let logp_disc = disc.sequence_logprob().map_or_else(|| surrogate(true, &sd), |l| l.min(0.0));
    let logp_resi = resi.sequence_logprob().map_or_else(|| surrogate(false, &sr), |l| l.min(0.0));
    let probs = sd.iter().map(|x| x.clamp(SURROGATE_FLOOR, 1.0)).collect();
    Ok(SummarySplit::from_selections(&summary.sentences, selections.clone(), selections, probs, logp_disc, logp_resi, fallback))
}
