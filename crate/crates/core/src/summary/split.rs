use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::TransactionSummary;
use crate::error::{Error, Result};
use crate::text::{is_numeric, join_sentences, tokenize};

/// Keyword groups of the sentence feature vector. A token matches a group when
/// it starts with one of the group's stems.
pub const KEYWORD_GROUPS: [(&str, &[&str]); 7] = [
    ("amount", &["amount", "volume", "value", "inflow", "outflow", "total", "received", "sent"]),
    ("frequency", &["frequen", "transaction", "repeat", "rapid"]),
    ("mixer", &["mix", "tornado", "obfusc", "pass", "forward", "launder", "relay"]),
    ("burst", &["burst", "spike", "sudden", "new"]),
    ("period", &["day", "hour", "week", "month", "period", "span", "dormant", "active"]),
    ("pattern", &["fan-in", "fan-out", "converg", "dispers", "dominan", "counterpart", "partner", "sender", "receiver"]),
    ("hedge", &["may", "might", "possibl", "advis", "overall", "appear", "monitor", "warrant", "suspicious", "likely"]),
];

/// Index of the hedging-language group.
pub const HEDGE_FEATURE: usize = 6;
/// Keyword indicators, then sentence length (tokens / 20, capped at 2), then
/// the fraction of numeric tokens.
pub const FEATURE_DIM: usize = KEYWORD_GROUPS.len() + 2;

pub fn feature_names() -> Vec<String> {
    KEYWORD_GROUPS
        .iter()
        .map(|(n, _)| n.to_string())
        .chain(["length".to_string(), "numerals".to_string()])
        .collect()
}

pub fn sentence_features(sentence: &str) -> Vec<f64> {
    let tokens = tokenize(sentence);
    let mut f = vec![0.0; FEATURE_DIM];
    for (g, (_, stems)) in KEYWORD_GROUPS.iter().enumerate() {
        if tokens.iter().any(|t| stems.iter().any(|s| t.starts_with(s))) {
            f[g] = 1.0;
        }
    }
    let n = tokens.len() as f64;
    f[KEYWORD_GROUPS.len()] = (n / 20.0).min(2.0);
    if n > 0.0 {
        f[KEYWORD_GROUPS.len() + 1] = tokens.iter().filter(|t| is_numeric(t)).count() as f64 / n;
    }
    f
}

/// Probabilities are kept this far from 0 and 1 so both log terms stay finite.
const P_FLOOR: f64 = 1e-12;

/// Logistic sentence-selection policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub temperature: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy { weights: vec![0.0; FEATURE_DIM], bias: 0.0, temperature: 1.0 }
    }
}

impl SplitPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != FEATURE_DIM {
            return Err(Error::shape("policy weights", FEATURE_DIM, self.weights.len()));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Config(format!("policy temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    pub fn probability(&self, features: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        crate::model::sigmoid(z / self.temperature).clamp(P_FLOOR, 1.0 - P_FLOOR)
    }

    /// Gradient of `Σ ln P(x_i)` with respect to `(weights, bias)` for the
    /// realized selections.
    pub fn log_prob_gradient(&self, features: &[Vec<f64>], selections: &[bool]) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        for (phi, &x) in features.iter().zip(selections) {
            let c = (f64::from(u8::from(x)) - self.probability(phi)) / self.temperature;
            for (g, v) in gw.iter_mut().zip(phi) {
                *g += c * v;
            }
            gb += c;
        }
        (gw, gb)
    }
}

pub enum SplitMode<'a> {
    Sample(&'a mut dyn RngCore),
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySplit {
    pub disc_text: String,
    pub resi_text: String,
    /// `true` where the sentence went to the discriminative side.
    pub selections: Vec<bool>,
    /// The sampled outcome the log-probabilities refer to. Equal to
    /// `selections` except when the fallback promoted a sentence after an
    /// all-residual draw.
    pub draws: Vec<bool>,
    pub probs: Vec<f64>,
    pub logp_disc: f64,
    pub logp_resi: f64,
    /// Set when no sentence was selected and the most probable one was
    /// promoted to the discriminative side.
    pub fallback: bool,
}

impl SummarySplit {
    pub(crate) fn from_selections(
        sentences: &[String],
        selections: Vec<bool>,
        draws: Vec<bool>,
        probs: Vec<f64>,
        logp_disc: f64,
        logp_resi: f64,
        fallback: bool,
    ) -> Self {
        let pick = |side: bool| {
            let v: Vec<&String> = sentences.iter().zip(&selections).filter(|(_, &s)| s == side).map(|(t, _)| t).collect();
            join_sentences(&v)
        };
        SummarySplit { disc_text: pick(true), resi_text: pick(false), selections, draws, probs, logp_disc, logp_resi, fallback }
    }
}

pub(crate) fn promote_if_empty(selections: &mut [bool], scores: &[f64]) -> bool {
    if selections.iter().any(|&s| s) {
        return false;
    }
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > scores[best] { i } else { best });
    selections[best] = true;
    true
}

/// Assigns every sentence to the discriminative or the residual side.
pub fn split_summary(summary: &TransactionSummary, policy: &SplitPolicy, mode: SplitMode<'_>) -> Result<SummarySplit> {
    policy.validate()?;
    if summary.sentences.is_empty() {
        return Err(Error::Precondition("summary has no sentences".into()));
    }
    let probs: Vec<f64> = summary.sentences.iter().map(|s| policy.probability(&sentence_features(s))).collect();
    let sampled = matches!(mode, SplitMode::Sample(_));
    let mut selections: Vec<bool> = match mode {
        SplitMode::Deterministic => probs.iter().map(|&p| p >= 0.5).collect(),
        SplitMode::Sample(rng) => probs.iter().map(|&p| rng.random::<f64>() < p).collect(),
    };
    let raw = selections.clone();
    let fallback = promote_if_empty(&mut selections, &probs);
    // A sampled split keeps the probability of what was drawn, so the score
    // function stays unbiased; a deterministic split reports the realized one.
    let draws = if sampled { raw } else { selections.clone() };
    let mut logp_disc = 0.0;
    let mut logp_resi = 0.0;
    for (&p, &s) in probs.iter().zip(&draws) {
        if s {
            logp_disc += p.ln();
        } else {
            logp_resi += (1.0 - p).ln();
        }
    }
    Ok(SummarySplit::from_selections(&summary.sentences, selections, draws, probs, logp_disc, logp_resi, fallback))
}
