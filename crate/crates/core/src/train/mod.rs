//! Alternating optimization of the split policy (REINFORCE, encoder frozen)
//! and the dual-path encoder (backprop, policy frozen).

mod corpus;
mod optim;
mod reinforce;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use corpus::Corpus;
pub use optim::AdamW;
pub use reinforce::{reinforce_objective, reward_from_loss, update_baseline, BaselineState};

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, EvalReport, ScoreSet};
use crate::ingest::{DatasetSplits, NodeId};
use crate::model::{loss_and_grad, predict_sample, sample_loss, DualPathParams, LossWeights};
use crate::summary::{split_summary, SplitMode, SplitPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub outer_epochs: u32,
    pub inner_epochs: u32,
    pub lr_policy: f64,
    pub lr_gnn: f64,
    pub ema_momentum: f64,
    pub lambda_resi: f64,
    pub lambda_orth: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Non-improving encoder epochs tolerated before stopping; 0 disables.
    pub early_stop_patience: u32,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub policy_temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            outer_epochs: 2,
            inner_epochs: 10,
            lr_policy: 5e-6,
            lr_gnn: 1e-3,
            ema_momentum: 0.9,
            lambda_resi: 0.05,
            lambda_orth: 0.3,
            weight_decay: 1e-4,
            seed: 7,
            early_stop_patience: 5,
            embed_dim: 128,
            hidden_dim: 64,
            policy_temperature: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_policy >= 0.0 && self.lr_gnn >= 0.0) {
            return bad(format!("learning rates must be non-negative, got {} and {}", self.lr_policy, self.lr_gnn));
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad(format!("ema_momentum must be in [0, 1), got {}", self.ema_momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be positive".into());
        }
        if self.policy_temperature.is_nan() || self.policy_temperature <= 0.0 {
            return bad(format!("policy_temperature must be positive, got {}", self.policy_temperature));
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { resi: self.lambda_resi, orth: self.lambda_orth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochStats {
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_reward: f64,
    /// Share of centres whose discriminative prediction matched the label.
    pub accuracy: f64,
}

/// SHA-256 over the policy's weights, bias and temperature.
pub fn policy_digest(policy: &SplitPolicy) -> String {
    let mut h = Sha256::new();
    for x in policy.weights.iter().chain([&policy.bias, &policy.temperature]) {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn epoch_rng(seed: u64, outer: u32, inner: u32, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(outer) << 40) ^ (u64::from(inner) << 16) ^ stage)
}

fn label_of(corpus: &Corpus, node: NodeId) -> Result<f64> {
    corpus
        .label(node)
        .ok_or_else(|| Error::Precondition(format!("training node {} has no label", node.0)))
}

/// Reward and score-function gradient of one sampled split of `node`'s summary.
pub struct PolicySample {
    pub loss: f64,
    pub reward: f64,
    pub correct: bool,
    /// Gradient of `log p_disc + log p_resi` with respect to the policy weights
    /// followed by the bias.
    pub score: Vec<f64>,
}

pub fn sample_policy_step(
    corpus: &Corpus,
    node: NodeId,
    policy: &SplitPolicy,
    params: &DualPathParams,
    weights: LossWeights,
    rng: &mut ChaCha8Rng,
) -> Result<PolicySample> {
    let label = label_of(corpus, node)?;
    let summary = corpus.summary(node)?;
    let split = split_summary(summary, policy, SplitMode::Sample(rng))?;
    let (dv, rv) = corpus.embed_split(&split)?;
    let inputs = corpus.inputs(node, Some((&dv, &rv)))?;
    let parts = sample_loss(params, &inputs, label, weights)?;
    let loss = parts.total;
    let reward = reward_from_loss(loss)?;
    let correct = (parts.p_disc >= 0.5) == (label >= 0.5);
    let (mut score, gb) = policy.log_prob_gradient(corpus.sentence_features(node)?, &split.draws);
    score.push(gb);
    Ok(PolicySample { loss, reward, correct, score })
}

/// One REINFORCE pass over `nodes` in seeded-shuffled order. The encoder
/// parameters are only read.
#[allow(clippy::too_many_arguments)]
pub fn stage1_epoch(
    corpus: &mut Corpus,
    nodes: &[NodeId],
    policy: &mut SplitPolicy,
    opt: &mut AdamW,
    params: &DualPathParams,
    baseline: &mut BaselineState,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    policy.validate()?;
    corpus.refresh(policy)?;
    let mut order = nodes.to_vec();
    order.shuffle(rng);
    let mut stats = EpochStats::default();
    for &v in &order {
        let s = sample_policy_step(corpus, v, policy, params, cfg.loss_weights(), rng)?;
        let advantage = baseline.advantage(s.reward);
        *baseline = update_baseline(*baseline, s.reward);
        // d/dθ of −A·(log p_disc + log p_resi).
        let grad: Vec<f64> = s.score.iter().map(|g| -advantage * g).collect();
        let mut flat = policy.weights.clone();
        flat.push(policy.bias);
        opt.step(&mut flat, &grad);
        policy.bias = flat.pop().expect("bias entry");
        policy.weights = flat;
        stats.steps += 1;
        stats.mean_loss += s.loss;
        stats.mean_reward += s.reward;
        stats.accuracy += f64::from(u8::from(s.correct));
    }
    finish(&mut stats);
    Ok(stats)
}

fn finish(stats: &mut EpochStats) {
    if stats.steps > 0 {
        let n = stats.steps as f64;
        stats.mean_loss /= n;
        stats.mean_reward /= n;
        stats.accuracy /= n;
    }
}

/// One backprop pass over `nodes` with deterministic splits. The policy is
/// only read.
pub fn stage2_epoch(
    corpus: &mut Corpus,
    nodes: &[NodeId],
    policy: &SplitPolicy,
    params: &mut DualPathParams,
    opt: &mut AdamW,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    corpus.refresh(policy)?;
    let mut order = nodes.to_vec();
    order.shuffle(rng);
    let mut stats = EpochStats::default();
    for &v in &order {
        let label = label_of(corpus, v)?;
        let inputs = corpus.inputs(v, None)?;
        let (loss, grad) = loss_and_grad(params, &inputs, label, cfg.loss_weights())?;
        if !loss.total.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss or gradient at node {}", v.0)));
        }
        opt.step_params(params, &grad);
        stats.steps += 1;
        stats.mean_loss += loss.total;
        stats.mean_reward += reward_from_loss(loss.total)?;
        stats.accuracy += f64::from(u8::from((loss.p_disc >= 0.5) == (label >= 0.5)));
    }
    finish(&mut stats);
    Ok(stats)
}

/// Discriminative-path probabilities for `nodes`, using the deterministic
/// splits from the corpus' last refresh.
pub fn predict_nodes(corpus: &Corpus, params: &DualPathParams, nodes: &[NodeId]) -> Result<Vec<f64>> {
    nodes
        .par_iter()
        .map(|&v| predict_sample(params, &corpus.inputs(v, None)?))
        .collect()
}

pub fn evaluate(corpus: &Corpus, params: &DualPathParams, nodes: &[NodeId]) -> Result<EvalReport> {
    let scores = predict_nodes(corpus, params, nodes)?;
    let labels = nodes.iter().map(|&v| label_of(corpus, v)).collect::<Result<Vec<_>>>()?;
    compute_metrics(&ScoreSet::from_pairs(&labels, &scores)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Policy,
    Encoder,
}

/// One line of the training log. `timestamp` is a logical clock: the number of
/// optimizer steps taken so far, which keeps logs reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub outer: u32,
    pub inner: u32,
    pub stage: Stage,
    pub mean_loss: f64,
    pub mean_reward: f64,
    pub val_f1: Option<f64>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub outer: u32,
    pub inner: u32,
    pub val_f1: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DualPathParams,
    pub policy: SplitPolicy,
    pub log: Vec<LogEntry>,
    pub best: Option<BestEpoch>,
    pub stopped_early: bool,
}

fn score_key(r: &EvalReport) -> (f64, f64) {
    (r.f1.unwrap_or(-1.0), r.auc.unwrap_or(-1.0))
}

/// Runs `outer_epochs` rounds of one policy pass followed by `inner_epochs`
/// encoder passes, keeping the parameters and policy of the best validation
/// epoch (F1, then AUC).
pub fn alternate_train(corpus: &mut Corpus, splits: &DatasetSplits, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    if splits.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if corpus.embed_dim() != cfg.embed_dim {
        return Err(Error::shape("corpus embedding width", cfg.embed_dim, corpus.embed_dim()));
    }
    let train: Vec<NodeId> = splits.train.clone();
    let val: Vec<NodeId> = splits.val.clone();
    let mut params = DualPathParams::init(cfg.embed_dim, cfg.hidden_dim, cfg.seed);
    let mut policy = SplitPolicy { temperature: cfg.policy_temperature, ..SplitPolicy::default() };
    let mut policy_opt = AdamW::new(cfg.lr_policy, 0.0);
    let mut gnn_opt = AdamW::new(cfg.lr_gnn, cfg.weight_decay);
    let mut baseline = BaselineState::new(cfg.ema_momentum);
    let mut log = Vec::new();
    let mut best: Option<(BestEpoch, (f64, f64), DualPathParams, SplitPolicy)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let clock = |a: &AdamW, b: &AdamW| u64::from(a.steps()) + u64::from(b.steps());

    'outer: for outer in 0..cfg.outer_epochs {
        let mut rng = epoch_rng(cfg.seed, outer, 0, 1);
        let s1 = stage1_epoch(corpus, &train, &mut policy, &mut policy_opt, &params, &mut baseline, cfg, &mut rng)?;
        log.push(LogEntry {
            outer,
            inner: 0,
            stage: Stage::Policy,
            mean_loss: s1.mean_loss,
            mean_reward: s1.mean_reward,
            val_f1: None,
            timestamp: clock(&policy_opt, &gnn_opt),
        });
        for inner in 1..=cfg.inner_epochs {
            let mut rng = epoch_rng(cfg.seed, outer, inner, 2);
            let s2 = stage2_epoch(corpus, &train, &policy, &mut params, &mut gnn_opt, cfg, &mut rng)?;
            let report = evaluate(corpus, &params, &val)?;
            log.push(LogEntry {
                outer,
                inner,
                stage: Stage::Encoder,
                mean_loss: s2.mean_loss,
                mean_reward: s2.mean_reward,
                val_f1: report.f1,
                timestamp: clock(&policy_opt, &gnn_opt),
            });
            let key = score_key(&report);
            if best.as_ref().is_none_or(|b| key > b.1) {
                let epoch = BestEpoch { outer, inner, val_f1: report.f1, val_auc: report.auc };
                best = Some((epoch, key, params.clone(), policy.clone()));
                stale = 0;
            } else {
                stale += 1;
                if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                    stopped_early = true;
                    break 'outer;
                }
            }
        }
    }
    let (best, params, policy) = match best {
        Some((b, _, p, q)) => (Some(b), p, q),
        None => (None, params, policy),
    };
    corpus.refresh(&policy)?;
    Ok(TrainOutcome { params, policy, log, best, stopped_early })
}

pub fn log_to_jsonl(log: &[LogEntry]) -> Result<String> {
    crate::io::to_jsonl(log)
}
