use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(−L)`, in `(0, 1]` for non-negative losses.
pub fn reward_from_loss(loss: f64) -> Result<f64> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {loss}")));
    }
    if loss < 0.0 {
        return Err(Error::Domain(format!("loss must be non-negative, got {loss}")));
    }
    Ok((-loss).exp())
}

/// Exponential moving average of past rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub b: f64,
    pub step: u64,
    pub momentum: f64,
}

impl BaselineState {
    pub fn new(momentum: f64) -> Self {
        BaselineState { b: 0.0, step: 0, momentum }
    }

    /// Advantage of `reward` against the current (pre-update) baseline. Before
    /// the first update the baseline is taken to be the reward itself.
    pub fn advantage(&self, reward: f64) -> f64 {
        if self.step == 0 {
            0.0
        } else {
            reward - self.b
        }
    }
}

/// `b' = m·b + (1−m)·R`; the first observed reward initializes the baseline.
pub fn update_baseline(state: BaselineState, reward: f64) -> BaselineState {
    let b = if state.step == 0 { reward } else { state.momentum * state.b + (1.0 - state.momentum) * reward };
    BaselineState { b, step: state.step + 1, momentum: state.momentum }
}

/// `−A·(log p_disc + log p_resi)`; the advantage is a constant.
pub fn reinforce_objective(advantage: f64, logp_disc: f64, logp_resi: f64) -> f64 {
    -advantage * (logp_disc + logp_resi)
}
