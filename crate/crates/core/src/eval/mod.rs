//! Classification metrics and the synthetic corpus generator.

mod metrics;
mod synth;

pub use metrics::{auc, compute_metrics, ks, Confusion, EvalReport, ScoreRow, ScoreSet};
pub use synth::{synthgen, Motif, MotifMix, SynthConfig, SynthCorpus};
