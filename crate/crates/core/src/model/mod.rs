//! Text embedding and the dual-path graph encoder.

mod embed;
mod encoder;
mod params;

pub use embed::{embed_text, EmbedBackend, ExternalEmbed, TextEmbedder};
pub use encoder::{
    attention_fuse, branch_output, forward_sample, gnn_forward, loss_and_grad, normalized_adjacency,
    predict_center, predict_sample, sample_loss, sigmoid, triview_loss, FeatureRole, Fusion, LossParts,
    LossWeights, NodeFeatures, SampleForward, SampleInputs, PROB_EPS,
};
pub use params::{BranchParams, Checkpoint, DualPathParams, NamedTensor, MODEL_FORMAT, MODEL_FORMAT_VERSION};
