//! Network building blocks: conv-BN-activation, residual encoder, FPN decoder,
//! prediction head, and the parameter store they read from.

pub mod blocks;
pub mod encoder;
pub mod fpn;
pub mod graph;
pub mod head;
pub mod weights;

pub use blocks::{BatchNorm, Cbr, Conv};
pub use encoder::{Encoder, EncoderConfig, SideOutputs, STAGE_STRIDES};
pub use fpn::{Fpn, FpnOutput};
pub use graph::{apply_running_stats, Graph};
pub use head::PredictionHead;
pub use weights::{Init, ModelWeights, Registry};
