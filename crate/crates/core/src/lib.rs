pub mod error;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
pub mod gradcheck;
pub mod nn;
pub mod fusion;
pub mod model;
pub mod supervision;
pub mod tam;

pub use fusion::{GateMode, GateWeights};
pub use model::{AcfNet, AcfNetConfig, ForwardOptions, ResinResOutput};
pub use supervision::LossBreakdown;
pub mod metrics;
pub mod io;
pub mod runner;

pub use metrics::{GrayMap, MetricReport, SaliencyMap};
pub use nn::weights::ModelWeights;
