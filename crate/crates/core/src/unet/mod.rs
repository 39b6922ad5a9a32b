//! U-Net encoder-decoder with a style vector concatenated at the bottleneck.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{Checkpoint, FontRecord, Phase, CHECKPOINT_VERSION};
pub use config::{
    Activation, Architecture, Direction, ModelConfig, ParamRole, ParamSpec, StageSpec,
    DEFAULT_CHANNEL_CAP,
};
pub use model::{inject_style, Encoded, Gradients, Trace};
pub use params::{ParamTensor, Parameters};
