//! Chinese font style transfer with a style-conditioned U-Net.
//!
//! The pipeline: [`corpus`] renders paired glyph datasets from font files,
//! [`unet`] holds the encoder-decoder, [`train`] fits it in two phases, and
//! [`mixer`] builds style vectors (one-hot, mixtures, interpolation paths) and
//! renders specimen sheets from a checkpoint.

pub mod corpus;
pub mod error;
pub mod mixer;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use tensor::Tensor;
