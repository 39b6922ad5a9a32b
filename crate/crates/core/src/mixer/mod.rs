//! Style vectors: one-hot selection, named mixtures, interpolation paths and
//! specimen sheets.

mod render;
mod specimen;
mod weights;

pub use render::{glyph_png, render_glyphs, GrayImage, Skipped};
pub use specimen::{render_specimen, SpecimenIssue, SpecimenSheet};
pub use weights::{interpolation_path, mix, one_hot, MixSpec, StyleRef, StyleWeights};
