//! The "overfit-4" reference experiment: one source font, four target
//! styles, the 32 most common characters at 64px, memorized with no
//! held-out split.

use std::path::{Path, PathBuf};

use glyphforge::corpus::{build_dataset, load_charset, BuildOptions, Dataset, FontSource};
use glyphforge::train::TrainConfig;
use glyphforge::unet::{ModelConfig, Phase};
use glyphforge::Result;

pub const SEED: u64 = 7;
pub const SIZE: usize = 64;
pub const DEPTH: usize = 4;
pub const BASE: usize = 32;
pub const CHARSET: &str = "builtin:top32";
pub const SOURCE: &str = "hei";
pub const TARGETS: [&str; 4] = ["song", "kai", "brush", "round"];
pub const PHASE1_STEPS: usize = 500;
pub const PHASE2_STEPS: usize = 1500;
pub const BATCH: usize = 16;

pub fn fonts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/fonts")
}

pub fn font_path(name: &str) -> PathBuf {
    fonts_dir().join(format!("{name}.ttf"))
}

pub fn build() -> Result<Dataset> {
    let source = FontSource::new(SOURCE, font_path(SOURCE));
    let targets: Vec<FontSource> = TARGETS.iter().map(|n| FontSource::new(*n, font_path(n))).collect();
    let charset = load_charset(CHARSET)?;
    let options = BuildOptions {
        size: SIZE,
        split_seed: SEED,
        ..BuildOptions::default()
    };
    build_dataset(&source, &targets, &charset, &options)
}

pub fn model() -> ModelConfig {
    ModelConfig::new(SIZE, DEPTH, BASE, TARGETS.len()).with_seed(SEED)
}

pub fn phases() -> (TrainConfig, TrainConfig) {
    let phase = |p, steps| {
        TrainConfig::new(p, steps)
            .with_seed(SEED)
            .with_batch_size(BATCH)
    };
    (phase(Phase::One, PHASE1_STEPS), phase(Phase::Two, PHASE2_STEPS))
}
