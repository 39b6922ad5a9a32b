use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unet::Phase;

pub const DEFAULT_LEARNING_RATE: f32 = 2e-4;
pub const DEFAULT_LR_DECAY: f32 = 0.5;
pub const DEFAULT_PATIENCE: usize = 3;
/// Losses above this count as divergence even when finite.
pub const DIVERGENCE_LOSS: f64 = 1e3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    MeanAbsoluteError,
}

impl LossKind {
    pub fn tag(self) -> &'static str {
        match self {
            LossKind::MeanAbsoluteError => "mae",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "mae" | "l1" | "mean-absolute-error" => Ok(LossKind::MeanAbsoluteError),
            other => Err(Error::TrainConfigInvalid(format!("unknown loss '{other}'"))),
        }
    }
}

/// Hyperparameters of one training phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Factor applied to the learning rate after `patience` evaluations
    /// without improvement.
    pub lr_decay: f32,
    pub patience: usize,
    pub seed: u64,
    /// 0 disables periodic checkpoints; the phase-end checkpoint is still written.
    pub checkpoint_every: usize,
    /// Steps between plateau evaluations; 0 disables decay.
    pub eval_every: usize,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn new(phase: Phase, steps: usize) -> Self {
        Self {
            phase,
            steps,
            batch_size: 16,
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_decay: DEFAULT_LR_DECAY,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            checkpoint_every: 500,
            eval_every: 100,
            loss: LossKind::MeanAbsoluteError,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_learning_rate(mut self, learning_rate: f32) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::TrainConfigInvalid(msg));
        if self.steps == 0 {
            return bad("steps must be > 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        Ok(())
    }
}
