//! Two-phase training, evaluation and gradient checking.

mod config;
mod eval;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use config::{LossKind, TrainConfig, DEFAULT_LEARNING_RATE, DEFAULT_LR_DECAY, DEFAULT_PATIENCE, DIVERGENCE_LOSS};
pub use eval::{evaluate, mean_abs_diff, Conditioning, EvalTable, GlyphModel};
pub use gradcheck::{
    gradient_check, gradient_check_with, negate_array, relative_error, tiny_config, GradCheckReport, FD_STEP,
};
pub use loss::l1_loss;
pub use optim::Adam;
pub use trainer::{
    checkpoint_name, fit, latest_checkpoint, loss_and_gradients, Batch, EvalSet, FitOptions, ProgressFn,
    StepLoss, TrainReport, Trainer,
};
