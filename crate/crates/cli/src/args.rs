use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Chinese font style transfer: build glyph datasets, train a
/// style-conditioned U-Net, and generate mixed-style glyphs.
///
/// Exit codes: 0 success, 1 usage error, 2 runtime error. Errors print one
/// line starting with `error:`.
#[derive(Debug, Parser)]
#[command(name = "glyphforge", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset operations.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Two-phase training: unconditioned, then one-hot conditioned.
    Train(TrainArgs),
    /// Per-style mean absolute error of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Render characters under one or more style vectors into a sheet.
    Gen(GenArgs),
    /// Render an interpolation path between two style vectors, one file per step.
    Interpolate(InterpolateArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Rasterize source/target pairs into a dataset file.
    Build(DatasetBuildArgs),
}

pub fn power_of_two(text: &str) -> Result<usize, String> {
    let n: usize = text.parse().map_err(|_| format!("`{text}` is not an integer"))?;
    if n < 8 || !n.is_power_of_two() {
        return Err(format!("{n} must be a power of two >= 8"));
    }
    Ok(n)
}

fn fraction(text: &str) -> Result<f64, String> {
    let v: f64 = text.parse().map_err(|_| format!("`{text}` is not a number"))?;
    if !(0.0..1.0).contains(&v) {
        return Err(format!("{v} must lie in [0, 1)"));
    }
    Ok(v)
}

fn margin(text: &str) -> Result<f32, String> {
    let v: f32 = text.parse().map_err(|_| format!("`{text}` is not a number"))?;
    if !(0.0..0.5).contains(&v) {
        return Err(format!("{v} must lie in [0, 0.5)"));
    }
    Ok(v)
}

fn positive(text: &str) -> Result<usize, String> {
    match text.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{text}` must be a positive integer")),
    }
}

fn positive_f32(text: &str) -> Result<f32, String> {
    match text.parse::<f32>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{text}` must be a positive number")),
    }
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    /// Source font (`name=path` or a path).
    #[arg(long, env = "GLYPHFORGE_SOURCE")]
    pub source: String,
    /// Comma-separated target fonts, each `name=path` or a path; order sets style ids.
    #[arg(long, value_delimiter = ',', required = true, env = "GLYPHFORGE_TARGETS")]
    pub targets: Vec<String>,
    /// `builtin:topN`, `U+4E00..U+4E03`, `chars:...`, or a file of characters.
    #[arg(long, default_value = "builtin:top32", env = "GLYPHFORGE_CHARSET")]
    pub charset: String,
    #[arg(long, default_value = "64", value_parser = power_of_two, env = "GLYPHFORGE_SIZE")]
    pub size: usize,
    #[arg(long, default_value = "0.1", value_parser = margin)]
    pub margin: f32,
    /// Split seed recorded in the manifest.
    #[arg(long, default_value = "0", env = "GLYPHFORGE_SEED")]
    pub seed: u64,
    /// Dataset file; `<out>.skips.tsv` and `<out>.catalog.tsv` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Input size; defaults to the dataset's glyph size.
    #[arg(long, value_parser = power_of_two)]
    pub size: Option<usize>,
    #[arg(long, default_value = "4", env = "GLYPHFORGE_DEPTH")]
    pub depth: usize,
    #[arg(long, default_value = "32", env = "GLYPHFORGE_BASE")]
    pub base: usize,
    #[arg(long, default_value = "512")]
    pub cap: usize,
    /// Style count; defaults to the dataset's target-font count.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "GLYPHFORGE_DATASET")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "500")]
    pub phase1_steps: usize,
    #[arg(long, default_value = "1500", value_parser = positive)]
    pub phase2_steps: usize,
    #[arg(long, default_value = "16", value_parser = positive)]
    pub batch_size: usize,
    #[arg(long, default_value = "2e-4", value_parser = positive_f32, env = "GLYPHFORGE_LR")]
    pub lr: f32,
    #[arg(long, default_value = "0.5", value_parser = positive_f32)]
    pub lr_decay: f32,
    /// Evaluations without improvement before the learning rate decays.
    #[arg(long, default_value = "3")]
    pub patience: usize,
    #[arg(long, default_value = "100")]
    pub eval_every: usize,
    #[arg(long, default_value = "500")]
    pub checkpoint_every: usize,
    #[arg(long, default_value = "0", value_parser = fraction)]
    pub val_fraction: f64,
    #[arg(long, default_value = "0", env = "GLYPHFORGE_SEED")]
    pub seed: u64,
    /// Print a progress line every N steps (0 = quiet).
    #[arg(long, default_value = "100")]
    pub log_every: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "GLYPHFORGE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "GLYPHFORGE_DATASET")]
    pub dataset: PathBuf,
    /// Which split to score.
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitChoice,
    #[arg(long, default_value = "0", value_parser = fraction)]
    pub val_fraction: f64,
    #[arg(long, default_value = "0", env = "GLYPHFORGE_SEED")]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    All,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    #[arg(long, env = "GLYPHFORGE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Style catalog TSV; defaults to the names stored in the checkpoint.
    #[arg(long, env = "GLYPHFORGE_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Font to read characters from instead of the checkpoint's source font.
    #[arg(long, env = "GLYPHFORGE_SOURCE_FONT")]
    pub source_font: Option<PathBuf>,
    #[arg(long)]
    pub chars: String,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Mixture such as `song=0.5,kai=0.5`; repeat for more columns.
    #[arg(long)]
    pub mix: Vec<String>,
    /// Style name or id for a one-hot column; repeatable.
    #[arg(long)]
    pub one_hot: Vec<String>,
    /// Raw vector such as `0.2,0.5,0.7,0`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub weights: Vec<String>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the missing-glyph report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Start vector: a style name, a mixture `name=w,...`, or `w0,w1,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
    #[arg(long, default_value = "11")]
    pub steps: usize,
    /// Directory receiving `step_000.png` ...
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "8", value_parser = power_of_two)]
    pub size: usize,
    #[arg(long, default_value = "2")]
    pub depth: usize,
    #[arg(long, default_value = "4")]
    pub base: usize,
    #[arg(long, default_value = "2")]
    pub k: usize,
    #[arg(long, default_value = "3", value_parser = positive)]
    pub trials: usize,
    #[arg(long, default_value = "1", env = "GLYPHFORGE_SEED")]
    pub seed: u64,
    #[arg(long, default_value = "1e-3", value_parser = positive_f32)]
    pub threshold: f32,
    /// Negate this parameter array's analytic gradient (mutation control).
    #[arg(long)]
    pub negate: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "GLYPHFORGE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "GLYPHFORGE_CATALOG")]
    pub catalog: Option<PathBuf>,
    #[arg(long, env = "GLYPHFORGE_SOURCE_FONT")]
    pub source_font: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1", env = "GLYPHFORGE_HOST")]
    pub host: String,
    #[arg(long, default_value = "8080", env = "GLYPHFORGE_PORT")]
    pub port: u16,
    #[arg(long, default_value = "64", value_parser = positive, env = "GLYPHFORGE_MAX_CHARS")]
    pub max_chars: usize,
    #[arg(long, default_value = "33", env = "GLYPHFORGE_MAX_STEPS")]
    pub max_steps: usize,
}
