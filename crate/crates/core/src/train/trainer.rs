use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{TrainConfig, DIVERGENCE_LOSS};
use super::eval::{evaluate, Conditioning, EvalTable};
use super::loss::l1_loss;
use super::optim::Adam;
use crate::corpus::{SamplePair, Split};
use crate::error::{Error, Result};
use crate::mixer::StyleWeights;
use crate::unet::{Checkpoint, FontRecord, Gradients, ModelConfig, Parameters, Phase};
use crate::Tensor;

impl Phase {
    pub fn conditioning(self) -> Conditioning {
        match self {
            Phase::One => Conditioning::Zero,
            Phase::Two => Conditioning::OneHot,
        }
    }
}

/// Stacked sources and targets with one style vector per sample.
#[derive(Clone, Debug)]
pub struct Batch {
    pub sources: Tensor,
    pub targets: Tensor,
    pub weights: Vec<StyleWeights>,
}

impl Batch {
    pub fn new(samples: &[&SamplePair], conditioning: Conditioning, k: usize) -> Result<Self> {
        let first = samples.first().ok_or(Error::DatasetEmpty)?;
        let size = first.source.size;
        Ok(Self {
            sources: Tensor::stack_images(size, samples.iter().map(|s| s.source.pixels.as_slice()))?,
            targets: Tensor::stack_images(size, samples.iter().map(|s| s.target.pixels.as_slice()))?,
            weights: samples
                .iter()
                .map(|s| conditioning.weights(s.style_id, k))
                .collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Loss and gradients of `params` on one batch.
pub fn loss_and_gradients(params: &Parameters<f32>, batch: &Batch) -> Result<(f64, Gradients<f32>)> {
    if batch.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let (out, trace) = params.forward_traced(&batch.sources, &batch.weights)?;
    if out.shape() != batch.targets.shape() {
        return Err(Error::ShapeMismatch(format!(
            "targets {:?} vs output {:?}",
            batch.targets.shape(),
            out.shape()
        )));
    }
    let (loss, grad) = l1_loss(out.data(), batch.targets.data());
    let d_out = Tensor::new(out.shape(), grad)?;
    let grads = params.backward(&trace, &d_out)?;
    Ok((loss, grads))
}

/// Owns the parameters and optimizer state of one phase.
pub struct Trainer {
    params: Parameters<f32>,
    optimizer: Adam,
    config: TrainConfig,
    step: usize,
}

impl Trainer {
    pub fn new(params: Parameters<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(&params, config.learning_rate);
        Ok(Self {
            params,
            optimizer,
            config,
            step: 0,
        })
    }

    pub fn params(&self) -> &Parameters<f32> {
        &self.params
    }

    pub fn into_params(self) -> Parameters<f32> {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn learning_rate(&self) -> f32 {
        self.optimizer.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f32) {
        self.optimizer.learning_rate = lr;
    }

    /// One optimizer update. Returns the batch loss before the update.
    ///
    /// A non-finite or oversized loss, a non-finite gradient, or an all-zero
    /// gradient under a positive loss leaves the parameters untouched and
    /// returns `NumericalDivergence`.
    pub fn train_step(&mut self, batch: &Batch) -> Result<f64> {
        let phase = self.config.phase;
        let k = self.params.config().style_count;
        for w in &batch.weights {
            let expected = match phase {
                Phase::One => w.as_slice().iter().all(|&v| v == 0.0),
                Phase::Two => w.as_slice().iter().filter(|&&v| v == 1.0).count() == 1
                    && w.as_slice().iter().all(|&v| v == 0.0 || v == 1.0),
            };
            if w.len() != k || !expected {
                return Err(Error::TrainConfigInvalid(format!(
                    "phase {} batch carries style vector {}",
                    phase.number(),
                    w.label()
                )));
            }
        }
        let (loss, grads) = loss_and_gradients(&self.params, batch)?;
        let step = self.step + 1;
        let diverged = |loss| Error::NumericalDivergence {
            phase: phase.number(),
            step,
            loss,
            last_checkpoint: None,
        };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(diverged(loss));
        }
        if !grads.iter().all(|g| g.iter().all(|v| v.is_finite())) {
            return Err(diverged(loss));
        }
        // A positive loss with every gradient exactly zero means the output
        // squash has saturated everywhere; no further step can move it.
        if loss > 0.0 && grads.iter().all(|g| g.iter().all(|&v| v == 0.0)) {
            return Err(diverged(loss));
        }
        let before = self.params.clone();
        self.optimizer.step(&mut self.params, &grads);
        if !self.params.all_finite() {
            self.params = before;
            return Err(diverged(f64::NAN));
        }
        self.step = step;
        Ok(loss)
    }
}

/// Seeded, epoch-shuffled stream of sample indices; batches wrap across
/// epoch boundaries so every batch is full.
struct BatchOrder {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchOrder {
    fn new(n: usize, seed: u64) -> Self {
        let mut me = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        };
        me.refill();
        me
    }

    fn refill(&mut self) {
        self.order.sort_unstable();
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next(&mut self, batch: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor == self.order.len() {
                self.refill();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLoss {
    pub phase: Phase,
    pub step: usize,
    pub loss: f64,
}

/// What `fit` produced.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// One entry per executed step, phase 1 first.
    pub losses: Vec<StepLoss>,
    /// Phase-2 (one-hot) MAE on the validation split, or on the training
    /// split when no characters were held out.
    pub eval: EvalTable,
    pub evaluated_on: EvalSet,
    pub wall_clock: Duration,
    pub final_checkpoint: Option<PathBuf>,
    pub checkpoint_hash: String,
    pub lr_decays: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSet {
    Validation,
    Train,
}

impl TrainReport {
    pub fn phase_losses(&self, phase: Phase) -> Vec<f64> {
        self.losses.iter().filter(|l| l.phase == phase).map(|l| l.loss).collect()
    }
}

/// Per-step callback: phase, step within phase, loss, learning rate.
pub type ProgressFn<'a> = dyn FnMut(Phase, usize, f64, f32) + 'a;

/// Where `fit` writes and what it records in checkpoints.
#[derive(Default)]
pub struct FitOptions<'a> {
    /// Directory for `ckpt_phase{P}_step{N}` files and `metrics.tsv`.
    pub out_dir: Option<PathBuf>,
    /// Style names in id order, stored in every checkpoint.
    pub styles: Vec<String>,
    pub source_font: Option<FontRecord>,
    pub progress: Option<&'a mut ProgressFn<'a>>,
}

pub fn checkpoint_name(phase: Phase, step: usize) -> String {
    format!("ckpt_phase{}_step{step}", phase.number())
}

struct Run<'a, 'b> {
    opts: &'b mut FitOptions<'a>,
    metrics: Option<BufWriter<File>>,
    last_checkpoint: Option<PathBuf>,
    losses: Vec<StepLoss>,
    lr_decays: usize,
}

impl Run<'_, '_> {
    fn checkpoint(&mut self, params: &Parameters<f32>, phase: Phase, step: usize) -> Result<String> {
        let ckpt = Checkpoint {
            params: params.clone(),
            phase,
            step,
            styles: self.opts.styles.clone(),
            source_font: self.opts.source_font.clone(),
        };
        match &self.opts.out_dir {
            Some(dir) => {
                let path = dir.join(checkpoint_name(phase, step));
                let hash = ckpt.save(&path)?;
                self.last_checkpoint = Some(path);
                Ok(hash)
            }
            None => Ok(ckpt.content_hash()),
        }
    }

    fn log(&mut self, line: &str) -> Result<()> {
        if let Some(m) = self.metrics.as_mut() {
            m.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    fn diverged(&self, err: Error) -> Error {
        match err {
            Error::NumericalDivergence {
                phase, step, loss, ..
            } => Error::NumericalDivergence {
                phase,
                step,
                loss,
                last_checkpoint: self.last_checkpoint.clone(),
            },
            other => other,
        }
    }

    /// Runs one phase to completion and returns its parameters.
    fn phase(
        &mut self,
        params: Parameters<f32>,
        config: &TrainConfig,
        split: &Split,
    ) -> Result<Parameters<f32>> {
        let k = params.config().style_count;
        let conditioning = config.phase.conditioning();
        let mut trainer = Trainer::new(params, config.clone())?;
        let mut order = BatchOrder::new(split.train.len(), phase_seed(config));
        let mut plateau = Plateau::new(config.patience);
        let mut window = Vec::with_capacity(config.eval_every.max(1));

        while trainer.step() < config.steps {
            let idx = order.next(config.batch_size);
            let picked: Vec<&SamplePair> = idx.iter().map(|&i| &split.train[i]).collect();
            let batch = Batch::new(&picked, conditioning, k)?;
            let loss = trainer.train_step(&batch).map_err(|e| self.diverged(e))?;
            let step = trainer.step();
            self.losses.push(StepLoss {
                phase: config.phase,
                step,
                loss,
            });
            self.log(&format!("{step}\t{}\t{loss:.6}\n", config.phase.number()))?;
            if let Some(cb) = self.opts.progress.as_mut() {
                cb(config.phase, step, loss, trainer.learning_rate());
            }
            window.push(loss);

            if config.eval_every > 0 && step % config.eval_every == 0 && step < config.steps {
                let score = if split.val.is_empty() {
                    window.iter().sum::<f64>() / window.len() as f64
                } else {
                    let table = evaluate(trainer.params(), &split.val, conditioning)?;
                    let rows = table.to_tsv();
                    self.log(&rows)?;
                    table.overall
                };
                window.clear();
                if plateau.observe(score) {
                    let lr = trainer.learning_rate() * config.lr_decay;
                    trainer.set_learning_rate(lr);
                    self.lr_decays += 1;
                }
            }
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.steps {
                self.checkpoint(trainer.params(), config.phase, step)?;
            }
        }
        Ok(trainer.into_params())
    }
}

fn phase_seed(config: &TrainConfig) -> u64 {
    config.seed ^ (u64::from(config.phase.number()) << 56)
}

/// Counts evaluations without improvement; fires after `patience` of them.
struct Plateau {
    best: f64,
    stale: usize,
    patience: usize,
}

impl Plateau {
    fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            stale: 0,
            patience,
        }
    }

    fn observe(&mut self, score: f64) -> bool {
        if score < self.best {
            self.best = score;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.patience > 0 && self.stale >= self.patience {
            self.stale = 0;
            return true;
        }
        false
    }
}

/// Two-phase training: phase 1 with all-zero style vectors, then phase 2
/// with one-hot vectors, resuming the phase-1 parameters with a fresh
/// optimizer. `phase1.steps == 0` skips phase 1.
pub fn fit(
    split: &Split,
    model: &ModelConfig,
    phase1: &TrainConfig,
    phase2: &TrainConfig,
    mut opts: FitOptions<'_>,
) -> Result<(Checkpoint, TrainReport)> {
    if split.train.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    model.validate()?;
    if phase1.phase != Phase::One || phase2.phase != Phase::Two {
        return Err(Error::TrainConfigInvalid("phase configs are out of order".into()));
    }
    if phase1.steps > 0 {
        phase1.validate()?;
    }
    phase2.validate()?;
    let k = model.style_count;
    if let Some(s) = split.train.iter().chain(&split.val).find(|s| s.style_id >= k) {
        return Err(Error::StyleUnknown(format!("sample style {} with K={k}", s.style_id)));
    }
    if !opts.styles.is_empty() && opts.styles.len() != k {
        return Err(Error::StyleDimMismatch {
            expected: k,
            got: opts.styles.len(),
        });
    }
    if opts.styles.is_empty() {
        opts.styles = (0..k).map(|i| format!("style{i}")).collect();
    }
    let size = model.input_size;
    if let Some(s) = split.train.iter().find(|s| s.source.size != size) {
        return Err(Error::ShapeMismatch(format!(
            "model input is {size}x{size}, dataset glyphs are {0}x{0}",
            s.source.size
        )));
    }

    let started = Instant::now();
    let metrics = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("metrics.tsv"))?);
            w.write_all(b"step\tphase\tloss\n")?;
            Some(w)
        }
        None => None,
    };
    let mut run = Run {
        opts: &mut opts,
        metrics,
        last_checkpoint: None,
        losses: Vec::new(),
        lr_decays: 0,
    };

    let mut params = Parameters::init(model)?;
    let first_phase = if phase1.steps > 0 { Phase::One } else { Phase::Two };
    run.checkpoint(&params, first_phase, 0)?;
    if phase1.steps > 0 {
        params = run.phase(params, phase1, split)?;
        run.checkpoint(&params, Phase::One, phase1.steps)?;
    }
    params = run.phase(params, phase2, split)?;
    let hash = run.checkpoint(&params, Phase::Two, phase2.steps)?;

    let (eval_samples, evaluated_on) = if split.val.is_empty() {
        (&split.train, EvalSet::Train)
    } else {
        (&split.val, EvalSet::Validation)
    };
    let eval = evaluate(&params, eval_samples, Conditioning::OneHot)?;
    let rows = eval.to_tsv();
    run.log(&rows)?;
    if let Some(mut m) = run.metrics.take() {
        m.flush()?;
    }
    let report = TrainReport {
        losses: std::mem::take(&mut run.losses),
        eval,
        evaluated_on,
        wall_clock: started.elapsed(),
        final_checkpoint: run.last_checkpoint.clone(),
        checkpoint_hash: hash,
        lr_decays: run.lr_decays,
    };
    let checkpoint = Checkpoint {
        params,
        phase: Phase::Two,
        step: phase2.steps,
        styles: opts.styles.clone(),
        source_font: opts.source_font.clone(),
    };
    Ok((checkpoint, report))
}

/// Convenience for callers holding a checkpoint path.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let mut best: Option<(u8, usize, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(rest) = name.strip_prefix("ckpt_phase") else {
            continue;
        };
        let Some((p, s)) = rest.split_once("_step") else {
            continue;
        };
        if let (Ok(p), Ok(s)) = (p.parse::<u8>(), s.parse::<usize>()) {
            if best.as_ref().is_none_or(|b| (p, s) > (b.0, b.1)) {
                best = Some((p, s, path));
            }
        }
    }
    Ok(best.map(|b| b.2))
}
