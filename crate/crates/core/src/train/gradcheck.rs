use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::loss::l1_loss;
use crate::error::{Error, Result};
use crate::mixer::StyleWeights;
use crate::unet::{Gradients, ModelConfig, Parameters};
use crate::Tensor;

pub const FD_STEP: f64 = 1e-4;
const CHECK_BATCH: usize = 2;

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_relative_error: f64,
    /// Parameter array and element index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Worst relative error per parameter array, in parameter order.
    pub per_array: Vec<(String, f64)>,
    pub checked: usize,
    /// Coordinates where `theta +- h` crossed a rectifier or L1 kink.
    pub skipped_kinks: usize,
    /// Loss recomputed at `h = 0` equals the traced loss bit-for-bit.
    pub zero_step_reproduces: bool,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_relative_error < threshold && self.zero_step_reproduces
    }
}

/// Compares analytic gradients of the L1 training loss with central finite
/// differences in f64 over every parameter, for `trials` random
/// (parameters, input, target, style vector) draws.
pub fn gradient_check(config: &ModelConfig, trials: usize, seed: u64) -> Result<GradCheckReport> {
    gradient_check_with(config, trials, seed, |_| {})
}

/// As [`gradient_check`], with `corrupt` applied to the analytic gradients
/// before comparison.
pub fn gradient_check_with(
    config: &ModelConfig,
    trials: usize,
    seed: u64,
    corrupt: impl Fn(&mut Gradients<f64>),
) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::TrainConfigInvalid("gradient check needs at least one trial".into()));
    }
    let base = Parameters::init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("valid std");
    let size = config.input_size;
    let k = config.style_count;

    let mut per_array: Vec<(String, f64)> = base.tensors().iter().map(|t| (t.name.clone(), 0.0)).collect();
    let mut report = GradCheckReport {
        trials,
        max_relative_error: 0.0,
        worst: None,
        per_array: Vec::new(),
        checked: 0,
        skipped_kinks: 0,
        zero_step_reproduces: true,
    };

    for _ in 0..trials {
        // Perturb everything so zero-initialized biases and unit scales are exercised.
        let mut params: Parameters<f64> = base.cast();
        for t in params.tensors_mut() {
            for v in &mut t.data {
                *v += noise.sample(&mut rng);
            }
        }
        let n = CHECK_BATCH * size * size;
        let x = Tensor::new([CHECK_BATCH, 1, size, size], (0..n).map(|_| rng.random::<f64>()).collect())?;
        let target: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let weights: Vec<StyleWeights> = (0..CHECK_BATCH)
            .map(|_| StyleWeights::new((0..k).map(|_| rng.random_range(-0.5f32..1.5)).collect()))
            .collect::<Result<_>>()?;

        let (out, trace) = params.forward_traced(&x, &weights)?;
        let (loss, d_out) = l1_loss(out.data(), &target);
        let mut grads = params.backward(&trace, &Tensor::new(out.shape(), d_out)?)?;
        corrupt(&mut grads);

        let probe = |p: &Parameters<f64>| -> Result<(f64, Vec<bool>)> {
            let (o, tr) = p.forward_traced(&x, &weights)?;
            let (l, _) = l1_loss(o.data(), &target);
            let mut pattern = p.kink_pattern(&tr);
            pattern.extend(o.data().iter().zip(&target).map(|(a, b)| a > b));
            Ok((l, pattern))
        };
        let (again, _) = probe(&params)?;
        if again.to_bits() != loss.to_bits() {
            report.zero_step_reproduces = false;
        }

        for a in 0..params.tensors().len() {
            for i in 0..params.tensors()[a].data.len() {
                let orig = params.tensors()[a].data[i];
                params.tensors_mut()[a].data[i] = orig + FD_STEP;
                let (plus, pat_plus) = probe(&params)?;
                params.tensors_mut()[a].data[i] = orig - FD_STEP;
                let (minus, pat_minus) = probe(&params)?;
                params.tensors_mut()[a].data[i] = orig;
                if pat_plus != pat_minus {
                    report.skipped_kinks += 1;
                    continue;
                }
                let fd = (plus - minus) / (2.0 * FD_STEP);
                let rel = relative_error(grads[a][i], fd);
                report.checked += 1;
                if rel > per_array[a].1 {
                    per_array[a].1 = rel;
                }
                if report.worst.is_none() || rel > report.max_relative_error {
                    report.max_relative_error = rel;
                    report.worst = Some((params.tensors()[a].name.clone(), i));
                }
            }
        }
    }
    report.per_array = per_array;
    Ok(report)
}

/// Negates the gradient of the named array; the mutation fixture.
pub fn negate_array(params: &Parameters<f32>, name: &str) -> impl Fn(&mut Gradients<f64>) {
    let index = params.tensors().iter().position(|t| t.name == name);
    move |g: &mut Gradients<f64>| {
        if let Some(i) = index {
            g[i].iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// The configuration the gradient check runs on by default.
pub fn tiny_config() -> ModelConfig {
    ModelConfig::new(8, 2, 4, 2).with_seed(1)
}
