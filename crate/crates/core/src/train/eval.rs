use std::collections::BTreeMap;

use crate::corpus::SamplePair;
use crate::error::{Error, Result};
use crate::mixer::{one_hot, StyleWeights};
use crate::unet::{Checkpoint, Parameters};
use crate::Tensor;

/// Anything that maps a batch of source glyphs plus style vectors to glyphs.
pub trait GlyphModel {
    fn input_size(&self) -> usize;
    fn style_count(&self) -> usize;
    fn predict(&self, sources: &Tensor, weights: &[StyleWeights]) -> Result<Tensor>;
}

impl GlyphModel for Parameters<f32> {
    fn input_size(&self) -> usize {
        self.config().input_size
    }

    fn style_count(&self) -> usize {
        self.config().style_count
    }

    fn predict(&self, sources: &Tensor, weights: &[StyleWeights]) -> Result<Tensor> {
        self.forward_each(sources, weights)
    }
}

impl GlyphModel for Checkpoint {
    fn input_size(&self) -> usize {
        self.params.input_size()
    }

    fn style_count(&self) -> usize {
        self.params.style_count()
    }

    fn predict(&self, sources: &Tensor, weights: &[StyleWeights]) -> Result<Tensor> {
        self.params.predict(sources, weights)
    }
}

/// Style vector a sample is evaluated (or trained) with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// All-zero vectors (phase 1).
    Zero,
    /// `one_hot(sample.style_id)` (phase 2 and inference).
    OneHot,
}

impl Conditioning {
    pub fn weights(self, style_id: usize, k: usize) -> Result<StyleWeights> {
        match self {
            Conditioning::Zero => Ok(StyleWeights::zeros(k)),
            Conditioning::OneHot => one_hot(style_id, k),
        }
    }
}

/// Mean absolute pixel error per style plus the mean over all samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub per_style: BTreeMap<usize, f64>,
    pub overall: f64,
    pub samples: usize,
}

impl EvalTable {
    /// `eval<TAB>style_id<TAB>mae` rows, then one `eval<TAB>all<TAB>mae` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, mae) in &self.per_style {
            out.push_str(&format!("eval\t{id}\t{mae:.6}\n"));
        }
        out.push_str(&format!("eval\tall\t{:.6}\n", self.overall));
        out
    }
}

const EVAL_BATCH: usize = 32;

/// Per-style MAE of `model` on `samples`, in evaluation mode.
pub fn evaluate(model: &dyn GlyphModel, samples: &[SamplePair], conditioning: Conditioning) -> Result<EvalTable> {
    if samples.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let size = model.input_size();
    if let Some(s) = samples.iter().find(|s| s.source.size != size || s.target.size != size) {
        return Err(Error::ShapeMismatch(format!(
            "model expects {size}x{size} glyphs, dataset has {}x{}",
            s.source.size, s.source.size
        )));
    }
    let k = model.style_count();
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_BATCH) {
        let sources = Tensor::stack_images(size, chunk.iter().map(|s| s.source.pixels.as_slice()))?;
        let weights = chunk
            .iter()
            .map(|s| conditioning.weights(s.style_id, k))
            .collect::<Result<Vec<_>>>()?;
        let out = model.predict(&sources, &weights)?;
        for (i, s) in chunk.iter().enumerate() {
            let mae = mean_abs_diff(out.sample(i), &s.target.pixels);
            let e = sums.entry(s.style_id).or_default();
            e.0 += mae;
            e.1 += 1;
            total += mae;
        }
    }
    Ok(EvalTable {
        per_style: sums.into_iter().map(|(id, (sum, n))| (id, sum / n as f64)).collect(),
        overall: total / samples.len() as f64,
        samples: samples.len(),
    })
}

pub fn mean_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum();
    sum / a.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GlyphBitmap, StyleTag};

    /// Returns each sample's target, looked up by source pixels.
    struct Oracle(Vec<SamplePair>);

    impl GlyphModel for Oracle {
        fn input_size(&self) -> usize {
            4
        }
        fn style_count(&self) -> usize {
            2
        }
        fn predict(&self, sources: &Tensor, weights: &[StyleWeights]) -> Result<Tensor> {
            let mut data = Vec::new();
            for (i, w) in weights.iter().enumerate() {
                let id = w.as_slice().iter().position(|&v| v == 1.0).unwrap();
                let s = self
                    .0
                    .iter()
                    .find(|s| s.style_id == id && s.source.pixels == sources.sample(i))
                    .unwrap();
                data.extend_from_slice(&s.target.pixels);
            }
            Tensor::new([weights.len(), 1, 4, 4], data)
        }
    }

    struct Constant(f32);

    impl GlyphModel for Constant {
        fn input_size(&self) -> usize {
            4
        }
        fn style_count(&self) -> usize {
            2
        }
        fn predict(&self, sources: &Tensor, _: &[StyleWeights]) -> Result<Tensor> {
            let mut out = Tensor::zeros(sources.shape());
            out.data_mut().fill(self.0);
            Ok(out)
        }
    }

    fn bitmap(c: char, style: StyleTag, f: impl Fn(usize) -> f32) -> GlyphBitmap {
        GlyphBitmap {
            codepoint: c,
            style,
            size: 4,
            pixels: (0..16).map(f).collect(),
        }
    }

    fn samples() -> Vec<SamplePair> {
        let mut out = Vec::new();
        for (ci, c) in ['一', '二', '三'].into_iter().enumerate() {
            for style in 0..2 {
                out.push(SamplePair {
                    source: bitmap(c, StyleTag::Source, |i| ((i + ci) % 3) as f32 / 2.0),
                    target: bitmap(c, StyleTag::Target(style), |i| ((i * (style + 2) + ci) % 5 == 0) as u8 as f32),
                    style_id: style,
                });
            }
        }
        out
    }

    #[test]
    fn perfect_model_scores_zero() {
        let s = samples();
        let t = evaluate(&Oracle(s.clone()), &s, Conditioning::OneHot).unwrap();
        assert_eq!(t.overall, 0.0);
        assert!(t.per_style.values().all(|&v| v == 0.0));
        assert_eq!(t.per_style.len(), 2);
    }

    #[test]
    fn constant_half_matches_direct_recomputation() {
        let s = samples();
        let t = evaluate(&Constant(0.5), &s, Conditioning::OneHot).unwrap();
        for style in 0..2 {
            let rows: Vec<_> = s.iter().filter(|p| p.style_id == style).collect();
            let direct = rows
                .iter()
                .map(|p| p.target.pixels.iter().map(|&v| (0.5 - v as f64).abs()).sum::<f64>() / 16.0)
                .sum::<f64>()
                / rows.len() as f64;
            assert!((t.per_style[&style] - direct).abs() < 1e-12);
        }
        // Binary targets: every pixel is off by exactly one half.
        assert!((t.overall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_split_and_size_mismatch_are_errors() {
        assert!(matches!(evaluate(&Constant(0.5), &[], Conditioning::Zero), Err(Error::DatasetEmpty)));
        let mut s = samples();
        s[0].source.size = 8;
        assert!(matches!(
            evaluate(&Constant(0.5), &s, Conditioning::Zero),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
