use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::StyleCatalog;
use crate::error::{Error, Result};

/// Conditioning vector appended at the bottleneck. Entries are unconstrained:
/// they need not be non-negative or sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleWeights(Vec<f32>);

impl StyleWeights {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::StyleWeightsNonFinite);
        }
        Ok(Self(values))
    }

    /// The unconditioned vector used for phase-1 training.
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn expect_len(&self, k: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::StyleDimMismatch {
                expected: k,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    /// Compact label such as `[0.500,0.500,0.000]`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.3}")).collect();
        format!("[{}]", parts.join(","))
    }
}

impl fmt::Display for StyleWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn one_hot(style_id: usize, k: usize) -> Result<StyleWeights> {
    if style_id >= k {
        return Err(Error::StyleUnknown(format!("id {style_id} (K={k})")));
    }
    let mut v = vec![0.0; k];
    v[style_id] = 1.0;
    Ok(StyleWeights(v))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StyleRef {
    Id(usize),
    Name(String),
}

/// Weighted style references such as `song=0.5,kai=0.5`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MixSpec {
    pub entries: Vec<(StyleRef, f32)>,
}

impl MixSpec {
    pub fn new(entries: Vec<(StyleRef, f32)>) -> Self {
        Self { entries }
    }

    /// Parses `name=weight,name=weight`. Bare integers are style ids unless
    /// the catalog has a style of that name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::MixSpecInvalid(format!("`{item}` is not name=weight")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::MixSpecInvalid(format!("`{item}` has an empty style name")));
            }
            let weight: f32 = value
                .trim()
                .parse()
                .map_err(|_| Error::MixSpecInvalid(format!("`{value}` is not a number")))?;
            let r = match key.parse::<usize>() {
                Ok(id) => StyleRef::Id(id),
                Err(_) => StyleRef::Name(key.to_string()),
            };
            entries.push((r, weight));
        }
        Ok(Self { entries })
    }
}

/// Places each referenced weight at its style index. No normalization.
pub fn mix(spec: &MixSpec, catalog: &StyleCatalog) -> Result<StyleWeights> {
    let k = catalog.len();
    let mut out = vec![0.0f32; k];
    let mut seen = HashSet::new();
    for (r, w) in &spec.entries {
        if !w.is_finite() {
            return Err(Error::MixSpecInvalid(format!("weight {w} is not finite")));
        }
        let id = match r {
            StyleRef::Name(name) => catalog.id_of(name).ok_or_else(|| Error::StyleUnknown(name.clone()))?,
            StyleRef::Id(id) => match catalog.id_of(&id.to_string()) {
                Some(named) => named,
                None if *id < k => *id,
                None => return Err(Error::StyleUnknown(format!("id {id} (K={k})"))),
            },
        };
        if !seen.insert(id) {
            return Err(Error::MixSpecInvalid(format!(
                "style `{}` referenced twice",
                catalog.get(id).map(|e| e.name.as_str()).unwrap_or("?")
            )));
        }
        out[id] = *w;
    }
    Ok(StyleWeights(out))
}

/// `steps` evenly spaced vectors from `a` to `b`, endpoints exactly `a`, `b`.
pub fn interpolation_path(a: &StyleWeights, b: &StyleWeights, steps: usize) -> Result<Vec<StyleWeights>> {
    b.expect_len(a.len())?;
    if steps < 2 {
        return Err(Error::MixSpecInvalid(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let last = (steps - 1) as f64;
    let mut path = Vec::with_capacity(steps);
    path.push(a.clone());
    for t in 1..steps - 1 {
        let u = t as f64 / last;
        let v = a
            .0
            .iter()
            .zip(&b.0)
            .map(|(&x, &y)| (x as f64 + (y as f64 - x as f64) * u) as f32)
            .collect();
        path.push(StyleWeights(v));
    }
    path.push(b.clone());
    Ok(path)
}
