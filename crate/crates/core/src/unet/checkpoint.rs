use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Architecture, ModelConfig};
use super::params::{ParamTensor, Parameters};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GLYPHFRG";
const HASH_LEN: usize = 32;

/// Training phase a checkpoint was written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Phase {
    /// Unconditioned pretraining (all-zero style vectors).
    One,
    /// Retraining with one-hot style vectors.
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p.number()
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Phase::One),
            2 => Ok(Phase::Two),
            other => Err(format!("unknown phase {other}")),
        }
    }
}

/// The font a model reads its inputs from, and how they were rasterized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FontRecord {
    pub path: String,
    pub sha256: String,
    pub margin_fraction: f32,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    architecture: Architecture,
    phase: Phase,
    step: usize,
    styles: Vec<String>,
    source_font: Option<FontRecord>,
    params: Vec<ParamHeader>,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

/// Model parameters plus the training state needed to interpret them.
///
/// On disk: `GLYPHFRG`, a little-endian `u32` version, a `u64`-prefixed JSON
/// header, one `u64`-prefixed little-endian `f32` block per parameter array
/// in header order, and a trailing SHA-256 of all preceding bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters<f32>,
    pub phase: Phase,
    pub step: usize,
    /// Style names in id order; length equals `config.style_count`.
    pub styles: Vec<String>,
    /// Source font the model was trained to read, when known.
    pub source_font: Option<FontRecord>,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.config().clone(),
            architecture: Architecture::current(),
            phase: self.phase,
            step: self.step,
            styles: self.styles.clone(),
            source_font: self.source_font.clone(),
            params: self
                .params
                .tensors()
                .iter()
                .map(|t| ParamHeader {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(64 + header.len() + 4 * self.params.count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            out.extend_from_slice(&((t.data.len() * 4) as u64).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::CheckpointFormat(msg.to_string());
        if bytes.len() < MAGIC.len() + 12 + HASH_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - HASH_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(bad("content hash does not match"));
        }
        let mut cur = Reader { buf: body, pos: 8 };
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!("unsupported format version {version}")));
        }
        let header_len = cur.u64()? as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| Error::CheckpointFormat(format!("header: {e}")))?;
        if header.architecture != Architecture::current() {
            return Err(bad("checkpoint was written for a different architecture"));
        }
        let specs = header.config.parameter_specs();
        if specs.len() != header.params.len() {
            return Err(Error::CheckpointFormat(format!(
                "config implies {} parameter arrays, header declares {}",
                specs.len(),
                header.params.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, declared) in specs.iter().zip(&header.params) {
            if spec.name != declared.name || spec.shape != declared.shape {
                return Err(Error::CheckpointFormat(format!(
                    "parameter `{}` {:?} does not match config (`{}` {:?})",
                    declared.name, declared.shape, spec.name, spec.shape
                )));
            }
            let len = cur.u64()? as usize;
            if len != spec.len() * 4 {
                return Err(Error::CheckpointFormat(format!(
                    "parameter `{}` has {len} bytes, expected {}",
                    spec.name,
                    spec.len() * 4
                )));
            }
            let data = cur
                .take(len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(ParamTensor {
                name: declared.name.clone(),
                shape: declared.shape.clone(),
                data,
            });
        }
        if cur.pos != body.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        if header.styles.len() != header.config.style_count {
            return Err(Error::CheckpointFormat(format!(
                "{} style names for style_count {}",
                header.styles.len(),
                header.config.style_count
            )));
        }
        let params = Parameters::from_tensors(&header.config, tensors)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
        Ok(Self {
            params,
            phase: header.phase,
            step: header.step,
            styles: header.styles,
            source_font: header.source_font,
        })
    }

    /// Hex SHA-256 stored in the file trailer.
    pub fn content_hash(&self) -> String {
        let bytes = self.to_bytes();
        hex::encode(&bytes[bytes.len() - HASH_LEN..])
    }

    /// Writes the file and returns its content hash.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(hex::encode(&bytes[bytes.len() - HASH_LEN..]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Reads only the stored hash without parsing the file.
    pub fn stored_hash(path: &Path) -> Result<String> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < HASH_LEN {
            return Err(Error::CheckpointFormat("file too short".into()));
        }
        Ok(hex::encode(&bytes[bytes.len() - HASH_LEN..]))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CheckpointFormat("unexpected end of file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
