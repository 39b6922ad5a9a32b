use std::path::{Path, PathBuf};

use glyphforge::corpus::{GlyphBitmap, GlyphFont, StyleCatalog};
use glyphforge::mixer::{render_glyphs, Skipped, StyleWeights};
use glyphforge::unet::Checkpoint;
use glyphforge::{Error, Result};

/// Everything a request needs, loaded once at startup and never mutated.
#[derive(Debug)]
pub struct LoadedModel {
    pub checkpoint: Checkpoint,
    /// Content hash stored in the checkpoint file.
    pub hash: String,
    pub catalog: StyleCatalog,
    pub font: GlyphFont,
    pub margin_fraction: f32,
}

impl LoadedModel {
    /// Loads the checkpoint, its catalog and the source font.
    ///
    /// The catalog defaults to the style names stored in the checkpoint; the
    /// source font defaults to the one recorded at training time, which must
    /// still hash to the recorded digest.
    pub fn load(checkpoint: &Path, catalog: Option<&Path>, source_font: Option<&Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(checkpoint)?;
        let hash = Checkpoint::stored_hash(checkpoint)?;
        let k = ckpt.config().style_count;
        let catalog = match catalog {
            Some(path) => StyleCatalog::load(path)?,
            None => StyleCatalog::from_names(ckpt.styles.iter().map(|n| (n.clone(), String::new())))?,
        };
        if catalog.len() != k {
            return Err(Error::StyleDimMismatch {
                expected: k,
                got: catalog.len(),
            });
        }
        let record = ckpt.source_font.clone();
        let font = match (source_font, &record) {
            (Some(path), _) => GlyphFont::load(path)?,
            (None, Some(rec)) => {
                let font = GlyphFont::load(&PathBuf::from(&rec.path))?;
                if font.sha256() != rec.sha256 {
                    return Err(Error::FontInvalid(format!(
                        "{} does not match the font the checkpoint was trained on (sha256 {})",
                        rec.path, rec.sha256
                    )));
                }
                font
            }
            (None, None) => {
                return Err(Error::FontInvalid(
                    "checkpoint records no source font; pass one explicitly".into(),
                ))
            }
        };
        let margin_fraction = record
            .map_or(glyphforge::corpus::DEFAULT_MARGIN, |r| r.margin_fraction);
        Ok(Self {
            checkpoint: ckpt,
            hash,
            catalog,
            font,
            margin_fraction,
        })
    }

    pub fn style_count(&self) -> usize {
        self.checkpoint.config().style_count
    }

    pub fn input_size(&self) -> usize {
        self.checkpoint.config().input_size
    }

    pub fn render(&self, chars: &[char], weights: &StyleWeights) -> Result<(Vec<Option<GlyphBitmap>>, Vec<Skipped>)> {
        render_glyphs(&self.checkpoint.params, &self.font, self.margin_fraction, chars, weights)
    }
}
