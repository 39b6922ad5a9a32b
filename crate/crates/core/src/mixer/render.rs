use std::io::Cursor;

use super::weights::StyleWeights;
use crate::corpus::{rasterize_glyph, GlyphBitmap, GlyphFont, StyleTag};
use crate::error::{Error, Result};
use crate::unet::Parameters;
use crate::Tensor;

/// A character that could not be rendered, and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub codepoint: char,
    pub reason: String,
}

/// Rasterizes `chars` in the source font and runs them through the model
/// with `weights`. Entry `i` is `None` when `chars[i]` could not be
/// rasterized; those characters are also listed in the returned skips.
pub fn render_glyphs(
    params: &Parameters<f32>,
    source: &GlyphFont,
    margin_fraction: f32,
    chars: &[char],
    weights: &StyleWeights,
) -> Result<(Vec<Option<GlyphBitmap>>, Vec<Skipped>)> {
    weights.expect_len(params.config().style_count)?;
    let size = params.config().input_size;
    let mut inputs = Vec::new();
    let mut skipped = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        match rasterize_glyph(source, c, size, margin_fraction) {
            Ok(g) => inputs.push((i, g.quantized())),
            Err(e @ (Error::GlyphMissing(_) | Error::GlyphBlank(_))) => skipped.push(Skipped {
                codepoint: c,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let mut out = vec![None; chars.len()];
    if inputs.is_empty() {
        return Ok((out, skipped));
    }
    let batch = Tensor::stack_images(size, inputs.iter().map(|(_, g)| g.pixels.as_slice()))?;
    let generated = params.forward(&batch, weights)?;
    for (row, (i, _)) in inputs.iter().enumerate() {
        out[*i] = Some(GlyphBitmap {
            codepoint: chars[*i],
            style: StyleTag::Generated,
            size,
            pixels: generated.sample(row).to_vec(),
        });
    }
    Ok((out, skipped))
}

/// 8-bit grayscale image, row-major, 0 = black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    /// Dark ink on white paper: pixel = 255 - round(255 * ink).
    pub fn from_glyph(g: &GlyphBitmap) -> Self {
        Self {
            width: g.size,
            height: g.size,
            pixels: g.pixels.iter().map(|&p| 255 - crate::corpus::quantize(p)).collect(),
        }
    }

    pub fn blit(&mut self, other: &GrayImage, x0: usize, y0: usize) {
        for y in 0..other.height.min(self.height.saturating_sub(y0)) {
            let src = &other.pixels[y * other.width..][..other.width.min(self.width.saturating_sub(x0))];
            self.pixels[(y0 + y) * self.width + x0..][..src.len()].copy_from_slice(src);
        }
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = v;
        }
    }

    /// Lossless PNG encoding; identical images give identical bytes.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        {
            let mut enc = png::Encoder::new(&mut buf, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
            w.write_image_data(&self.pixels).map_err(|e| Error::Image(e.to_string()))?;
        }
        Ok(buf.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Image("image too large".into()))?];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Image(format!(
                "expected 8-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            )));
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            width: info.width as usize,
            height: info.height as usize,
            pixels: buf,
        })
    }
}

/// A glyph as a standalone PNG.
pub fn glyph_png(g: &GlyphBitmap) -> Result<Vec<u8>> {
    GrayImage::from_glyph(g).to_png()
}
