use std::path::{Path, PathBuf};

use ab_glyph::{Font, FontVec, OutlineCurve};
use ab_glyph_rasterizer::{point, Rasterizer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f32 = 0.1;

/// Which side of a sample pair a bitmap belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StyleTag {
    Source,
    Target(usize),
    /// Model output for an arbitrary style vector.
    Generated,
}

/// One rasterized character: `size x size` ink coverage, 1.0 = full ink.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphBitmap {
    pub codepoint: char,
    pub style: StyleTag,
    pub size: usize,
    pub pixels: Vec<f32>,
}

impl GlyphBitmap {
    /// Rounds every pixel to the nearest multiple of 1/255.
    pub fn quantized(mut self) -> Self {
        for p in &mut self.pixels {
            *p = dequantize(quantize(*p));
        }
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }
}

pub fn quantize(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(q: u8) -> f32 {
    q as f32 / 255.0
}

/// A parsed outline font together with the hash of its file contents.
pub struct GlyphFont {
    path: PathBuf,
    sha256: String,
    font: FontVec,
}

impl std::fmt::Debug for GlyphFont {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GlyphFont")
            .field("path", &self.path)
            .field("sha256", &self.sha256)
            .finish()
    }
}

impl GlyphFont {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FontNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(path.to_path_buf(), bytes)
    }

    pub fn from_bytes(path: PathBuf, bytes: Vec<u8>) -> Result<Self> {
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let font = FontVec::try_from_vec(bytes)
            .map_err(|e| Error::FontInvalid(format!("{}: {e}", path.display())))?;
        Ok(Self { path, sha256, font })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn has_glyph(&self, c: char) -> bool {
        self.font.glyph_id(c).0 != 0
    }
}

const COVERAGE_FLOOR: f32 = 1.0 / 1024.0;

/// Renders `c` anti-aliased into a `size x size` bitmap, uniformly scaled so
/// its outline bounding box fits the central `(1 - 2*margin) * size` square
/// and centered on that box.

pub fn rasterize_glyph(font: &GlyphFont, c: char, size: usize, margin_fraction: f32) -> Result<GlyphBitmap> {
    if size < 8 || !size.is_power_of_two() {
        return Err(Error::SizeInvalid(size));
    }
    if !(0.0..0.5).contains(&margin_fraction) {
        return Err(Error::DatasetFormat(format!(
            "margin_fraction {margin_fraction} must lie in [0, 0.5)"
        )));
    }
    let id = font.font.glyph_id(c);
    if id.0 == 0 {
        return Err(Error::GlyphMissing(c as u32));
    }
    let outline = font.font.outline(id).ok_or(Error::GlyphBlank(c as u32))?;
    let Some(b) = ink_bounds(&outline.curves) else {
        return Err(Error::GlyphBlank(c as u32));
    };
    let (w, h) = (b.max_x - b.min_x, b.max_y - b.min_y);
    if !(w > 0.0 || h > 0.0) {
        return Err(Error::GlyphBlank(c as u32));
    }
    let box_side = (1.0 - 2.0 * margin_fraction) * size as f32;
    let scale = box_side / w.max(h);
    let (cx, cy) = ((b.min_x + b.max_x) / 2.0, (b.min_y + b.max_y) / 2.0);
    let half = size as f32 / 2.0;
    // Font units are y-up; bitmap rows go down.
    let map = |p: ab_glyph::Point| point((p.x - cx) * scale + half, half - (p.y - cy) * scale);

    let mut raster = Rasterizer::new(size, size);
    for curve in &outline.curves {
        match *curve {
            OutlineCurve::Line(p0, p1) => raster.draw_line(map(p0), map(p1)),
            OutlineCurve::Quad(p0, p1, p2) => raster.draw_quad(map(p0), map(p1), map(p2)),
            OutlineCurve::Cubic(p0, p1, p2, p3) => {
                raster.draw_cubic(map(p0), map(p1), map(p2), map(p3))
            }
        }
    }
    let mut pixels = vec![0.0f32; size * size];
    // Accumulation leaves float residue along rows; drop it.
    raster.for_each_pixel(|i, coverage| {
        let a = coverage.abs().min(1.0);
        pixels[i] = if a < COVERAGE_FLOOR { 0.0 } else { a };
    });
    if pixels.iter().all(|&p| p == 0.0) {
        return Err(Error::GlyphBlank(c as u32));
    }
    Ok(GlyphBitmap {
        codepoint: c,
        style: StyleTag::Source,
        size,
        pixels,
    })
}

#[derive(Clone, Copy, Debug)]
struct Bounds {
    min_x: f32,
    min_y: f32,
    max_x: f32,
    max_y: f32,
}

impl Bounds {
    fn include(&mut self, x: f32, y: f32) {
        self.min_x = self.min_x.min(x);
        self.max_x = self.max_x.max(x);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }
}

/// Tight bounding box of the outline itself (curve extrema, not the control
/// polygon or the font's stored box).
fn ink_bounds(curves: &[OutlineCurve]) -> Option<Bounds> {
    let mut b: Option<Bounds> = None;
    let mut add = |x: f32, y: f32| match b.as_mut() {
        Some(b) => b.include(x, y),
        None => {
            b = Some(Bounds {
                min_x: x,
                min_y: y,
                max_x: x,
                max_y: y,
            })
        }
    };
    for curve in curves {
        match *curve {
            OutlineCurve::Line(p0, p1) => {
                add(p0.x, p0.y);
                add(p1.x, p1.y);
            }
            OutlineCurve::Quad(p0, p1, p2) => {
                add(p0.x, p0.y);
                add(p2.x, p2.y);
                let at = |t: f32, a: f32, c: f32, d: f32| {
                    let u = 1.0 - t;
                    u * u * a + 2.0 * u * t * c + t * t * d
                };
                for t in [quad_extremum(p0.x, p1.x, p2.x), quad_extremum(p0.y, p1.y, p2.y)]
                    .into_iter()
                    .flatten()
                {
                    add(at(t, p0.x, p1.x, p2.x), at(t, p0.y, p1.y, p2.y));
                }
            }
            OutlineCurve::Cubic(p0, p1, p2, p3) => {
                add(p0.x, p0.y);
                add(p3.x, p3.y);
                let at = |t: f32, a: f32, c: f32, d: f32, e: f32| {
                    let u = 1.0 - t;
                    u * u * u * a + 3.0 * u * u * t * c + 3.0 * u * t * t * d + t * t * t * e
                };
                let ts = cubic_extrema(p0.x, p1.x, p2.x, p3.x)
                    .into_iter()
                    .chain(cubic_extrema(p0.y, p1.y, p2.y, p3.y));
                for t in ts.flatten() {
                    add(at(t, p0.x, p1.x, p2.x, p3.x), at(t, p0.y, p1.y, p2.y, p3.y));
                }
            }
        }
    }
    b
}

fn quad_extremum(a: f32, b: f32, c: f32) -> Option<f32> {
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return None;
    }
    let t = (a - b) / denom;
    (t > 0.0 && t < 1.0).then_some(t)
}

fn cubic_extrema(a: f32, b: f32, c: f32, d: f32) -> [Option<f32>; 2] {
    // Derivative / 3: qa t^2 + qb t + qc.
    let qa = -a + 3.0 * b - 3.0 * c + d;
    let qb = 2.0 * (a - 2.0 * b + c);
    let qc = b - a;
    let inside = |t: f32| (t > 0.0 && t < 1.0).then_some(t);
    if qa.abs() < 1e-12 {
        if qb == 0.0 {
            return [None, None];
        }
        return [inside(-qc / qb), None];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return [None, None];
    }
    let r = disc.sqrt();
    [inside((-qb + r) / (2.0 * qa)), inside((-qb - r) / (2.0 * qa))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> GlyphFont {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/fonts").join(name);
        GlyphFont::load(&path).unwrap()
    }

    #[test]
    fn renders_in_unit_range_with_ink() {
        let font = fixture("hei.ttf");
        let g = rasterize_glyph(&font, '永', 64, 0.1).unwrap();
        assert_eq!(g.pixels.len(), 64 * 64);
        assert!(g.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(g.pixels.iter().any(|&p| p > 0.5));
    }

    #[test]
    fn rendering_is_bit_identical_across_calls() {
        let font = fixture("song.ttf");
        let a = rasterize_glyph(&font, '和', 64, 0.1).unwrap();
        let b = rasterize_glyph(&font, '和', 64, 0.1).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn ink_stays_inside_margin_and_is_centered() {
        let font = fixture("kai.ttf");
        let size = 64;
        let g = rasterize_glyph(&font, '国', size, 0.1).unwrap();
        let lo = (0.1 * size as f32).floor() as usize - 1;
        let hi = size - lo;
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (size, 0, size, 0);
        for y in 0..size {
            for x in 0..size {
                if g.pixels[y * size + x] > 0.0 {
                    min_x = min_x.min(x);
                    max_x = max_x.max(x);
                    min_y = min_y.min(y);
                    max_y = max_y.max(y);
                }
            }
        }
        assert!(
            min_x >= lo && min_y >= lo && max_x < hi && max_y < hi,
            "ink box x {min_x}..{max_x} y {min_y}..{max_y}"
        );
        // Centered to within a pixel on the longer axis.
        let long_centre = if max_x - min_x >= max_y - min_y {
            (min_x + max_x) as f32 / 2.0
        } else {
            (min_y + max_y) as f32 / 2.0
        };
        assert!((long_centre - 31.5).abs() <= 1.0, "{long_centre}");
    }

    #[test]
    fn missing_and_blank_glyphs_are_errors() {
        let font = fixture("gothic.ttf");
        assert!(matches!(rasterize_glyph(&font, '们', 64, 0.1), Err(Error::GlyphMissing(0x4EEC))));
        let hei = fixture("hei.ttf");
        assert!(matches!(rasterize_glyph(&hei, 'Q', 64, 0.1), Err(Error::GlyphMissing(_))));
        assert!(matches!(rasterize_glyph(&hei, '一', 100, 0.1), Err(Error::SizeInvalid(100))));
        assert!(matches!(rasterize_glyph(&hei, '\u{3000}', 64, 0.1), Err(Error::GlyphBlank(0x3000))));
    }

    #[test]
    fn missing_font_file_is_reported() {
        assert!(matches!(
            GlyphFont::load(Path::new("/no/such/font.ttf")),
            Err(Error::FontNotFound(_))
        ));
    }

    #[test]
    fn quantization_round_trips() {
        for q in 0..=255u8 {
            assert_eq!(quantize(dequantize(q)), q);
        }
    }
}
