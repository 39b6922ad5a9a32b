//! Paired source/target glyph datasets and their on-disk container.
//!
//! Container layout: a UTF-8 header of `key=value` lines ending with an empty
//! line, followed by every sample's source and target bitmaps as raw 8-bit
//! coverage (`size*size` bytes each) in `(codepoint, style_id)` order. The
//! `content_hash` line is the SHA-256 of every other header line plus the
//! binary payload.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::catalog::StyleCatalog;
use super::raster::{dequantize, rasterize_glyph, GlyphBitmap, GlyphFont, StyleTag};
use crate::error::{Error, Result};

const MAGIC_LINE: &str = "GLYPHFORGE-DATASET 1";

/// A named font file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FontSource {
    pub name: String,
    pub path: PathBuf,
}

impl FontSource {
    pub fn new(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            path: path.into(),
        }
    }

    /// Parses `name=path`, or a bare path named after its file stem.
    pub fn parse(text: &str) -> Self {
        match text.split_once('=') {
            Some((name, path)) if !name.is_empty() => Self::new(name, path),
            _ => {
                let path = PathBuf::from(text);
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| text.to_string());
                Self { name, path }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FontFingerprint {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub source_font: FontFingerprint,
    pub target_fonts: Vec<FontFingerprint>,
    pub charset: Vec<char>,
    pub size: usize,
    pub margin_fraction: f32,
    pub split_seed: u64,
    pub content_hash: String,
}

impl DatasetManifest {
    pub fn catalog(&self) -> StyleCatalog {
        StyleCatalog::from_names(self.target_fonts.iter().map(|f| (f.name.clone(), f.path.clone())))
            .expect("manifest target names are unique")
    }
}

/// Source and target renderings of one character; `style_id` is the target's.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub source: GlyphBitmap,
    pub target: GlyphBitmap,
    pub style_id: usize,
}

impl SamplePair {
    pub fn codepoint(&self) -> char {
        self.source.codepoint
    }
}

/// A `(codepoint, style)` combination left out of the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipEntry {
    pub codepoint: char,
    pub style_id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<SamplePair>,
    pub skips: Vec<SkipEntry>,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub size: usize,
    pub margin_fraction: f32,
    pub split_seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            size: 64,
            margin_fraction: super::raster::DEFAULT_MARGIN,
            split_seed: 0,
        }
    }
}

fn fingerprint(name: &str, font: &GlyphFont) -> FontFingerprint {
    FontFingerprint {
        name: name.to_string(),
        path: font.path().to_string_lossy().into_owned(),
        sha256: font.sha256().to_string(),
    }
}

/// Rasterizes every `(codepoint, target)` pair whose source and target glyphs
/// both render; everything else lands in the skip report.
pub fn build_dataset(
    source: &FontSource,
    targets: &[FontSource],
    charset: &[char],
    options: &BuildOptions,
) -> Result<Dataset> {
    if targets.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    if charset.is_empty() {
        return Err(Error::CharsetEmpty);
    }
    if options.size < 8 || !options.size.is_power_of_two() {
        return Err(Error::SizeInvalid(options.size));
    }
    let mut charset = charset.to_vec();
    charset.sort_unstable();
    charset.dedup();
    // Validates names before any rendering work.
    StyleCatalog::from_names(targets.iter().map(|t| (t.name.clone(), String::new())))?;

    let source_font = GlyphFont::load(&source.path)?;
    let target_fonts = targets
        .iter()
        .map(|t| GlyphFont::load(&t.path))
        .collect::<Result<Vec<_>>>()?;

    let render = |font: &GlyphFont, c: char, style: StyleTag| {
        rasterize_glyph(font, c, options.size, options.margin_fraction).map(|mut g| {
            g.style = style;
            g.quantized()
        })
    };
    let sources: Vec<Result<GlyphBitmap>> = charset
        .par_iter()
        .map(|&c| render(&source_font, c, StyleTag::Source))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..charset.len())
        .flat_map(|ci| (0..targets.len()).map(move |si| (ci, si)))
        .collect();
    let rendered: Vec<Result<GlyphBitmap>> = jobs
        .par_iter()
        .map(|&(ci, si)| render(&target_fonts[si], charset[ci], StyleTag::Target(si)))
        .collect();

    let mut samples = Vec::new();
    let mut skips = Vec::new();
    for (&(ci, si), target) in jobs.iter().zip(rendered) {
        let c = charset[ci];
        match (&sources[ci], target) {
            (Ok(src), Ok(tgt)) => samples.push(SamplePair {
                source: src.clone(),
                target: tgt,
                style_id: si,
            }),
            (Err(e), _) => skips.push(SkipEntry {
                codepoint: c,
                style_id: si,
                reason: format!("source: {e}"),
            }),
            (Ok(_), Err(e)) => skips.push(SkipEntry {
                codepoint: c,
                style_id: si,
                reason: e.to_string(),
            }),
        }
    }
    if samples.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let mut manifest = DatasetManifest {
        source_font: fingerprint(&source.name, &source_font),
        target_fonts: targets
            .iter()
            .zip(&target_fonts)
            .map(|(t, f)| fingerprint(&t.name, f))
            .collect(),
        charset,
        size: options.size,
        margin_fraction: options.margin_fraction,
        split_seed: options.split_seed,
        content_hash: String::new(),
    };
    manifest.content_hash = content_hash(&manifest, &samples);
    Ok(Dataset {
        manifest,
        samples,
        skips,
    })
}

fn header_lines(m: &DatasetManifest, samples: &[SamplePair]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "{MAGIC_LINE}");
    let _ = writeln!(h, "size={}", m.size);
    let _ = writeln!(h, "margin_fraction={}", m.margin_fraction);
    let _ = writeln!(h, "split_seed={}", m.split_seed);
    let f = &m.source_font;
    let _ = writeln!(h, "source_font={}\t{}\t{}", f.name, f.sha256, f.path);
    for (i, f) in m.target_fonts.iter().enumerate() {
        let _ = writeln!(h, "target_font={i}\t{}\t{}\t{}", f.name, f.sha256, f.path);
    }
    let cps: Vec<String> = m.charset.iter().map(|&c| format!("U+{:04X}", c as u32)).collect();
    let _ = writeln!(h, "charset={}", cps.join(" "));
    let _ = writeln!(h, "samples={}", samples.len());
    for s in samples {
        let _ = writeln!(h, "sample=U+{:04X}\t{}", s.codepoint() as u32, s.style_id);
    }
    h
}

fn payload(samples: &[SamplePair]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        out.extend(s.source.to_bytes());
        out.extend(s.target.to_bytes());
    }
    out
}

fn content_hash(m: &DatasetManifest, samples: &[SamplePair]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(header_lines(m, samples).as_bytes());
    hasher.update(payload(samples));
    hex::encode(hasher.finalize())
}

impl Dataset {
    pub fn catalog(&self) -> StyleCatalog {
        self.manifest.catalog()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header_lines(&self.manifest, &self.samples).into_bytes();
        out.extend_from_slice(format!("content_hash={}\n\n", self.manifest.content_hash).as_bytes());
        out.extend(payload(&self.samples));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::DatasetFormat(format!("{} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::DatasetFormat(m);
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("missing header terminator".into()))?;
        let header = std::str::from_utf8(&bytes[..split + 1]).map_err(|_| bad("header is not UTF-8".into()))?;
        let body = &bytes[split + 2..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC_LINE) {
            return Err(bad("not a glyphforge dataset".into()));
        }
        let mut size = None;
        let mut margin = None;
        let mut seed = None;
        let mut source = None;
        let mut targets = Vec::new();
        let mut charset = Vec::new();
        let mut index = Vec::new();
        let mut stored_hash = None;
        for line in lines {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
            match key {
                "size" => size = value.parse::<usize>().ok(),
                "margin_fraction" => margin = value.parse::<f32>().ok(),
                "split_seed" => seed = value.parse::<u64>().ok(),
                "source_font" => source = Some(parse_font(value, false)?),
                "target_font" => targets.push(parse_font(value, true)?),
                "charset" => {
                    charset = value
                        .split_whitespace()
                        .map(parse_cp)
                        .collect::<Result<Vec<_>>>()?;
                }
                "samples" => {}
                "sample" => {
                    let (cp, style) = value
                        .split_once('\t')
                        .ok_or_else(|| bad(format!("malformed sample line `{line}`")))?;
                    let style: usize = style.parse().map_err(|_| bad(format!("bad style `{style}`")))?;
                    index.push((parse_cp(cp)?, style));
                }
                "content_hash" => stored_hash = Some(value.to_string()),
                other => return Err(bad(format!("unknown header key `{other}`"))),
            }
        }
        let size = size.ok_or_else(|| bad("missing size".into()))?;
        let area = size * size;
        if body.len() != index.len() * 2 * area {
            return Err(bad(format!(
                "payload has {} bytes, expected {}",
                body.len(),
                index.len() * 2 * area
            )));
        }
        let bitmap = |bytes: &[u8], c: char, style: StyleTag| GlyphBitmap {
            codepoint: c,
            style,
            size,
            pixels: bytes.iter().map(|&q| dequantize(q)).collect(),
        };
        let samples: Vec<SamplePair> = index
            .iter()
            .zip(body.chunks(2 * area))
            .map(|(&(c, style_id), chunk)| SamplePair {
                source: bitmap(&chunk[..area], c, StyleTag::Source),
                target: bitmap(&chunk[area..], c, StyleTag::Target(style_id)),
                style_id,
            })
            .collect();
        let manifest = DatasetManifest {
            source_font: source.ok_or_else(|| bad("missing source_font".into()))?,
            target_fonts: targets,
            charset,
            size,
            margin_fraction: margin.ok_or_else(|| bad("missing margin_fraction".into()))?,
            split_seed: seed.ok_or_else(|| bad("missing split_seed".into()))?,
            content_hash: stored_hash.ok_or_else(|| bad("missing content_hash".into()))?,
        };
        let actual = content_hash(&manifest, &samples);
        if actual != manifest.content_hash {
            return Err(bad(format!(
                "content hash mismatch: stored {}, computed {actual}",
                manifest.content_hash
            )));
        }
        if samples.iter().any(|s| s.style_id >= manifest.target_fonts.len()) {
            return Err(bad("sample references an unknown style".into()));
        }
        Ok(Self {
            manifest,
            samples,
            skips: Vec::new(),
        })
    }

    /// `U+XXXX<TAB>style_id<TAB>reason` per skipped pair.
    pub fn skip_report(&self) -> String {
        let mut out = String::new();
        for s in &self.skips {
            let _ = writeln!(out, "U+{:04X}\t{}\t{}", s.codepoint as u32, s.style_id, s.reason);
        }
        out
    }
}

fn parse_cp(text: &str) -> Result<char> {
    text.strip_prefix("U+")
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .and_then(char::from_u32)
        .ok_or_else(|| Error::DatasetFormat(format!("bad codepoint `{text}`")))
}

fn parse_font(value: &str, indexed: bool) -> Result<FontFingerprint> {
    let mut parts = value.splitn(if indexed { 4 } else { 3 }, '\t');
    if indexed {
        parts.next();
    }
    match (parts.next(), parts.next(), parts.next()) {
        (Some(name), Some(sha), Some(path)) => Ok(FontFingerprint {
            name: name.to_string(),
            path: path.to_string(),
            sha256: sha.to_string(),
        }),
        _ => Err(Error::DatasetFormat(format!("malformed font line `{value}`"))),
    }
}

/// Training and validation samples, partitioned by character.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<SamplePair>,
    pub val: Vec<SamplePair>,
}

impl Split {
    pub fn train_codepoints(&self) -> Vec<char> {
        unique_codepoints(&self.train)
    }

    pub fn val_codepoints(&self) -> Vec<char> {
        unique_codepoints(&self.val)
    }
}

fn unique_codepoints(samples: &[SamplePair]) -> Vec<char> {
    let mut cps: Vec<char> = samples.iter().map(SamplePair::codepoint).collect();
    cps.dedup();
    cps
}

/// Holds out `round(val_fraction * #characters)` characters, chosen by a
/// seeded shuffle; a held-out character appears in no training sample.
pub fn split_dataset(samples: &[SamplePair], val_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::SplitFraction(val_fraction));
    }
    if samples.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let mut cps: Vec<char> = samples.iter().map(SamplePair::codepoint).collect();
    cps.sort_unstable();
    cps.dedup();
    let n_val = (val_fraction * cps.len() as f64).round() as usize;
    if n_val >= cps.len() {
        return Err(Error::SplitDegenerate);
    }
    let mut shuffled = cps.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held_out: std::collections::HashSet<char> = shuffled[..n_val].iter().copied().collect();
    let (val, train) = samples
        .iter()
        .cloned()
        .partition(|s| held_out.contains(&s.codepoint()));
    Ok(Split { train, val })
}
