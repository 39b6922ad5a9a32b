use font8x8::{UnicodeFonts, BASIC_FONTS};

use super::render::{render_glyphs, GrayImage, Skipped};
use super::weights::StyleWeights;
use crate::corpus::{GlyphBitmap, GlyphFont, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::unet::Checkpoint;

/// One grid cell that could not be generated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecimenIssue {
    pub row: usize,
    pub column: usize,
    pub codepoint: char,
    pub reason: String,
}

/// Characters down the side, style vectors across the top.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecimenSheet {
    pub chars: Vec<char>,
    pub weights: Vec<StyleWeights>,
    pub column_labels: Vec<String>,
    /// `cells[row][column]`; `None` marks a crossed-box cell.
    pub cells: Vec<Vec<Option<GlyphBitmap>>>,
    pub issues: Vec<SpecimenIssue>,
    pub cell_size: usize,
}

/// Renders `chars x weight_vectors` through `checkpoint`. Characters missing
/// from `source_font` become crossed boxes and report entries.
pub fn render_specimen(
    checkpoint: &Checkpoint,
    chars: &[char],
    weight_vectors: &[StyleWeights],
    source_font: &GlyphFont,
) -> Result<SpecimenSheet> {
    if chars.is_empty() || weight_vectors.is_empty() {
        return Err(Error::MixSpecInvalid("specimen needs at least one character and one style vector".into()));
    }
    let margin = checkpoint
        .source_font
        .as_ref()
        .map_or(DEFAULT_MARGIN, |f| f.margin_fraction);
    let mut columns = Vec::with_capacity(weight_vectors.len());
    let mut issues = Vec::new();
    for (j, w) in weight_vectors.iter().enumerate() {
        let (cells, skipped) = render_glyphs(&checkpoint.params, source_font, margin, chars, w)?;
        for Skipped { codepoint, reason } in skipped {
            for (row, _) in chars.iter().enumerate().filter(|(_, &c)| c == codepoint) {
                issues.push(SpecimenIssue {
                    row,
                    column: j,
                    codepoint,
                    reason: reason.clone(),
                });
            }
        }
        columns.push(cells);
    }
    issues.sort_by_key(|i| (i.row, i.column));
    issues.dedup();
    let cells = (0..chars.len())
        .map(|i| columns.iter().map(|col| col[i].clone()).collect())
        .collect();
    Ok(SpecimenSheet {
        chars: chars.to_vec(),
        column_labels: weight_vectors.iter().map(|w| column_label(w, &checkpoint.styles)).collect(),
        weights: weight_vectors.to_vec(),
        cells,
        issues,
        cell_size: checkpoint.config().input_size,
    })
}

/// Style name for one-hot vectors, then each weight to 3 decimals.
fn column_label(w: &StyleWeights, styles: &[String]) -> String {
    let v = w.as_slice();
    let hot: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let mut lines = Vec::new();
    if hot.len() == 1 && v[hot[0]] == 1.0 {
        lines.push(styles.get(hot[0]).cloned().unwrap_or_else(|| format!("style{}", hot[0])));
    }
    lines.extend(v.iter().map(|x| format!("{x:.3}")));
    lines.join("\n")
}

impl SpecimenSheet {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn columns(&self) -> usize {
        self.weights.len()
    }

    /// `U+XXXX<TAB>column<TAB>reason` per failed cell.
    pub fn report(&self) -> String {
        self.issues
            .iter()
            .map(|i| format!("U+{:04X}\t{}\t{}\n", i.codepoint as u32, i.column, i.reason))
            .collect()
    }

    /// Page image: a label row and a label column one cell wide, then the grid.
    pub fn to_image(&self) -> GrayImage {
        let s = self.cell_size;
        let gap = 1;
        let pitch = s + gap;
        let width = pitch * (self.columns() + 1) + gap;
        let height = pitch * (self.rows() + 1) + gap;
        let mut page = GrayImage::new(width, height, 255);
        let origin = |row: usize, col: usize| (gap + col * pitch, gap + row * pitch);

        for (j, label) in self.column_labels.iter().enumerate() {
            let (x, y) = origin(0, j + 1);
            draw_text(&mut page, label, x, y, s, s);
        }
        for (i, &c) in self.chars.iter().enumerate() {
            let (x, y) = origin(i + 1, 0);
            draw_text(&mut page, &format!("U+{:04X}", c as u32), x, y, s, s);
            for (j, cell) in self.cells[i].iter().enumerate() {
                let (x, y) = origin(i + 1, j + 1);
                match cell {
                    Some(g) => page.blit(&GrayImage::from_glyph(g), x, y),
                    None => crossed_box(&mut page, x, y, s),
                }
            }
        }
        page
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        self.to_image().to_png()
    }
}

fn crossed_box(page: &mut GrayImage, x0: usize, y0: usize, s: usize) {
    for t in 0..s {
        for (x, y) in [(t, 0), (t, s - 1), (0, t), (s - 1, t), (t, t), (t, s - 1 - t)] {
            page.set(x0 + x, y0 + y, 0);
        }
    }
}

/// 8x8 bitmap text, clipped to a `w x h` box; lines split on `\n`.
fn draw_text(page: &mut GrayImage, text: &str, x0: usize, y0: usize, w: usize, h: usize) {
    for (line_no, line) in text.lines().enumerate() {
        let top = line_no * 9;
        if top + 8 > h {
            break;
        }
        for (col, ch) in line.chars().enumerate() {
            let left = col * 8;
            if left + 8 > w {
                break;
            }
            let glyph = BASIC_FONTS.get(ch).or_else(|| BASIC_FONTS.get('?')).unwrap_or([0; 8]);
            for (dy, bits) in glyph.iter().enumerate() {
                for dx in 0..8 {
                    if bits & (1 << dx) != 0 {
                        page.set(x0 + left + dx, y0 + top + dy, 0);
                    }
                }
            }
        }
    }
}
