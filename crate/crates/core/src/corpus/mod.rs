//! Font ingestion: charsets, glyph rasterization, paired datasets.

mod catalog;
mod charset;
mod dataset;
mod raster;

pub use catalog::{StyleCatalog, StyleEntry};
pub use charset::{builtin_top, load_charset, COMMON_CHARS};
pub use dataset::{
    build_dataset, split_dataset, BuildOptions, Dataset, DatasetManifest, FontFingerprint,
    FontSource, SamplePair, SkipEntry, Split,
};
pub use raster::{
    dequantize, quantize, rasterize_glyph, GlyphBitmap, GlyphFont, StyleTag, DEFAULT_MARGIN,
};
