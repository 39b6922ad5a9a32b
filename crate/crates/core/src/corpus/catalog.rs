use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleEntry {
    pub id: usize,
    pub name: String,
    pub font_source: String,
}

/// Ordered list of target styles; ids are exactly `0..K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleCatalog {
    entries: Vec<StyleEntry>,
}

impl StyleCatalog {
    pub fn new(entries: Vec<StyleEntry>) -> Result<Self> {
        let mut names = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id != i {
                return Err(Error::CatalogInvalid(format!(
                    "entry {i} has id {}; ids must be 0..K in order",
                    e.id
                )));
            }
            if e.name.is_empty() || e.name.contains(['\t', '\n', '=', ',']) {
                return Err(Error::CatalogInvalid(format!("invalid style name {:?}", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::CatalogInvalid(format!("duplicate style name `{}`", e.name)));
            }
        }
        if entries.is_empty() {
            return Err(Error::CatalogInvalid("catalog has no styles".into()));
        }
        Ok(Self { entries })
    }

    /// Builds a catalog from `(name, source)` pairs, numbering them in order.
    pub fn from_names<I, N, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (N, S)>,
        N: Into<String>,
        S: Into<String>,
    {
        Self::new(
            items
                .into_iter()
                .enumerate()
                .map(|(id, (name, src))| StyleEntry {
                    id,
                    name: name.into(),
                    font_source: src.into(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&StyleEntry> {
        self.entries.get(id)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// `id<TAB>name<TAB>font_source` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.id, e.name, e.font_source);
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(name)) = (parts.next(), parts.next()) else {
                return Err(Error::CatalogInvalid(format!("line {}: expected id<TAB>name", lineno + 1)));
            };
            let id = id
                .trim()
                .parse()
                .map_err(|_| Error::CatalogInvalid(format!("line {}: bad id `{id}`", lineno + 1)))?;
            entries.push(StyleEntry {
                id,
                name: name.trim().to_string(),
                font_source: parts.next().unwrap_or("").trim().to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::CatalogInvalid(format!("{} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::parse_tsv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}
