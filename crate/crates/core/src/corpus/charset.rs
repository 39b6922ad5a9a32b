use std::path::Path;

use crate::error::{Error, Result};

/// Frequency-ordered common Chinese characters, most frequent first.
pub const COMMON_CHARS: &str = include_str!("../../data/common_chars.txt");

/// The first `n` entries of the builtin frequency list, in frequency order.
pub fn builtin_top(n: usize) -> Vec<char> {
    COMMON_CHARS.chars().filter(|c| !c.is_whitespace()).take(n).collect()
}

/// Resolves a charset spec to a sorted, duplicate-free list of characters.
///
/// Accepted forms:
/// - `builtin:topN`: the N most frequent characters of the builtin list
/// - `U+4E00..U+4E03` (optionally prefixed `range:`): an inclusive range
/// - `chars:永和`: the literal characters
/// - `file:PATH` or a bare existing path: whitespace/comma separated tokens,
///   each either `U+XXXX` or a run of literal characters; `#` starts a
///   comment line
pub fn load_charset(spec: &str) -> Result<Vec<char>> {
    let invalid = |reason: &str| Error::CharsetSpecInvalid {
        spec: spec.to_string(),
        reason: reason.to_string(),
    };
    let spec_trim = spec.trim();
    let chars = if let Some(n) = spec_trim.strip_prefix("builtin:") {
        let n: usize = n
            .strip_prefix("top")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| invalid("expected builtin:topN"))?;
        builtin_top(n)
    } else if let Some(lit) = spec_trim.strip_prefix("chars:") {
        lit.chars().filter(|c| !c.is_whitespace()).collect()
    } else if let Some(path) = spec_trim.strip_prefix("file:") {
        read_charset_file(spec, Path::new(path))?
    } else if let Some(range) = spec_trim.strip_prefix("range:") {
        parse_range(range).ok_or_else(|| invalid("expected U+XXXX..U+YYYY"))?
    } else if let Some(chars) = parse_range(spec_trim) {
        chars
    } else if Path::new(spec_trim).is_file() {
        read_charset_file(spec, Path::new(spec_trim))?
    } else {
        return Err(invalid("not builtin:topN, a U+ range, chars:..., or an existing file"));
    };
    normalize(chars)
}

fn normalize(mut chars: Vec<char>) -> Result<Vec<char>> {
    chars.sort_unstable();
    chars.dedup();
    if chars.is_empty() {
        return Err(Error::CharsetEmpty);
    }
    Ok(chars)
}

fn parse_codepoint(token: &str) -> Option<char> {
    let hex = token.strip_prefix("U+").or_else(|| token.strip_prefix("u+"))?;
    u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
}

fn parse_range(text: &str) -> Option<Vec<char>> {
    let (lo, hi) = text.split_once("..")?;
    let lo = parse_codepoint(lo.trim())?;
    let hi = parse_codepoint(hi.trim())?;
    if lo > hi {
        return None;
    }
    Some((lo..=hi).collect())
}

fn read_charset_file(spec: &str, path: &Path) -> Result<Vec<char>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::CharsetSpecInvalid {
        spec: spec.to_string(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        for token in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            if token.len() > 2 && (token.starts_with("U+") || token.starts_with("u+")) {
                let c = parse_codepoint(token).ok_or_else(|| Error::CharsetSpecInvalid {
                    spec: spec.to_string(),
                    reason: format!("bad codepoint token `{token}`"),
                })?;
                out.push(c);
            } else {
                out.extend(token.chars());
            }
        }
    }
    Ok(out)
}
