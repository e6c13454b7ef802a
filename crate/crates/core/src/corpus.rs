//! Core data model: scheme-qualified tag labels, tagged units, annotated
//! streams, and the vertical `token<TAB>tag` file format.
//!
//! A *vertical* file carries one token-tag pair per line. Blank lines and
//! lines consisting only of dashes mark sentence boundaries; on output a
//! boundary is always written as `-----`. Multi-token units (for example a
//! proper name annotated as a single item) are written with their tag carrying
//! a ditto suffix `:i/n` on each part, and [`group_ditto_units`] folds such a
//! run back into one unit.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised by the corpus model and the vertical format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("invalid scheme id {0:?}: must be non-empty without whitespace")]
    InvalidSchemeId(String),
    #[error("line {line}: expected exactly one tab (`token<TAB>tag`), found {fields} fields")]
    MalformedLine { line: usize, fields: usize },
    #[error("line {line}: empty token field")]
    EmptyToken { line: usize },
    #[error("line {line}: empty tag field")]
    EmptyTag { line: usize },
    #[error("invalid tag label {raw:?}: {reason}")]
    InvalidTagLabel { raw: String, reason: String },
    #[error("line {line}: invalid tag label {raw:?}: {reason}")]
    InvalidTagLabelAt {
        line: usize,
        raw: String,
        reason: String,
    },
    #[error("ditto run broken at unit {index}: {reason}")]
    BrokenDittoRun { index: usize, reason: String },
    #[error("unit {index} has no tokens")]
    EmptyUnit { index: usize },
    #[error("sentence break after unit {index} is out of range (stream has {len} units)")]
    BreakOutOfRange { index: usize, len: usize },
}

impl CorpusError {
    fn at_line(self, line: usize) -> CorpusError {
        match self {
            CorpusError::InvalidTagLabel { raw, reason } => {
                CorpusError::InvalidTagLabelAt { line, raw, reason }
            }
            other => other,
        }
    }
}

/// Identifier of an annotation scheme (tagset), e.g. `CLAWS` or `ICE`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SchemeId(String);

impl SchemeId {
    /// Builds a scheme id; the name must be non-empty and contain no whitespace.
    pub fn new(name: impl Into<String>) -> Result<Self, CorpusError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidSchemeId(name));
        }
        Ok(SchemeId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SchemeId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::new(s)
    }
}

/// Position of one part inside a multi-part (ditto) unit: part `index` of
/// `total`, 1-based, with `total >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DittoPart {
    pub index: u32,
    pub total: u32,
}

/// A tag as written in a vertical file: an opaque base plus an optional ditto
/// suffix `:i/n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagLabel {
    pub base: String,
    pub ditto: Option<DittoPart>,
}

impl TagLabel {
    pub fn plain(base: impl Into<String>) -> TagLabel {
        TagLabel {
            base: base.into(),
            ditto: None,
        }
    }

    pub fn with_ditto(base: impl Into<String>, index: u32, total: u32) -> TagLabel {
        TagLabel {
            base: base.into(),
            ditto: Some(DittoPart { index, total }),
        }
    }
}

impl fmt::Display for TagLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ditto {
            Some(DittoPart { index, total }) => write!(f, "{}:{}/{}", self.base, index, total),
            None => f.write_str(&self.base),
        }
    }
}

impl FromStr for TagLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tag_label(s)
    }
}

/// True when `s` is a plain decimal number without leading zeros.
///
/// Numbers with leading zeros deliberately do not count as ditto suffixes:
/// treating `X:01/4` as an opaque base keeps serialization byte-exact.
fn plain_number(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && !(s.len() > 1 && s.starts_with('0'))
}

/// Splits a raw tag into base and optional ditto suffix.
///
/// A suffix `:i/n` (both plain decimal numbers) is recognised after the last
/// colon; anything else leaves the whole string as the base. Recognised
/// suffixes are validated: `i` and `n` must be positive, `i <= n`, and
/// `n >= 2`.
pub fn parse_tag_label(raw: &str) -> Result<TagLabel, CorpusError> {
    if raw.is_empty() {
        return Err(CorpusError::InvalidTagLabel {
            raw: raw.to_string(),
            reason: "empty".to_string(),
        });
    }
    if let Some(colon) = raw.rfind(':') {
        let (base, suffix) = (&raw[..colon], &raw[colon + 1..]);
        if let Some((i_str, n_str)) = suffix.split_once('/') {
            if plain_number(i_str) && plain_number(n_str) {
                let err = |reason: &str| CorpusError::InvalidTagLabel {
                    raw: raw.to_string(),
                    reason: reason.to_string(),
                };
                if base.is_empty() {
                    return Err(err("empty base before ditto suffix"));
                }
                let index: u32 = i_str.parse().map_err(|_| err("ditto index out of range"))?;
                let total: u32 = n_str.parse().map_err(|_| err("ditto total out of range"))?;
                if index == 0 || total == 0 {
                    return Err(err("ditto numbers must be positive"));
                }
                if index > total {
                    return Err(err("ditto index exceeds total"));
                }
                if total < 2 {
                    return Err(err("ditto total must be at least 2"));
                }
                return Ok(TagLabel::with_ditto(base, index, total));
            }
        }
    }
    Ok(TagLabel::plain(raw))
}

/// One annotated item: one or more tokens carrying a single tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedUnit {
    pub tokens: Vec<String>,
    pub tag: TagLabel,
    /// Position of the unit within its stream.
    pub index: usize,
}

impl TaggedUnit {
    /// The unit's text, tokens joined by single spaces.
    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A sequence of tagged units under one scheme, with sentence boundaries
/// recorded as the set of unit indices after which a boundary occurs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedStream {
    pub scheme: SchemeId,
    pub units: Vec<TaggedUnit>,
    pub sentence_breaks: BTreeSet<usize>,
}

impl AnnotatedStream {
    /// Builds a stream, validating unit indices, non-empty tokens and break
    /// positions.
    pub fn new(
        scheme: SchemeId,
        units: Vec<TaggedUnit>,
        sentence_breaks: BTreeSet<usize>,
    ) -> Result<Self, CorpusError> {
        for (i, unit) in units.iter().enumerate() {
            if unit.tokens.is_empty() || unit.tokens.iter().any(|t| t.is_empty()) {
                return Err(CorpusError::EmptyUnit { index: i });
            }
            debug_assert_eq!(unit.index, i, "unit index must match position");
        }
        if let Some(&b) = sentence_breaks.iter().next_back() {
            if b >= units.len() {
                return Err(CorpusError::BreakOutOfRange {
                    index: b,
                    len: units.len(),
                });
            }
        }
        Ok(AnnotatedStream {
            scheme,
            units,
            sentence_breaks,
        })
    }

    /// Convenience constructor from `(tokens, tag)` pairs; indices are assigned
    /// by position.
    pub fn from_parts(
        scheme: SchemeId,
        parts: Vec<(Vec<String>, TagLabel)>,
        sentence_breaks: BTreeSet<usize>,
    ) -> Result<Self, CorpusError> {
        let units = parts
            .into_iter()
            .enumerate()
            .map(|(index, (tokens, tag))| TaggedUnit { tokens, tag, index })
            .collect();
        AnnotatedStream::new(scheme, units, sentence_breaks)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Serializes the stream back to the vertical format, one `token<TAB>tag`
    /// line per unit, `-----` boundary rows, trailing newline included.
    pub fn to_vertical(&self) -> String {
        let mut out = String::new();
        for unit in &self.units {
            out.push_str(&unit.surface());
            out.push('\t');
            out.push_str(&unit.tag.to_string());
            out.push('\n');
            if self.sentence_breaks.contains(&unit.index) {
                out.push_str("-----\n");
            }
        }
        out
    }
}

/// A boundary row is blank or consists only of dashes (at least three).
fn is_boundary_line(line: &str) -> bool {
    line.is_empty() || (line.len() >= 3 && line.bytes().all(|b| b == b'-'))
}

/// Parses vertical `token<TAB>tag` text into a stream.
///
/// Boundary rows become sentence breaks, never units; a boundary before any
/// unit or repeated boundaries collapse (the break set cannot encode them).
/// Token fields are split on single spaces, so a field like `New York` yields
/// a two-token unit. Exactly one tab per data line is required.
pub fn parse_vertical(text: &str, scheme: SchemeId) -> Result<AnnotatedStream, CorpusError> {
    let mut units: Vec<TaggedUnit> = Vec::new();
    let mut breaks = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if !line.contains('\t') && is_boundary_line(line) {
            if let Some(last) = units.len().checked_sub(1) {
                breaks.insert(last);
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                fields: fields.len(),
            });
        }
        let tokens: Vec<String> = fields[0]
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(CorpusError::EmptyToken { line: line_no });
        }
        if fields[1].is_empty() {
            return Err(CorpusError::EmptyTag { line: line_no });
        }
        let tag = parse_tag_label(fields[1]).map_err(|e| e.at_line(line_no))?;
        units.push(TaggedUnit {
            tokens,
            tag,
            index: units.len(),
        });
    }
    AnnotatedStream::new(scheme, units, breaks)
}

/// Folds complete consecutive ditto runs (`1/n` .. `n/n`, same base) into
/// single multi-token units tagged with the base alone.
///
/// The operation is idempotent, conserves the total token count, and renumbers
/// unit indices and sentence breaks. Incomplete, out-of-order or mixed-base
/// runs are structural errors naming the offending unit index.
pub fn group_ditto_units(stream: &AnnotatedStream) -> Result<AnnotatedStream, CorpusError> {
    let mut new_units: Vec<TaggedUnit> = Vec::new();
    let mut index_map = vec![0usize; stream.units.len()];
    let mut i = 0;
    while i < stream.units.len() {
        let unit = &stream.units[i];
        match unit.tag.ditto {
            None => {
                index_map[i] = new_units.len();
                new_units.push(TaggedUnit {
                    tokens: unit.tokens.clone(),
                    tag: unit.tag.clone(),
                    index: new_units.len(),
                });
                i += 1;
            }
            Some(DittoPart { index: 1, total }) => {
                let base = unit.tag.base.clone();
                let mut tokens = unit.tokens.clone();
                index_map[i] = new_units.len();
                for part in 2..=total {
                    let j = i + part as usize - 1;
                    let next = stream.units.get(j).ok_or(CorpusError::BrokenDittoRun {
                        index: i,
                        reason: format!(
                            "run {base}:1/{total} truncated by end of stream after part {}",
                            part - 1
                        ),
                    })?;
                    match next.tag.ditto {
                        Some(d) if next.tag.base != base => {
                            return Err(CorpusError::BrokenDittoRun {
                                index: j,
                                reason: format!(
                                    "base {:?} does not continue run of {base:?} ({}/{})",
                                    next.tag.base, d.index, d.total
                                ),
                            });
                        }
                        Some(d) if d.total != total || d.index != part => {
                            return Err(CorpusError::BrokenDittoRun {
                                index: j,
                                reason: format!(
                                    "expected part {part}/{total}, found {}/{}",
                                    d.index, d.total
                                ),
                            });
                        }
                        Some(_) => {
                            tokens.extend(next.tokens.iter().cloned());
                            index_map[j] = new_units.len();
                        }
                        None => {
                            return Err(CorpusError::BrokenDittoRun {
                                index: j,
                                reason: format!("expected part {part}/{total}, found plain tag"),
                            });
                        }
                    }
                }
                new_units.push(TaggedUnit {
                    tokens,
                    tag: TagLabel::plain(base),
                    index: new_units.len(),
                });
                i += total as usize;
            }
            Some(d) => {
                return Err(CorpusError::BrokenDittoRun {
                    index: i,
                    reason: format!("part {}/{} without a preceding part 1", d.index, d.total),
                });
            }
        }
    }
    let breaks = stream
        .sentence_breaks
        .iter()
        .map(|&b| index_map[b])
        .collect();
    AnnotatedStream::new(stream.scheme.clone(), new_units, breaks)
}
