//! Tag-correspondence statistics over a parallel annotated corpus.
//!
//! For a chosen source scheme, every link contributes one observation pairing
//! the source-side tag with the target-side tag. Multi-unit sides contribute
//! a composite tag (bases joined with `+`); the empty side of a null link
//! contributes the pseudo-tag [`NULL_TAG`]. Percentages are computed in exact
//! integer arithmetic (two decimal places, ties round up) so rendered tables
//! are reproducible byte for byte.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::align::{Pac, Span};
use crate::corpus::{AnnotatedStream, SchemeId};

/// Pseudo-tag recorded for the empty side of a null link.
pub const NULL_TAG: &str = "\u{2014}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrespondenceError {
    #[error("scheme {scheme} is not a side of this corpus (sides: {left}, {right})")]
    SchemeNotInPac {
        scheme: String,
        left: String,
        right: String,
    },
    #[error("cannot merge tables for {ours_src}->{ours_tgt} and {theirs_src}->{theirs_tgt}")]
    SchemeMismatch {
        ours_src: String,
        ours_tgt: String,
        theirs_src: String,
        theirs_tgt: String,
    },
    #[error("source tag {0} has no observations")]
    UnknownSourceTag(String),
    #[error("correspondence table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Pairing counts between tags of a source scheme and tags of a target
/// scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceTable {
    pub source_scheme: SchemeId,
    pub target_scheme: SchemeId,
    pub counts: BTreeMap<(String, String), u64>,
}

impl CorrespondenceTable {
    pub fn new(source_scheme: SchemeId, target_scheme: SchemeId) -> CorrespondenceTable {
        CorrespondenceTable {
            source_scheme,
            target_scheme,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, source_tag: impl Into<String>, target_tag: impl Into<String>, n: u64) {
        *self
            .counts
            .entry((source_tag.into(), target_tag.into()))
            .or_insert(0) += n;
    }

    pub fn source_tags(&self) -> BTreeSet<&str> {
        self.counts.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn total_for_source(&self, source_tag: &str) -> u64 {
        self.counts
            .iter()
            .filter(|((s, _), _)| s == source_tag)
            .map(|(_, &n)| n)
            .sum()
    }

    /// Target tags and counts observed for one source tag, ascending by
    /// target tag.
    pub fn distribution(&self, source_tag: &str) -> Vec<(&str, u64)> {
        self.counts
            .iter()
            .filter(|((s, _), _)| s == source_tag)
            .map(|((_, t), &n)| (t.as_str(), n))
            .collect()
    }

    /// Adds another table's counts into this one. Both tables must relate the
    /// same pair of schemes in the same direction.
    pub fn merge(&mut self, other: &CorrespondenceTable) -> Result<(), CorrespondenceError> {
        if self.source_scheme != other.source_scheme || self.target_scheme != other.target_scheme {
            return Err(CorrespondenceError::SchemeMismatch {
                ours_src: self.source_scheme.to_string(),
                ours_tgt: self.target_scheme.to_string(),
                theirs_src: other.source_scheme.to_string(),
                theirs_tgt: other.target_scheme.to_string(),
            });
        }
        for (key, &n) in &other.counts {
            match self.counts.entry(key.clone()) {
                Entry::Occupied(mut e) => *e.get_mut() += n,
                Entry::Vacant(e) => {
                    e.insert(n);
                }
            }
        }
        Ok(())
    }
}

fn side_tag(stream: &AnnotatedStream, span: Span) -> String {
    if span.is_empty() {
        NULL_TAG.to_string()
    } else {
        span.iter()
            .map(|i| stream.units[i].tag.base.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Counts tag pairings in `pac`, oriented so that `source` is the source
/// scheme. When both sides carry the same scheme the left side is the source.
pub fn extract_correspondences(
    pac: &Pac,
    source: &SchemeId,
) -> Result<CorrespondenceTable, CorrespondenceError> {
    let flip = if pac.left.scheme == *source {
        false
    } else if pac.right.scheme == *source {
        true
    } else {
        return Err(CorrespondenceError::SchemeNotInPac {
            scheme: source.to_string(),
            left: pac.left.scheme.to_string(),
            right: pac.right.scheme.to_string(),
        });
    };
    let (src_stream, tgt_stream) = if flip {
        (&pac.right, &pac.left)
    } else {
        (&pac.left, &pac.right)
    };
    let mut table = CorrespondenceTable::new(src_stream.scheme.clone(), tgt_stream.scheme.clone());
    for link in &pac.links {
        let (src_span, tgt_span) = if flip {
            (link.right, link.left)
        } else {
            (link.left, link.right)
        };
        table.add(
            side_tag(src_stream, src_span),
            side_tag(tgt_stream, tgt_span),
            1,
        );
    }
    Ok(table)
}

/// `count` as a percentage of `total` with two decimal places, computed in
/// integer arithmetic; exact halves round up.
pub fn format_percent(count: u64, total: u64) -> String {
    assert!(total > 0, "percentage of an empty total");
    let scaled = count as u128 * 10_000;
    let total = total as u128;
    let mut q = scaled / total;
    let r = scaled % total;
    if 2 * r >= total {
        q += 1;
    }
    format!("{}.{:02}", q / 100, q % 100)
}

/// Renders the target distribution of one source tag, one `tag percent%`
/// line per target in ascending tag order.
pub fn render_distribution(
    table: &CorrespondenceTable,
    source_tag: &str,
) -> Result<String, CorrespondenceError> {
    let rows = table.distribution(source_tag);
    if rows.is_empty() {
        return Err(CorrespondenceError::UnknownSourceTag(
            source_tag.to_string(),
        ));
    }
    let total: u64 = rows.iter().map(|&(_, n)| n).sum();
    let mut out = String::new();
    for (tgt, n) in rows {
        out.push_str(&format!("{tgt} {}%\n", format_percent(n, total)));
    }
    Ok(out)
}

/// Serializes a table as TSV with scheme header comments. Percentages are
/// informational; counts are authoritative.
pub fn write_table_tsv(table: &CorrespondenceTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("# source={}\n", table.source_scheme));
    out.push_str(&format!("# target={}\n", table.target_scheme));
    out.push_str("source_tag\ttarget_tag\tcount\tpercentage\n");
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for ((s, _), &n) in &table.counts {
        *totals.entry(s.as_str()).or_insert(0) += n;
    }
    for ((s, t), &n) in &table.counts {
        out.push_str(&format!(
            "{s}\t{t}\t{n}\t{}\n",
            format_percent(n, totals[s.as_str()])
        ));
    }
    out
}

/// Parses the TSV form written by [`write_table_tsv`].
pub fn parse_table_tsv(text: &str) -> Result<CorrespondenceTable, CorrespondenceError> {
    let mut source_scheme: Option<SchemeId> = None;
    let mut target_scheme: Option<SchemeId> = None;
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut saw_header = false;

    let parse_scheme = |value: &str, line: usize| -> Result<SchemeId, CorrespondenceError> {
        value.parse().map_err(|e| CorrespondenceError::Parse {
            line,
            reason: format!("{e}"),
        })
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# source=") {
            source_scheme = Some(parse_scheme(rest, line_no)?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("# target=") {
            target_scheme = Some(parse_scheme(rest, line_no)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "source_tag\ttarget_tag\tcount\tpercentage" {
                return Err(CorrespondenceError::Parse {
                    line: line_no,
                    reason: format!("expected column header, found {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorrespondenceError::Parse {
                line: line_no,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let count: u64 = fields[2].parse().map_err(|_| CorrespondenceError::Parse {
            line: line_no,
            reason: format!("bad count {:?}", fields[2]),
        })?;
        if count == 0 {
            return Err(CorrespondenceError::Parse {
                line: line_no,
                reason: "zero-count rows are not stored".to_string(),
            });
        }
        let key = (fields[0].to_string(), fields[1].to_string());
        if counts.insert(key, count).is_some() {
            return Err(CorrespondenceError::Parse {
                line: line_no,
                reason: format!("duplicate row for {} / {}", fields[0], fields[1]),
            });
        }
    }

    let source_scheme = source_scheme.ok_or(CorrespondenceError::Parse {
        line: 0,
        reason: "missing `# source=` header".to_string(),
    })?;
    let target_scheme = target_scheme.ok_or(CorrespondenceError::Parse {
        line: 0,
        reason: "missing `# target=` header".to_string(),
    })?;
    if !saw_header {
        return Err(CorrespondenceError::Parse {
            line: 0,
            reason: "missing column header".to_string(),
        });
    }
    Ok(CorrespondenceTable {
        source_scheme,
        target_scheme,
        counts,
    })
}
