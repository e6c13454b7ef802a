//! Reversible surface normalization: SGML-style escape decoding,
//! sentence-initial case folding against a corpus-internal lexicon, enclitic
//! splitting and compound merging.
//!
//! Every change is recorded in a [`TransformLog`]; replaying the log in
//! reverse with [`unnormalize`] reconstructs the input stream exactly. Tags,
//! unit count and sentence breaks are never touched — only token lists within
//! units change.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::corpus::AnnotatedStream;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("conflicting structural transforms on a token of unit {unit}")]
    ConflictingTransforms { unit: usize },
    #[error("{kind:?} rule has an empty parameter table")]
    EmptyParameterTable { kind: TransformKind },
    #[error("transform log does not match stream at unit {unit}")]
    InconsistentLog { unit: usize },
    #[error("config line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
}

/// The four transform families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TransformKind {
    EscapeDecode,
    CaseFoldSentenceInitial,
    EncliticSplit,
    CompoundMerge,
}

/// A transform plus its parameters, applied to every unit of a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformRule {
    /// Replace `&name;` escapes by their expansions.
    EscapeDecode { entities: BTreeMap<String, String> },
    /// Lowercase the first token of each sentence when its lowercase form
    /// also occurs sentence-medially in the same stream.
    CaseFoldSentenceInitial,
    /// Split a trailing clitic (longest match, non-empty stem) off a token.
    EncliticSplit { clitics: Vec<String> },
    /// Merge adjacent tokens of one unit whose space-joined form is listed.
    CompoundMerge { compounds: BTreeSet<String> },
}

impl TransformRule {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformRule::EscapeDecode { .. } => TransformKind::EscapeDecode,
            TransformRule::CaseFoldSentenceInitial => TransformKind::CaseFoldSentenceInitial,
            TransformRule::EncliticSplit { .. } => TransformKind::EncliticSplit,
            TransformRule::CompoundMerge { .. } => TransformKind::CompoundMerge,
        }
    }

    /// Escape decoding with the default entity table.
    pub fn default_escape_decode() -> TransformRule {
        TransformRule::EscapeDecode {
            entities: default_entities(),
        }
    }

    /// Enclitic splitting with the default clitic list.
    pub fn default_enclitic_split() -> TransformRule {
        TransformRule::EncliticSplit {
            clitics: default_clitics(),
        }
    }
}

/// Default `&name;` expansions.
pub fn default_entities() -> BTreeMap<String, String> {
    [
        ("&semi;", ";"),
        ("&amp;", "&"),
        ("&lsqb;", "["),
        ("&rsqb;", "]"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Default clitic suffixes, longest first.
pub fn default_clitics() -> Vec<String> {
    ["'ve", "'re", "'ll", "n't", "'s", "'d", "'m"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// One recorded change: at `unit`, starting at token position `token`, the
/// token run `original` became `produced`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformEntry {
    pub unit: usize,
    pub token: usize,
    pub kind: TransformKind,
    pub original: Vec<String>,
    pub produced: Vec<String>,
}

/// Chronological record of all changes made by one [`normalize`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformLog {
    pub entries: Vec<TransformEntry>,
}

impl TransformLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(
        &mut self,
        unit: usize,
        token: usize,
        kind: TransformKind,
        original: Vec<String>,
        produced: Vec<String>,
    ) {
        self.entries.push(TransformEntry {
            unit,
            token,
            kind,
            original,
            produced,
        });
    }
}

/// Replaces known `&name;` escapes left to right in a single pass; unknown
/// escapes are kept verbatim. Total and idempotent on entity-free text.
pub fn decode_escapes(token: &str, entities: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(token.len());
    let mut rest = token;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        if let Some(semi) = tail.find(';') {
            let candidate = &tail[..=semi];
            if let Some(replacement) = entities.get(candidate) {
                out.push_str(replacement);
                rest = &tail[semi + 1..];
                continue;
            }
        }
        out.push('&');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Splits the longest listed clitic suffix off `token`, requiring a non-empty
/// stem. Suffix comparison is ASCII case-insensitive; the returned pieces
/// keep the original characters, so concatenation restores the token.
pub fn split_enclitic(token: &str, clitics: &[String]) -> Option<(String, String)> {
    let mut best: Option<usize> = None;
    for clitic in clitics {
        let n = clitic.len();
        if token.len() > n
            && token.is_char_boundary(token.len() - n)
            && token[token.len() - n..].eq_ignore_ascii_case(clitic)
            && best.is_none_or(|b| n > b)
        {
            best = Some(n);
        }
    }
    best.map(|n| {
        let cut = token.len() - n;
        (token[..cut].to_string(), token[cut..].to_string())
    })
}

/// Unit indices that start a sentence: unit 0 plus the unit after each break.
fn sentence_initial_units(stream: &AnnotatedStream) -> BTreeSet<usize> {
    let mut initials = BTreeSet::new();
    if !stream.is_empty() {
        initials.insert(0);
    }
    for &b in &stream.sentence_breaks {
        if b + 1 < stream.len() {
            initials.insert(b + 1);
        }
    }
    initials
}

/// Applies `rules` in order to every unit of `stream`, returning the
/// transformed stream and a log sufficient to undo it.
///
/// A token may undergo at most one structural transform (split or merge);
/// a second structural transform touching a produced token is an error.
pub fn normalize(
    stream: &AnnotatedStream,
    rules: &[TransformRule],
) -> Result<(AnnotatedStream, TransformLog), NormalizeError> {
    for rule in rules {
        let empty = match rule {
            TransformRule::EscapeDecode { entities } => entities.is_empty(),
            TransformRule::EncliticSplit { clitics } => clitics.is_empty(),
            TransformRule::CompoundMerge { compounds } => compounds.is_empty(),
            TransformRule::CaseFoldSentenceInitial => false,
        };
        if empty {
            return Err(NormalizeError::EmptyParameterTable { kind: rule.kind() });
        }
    }

    let mut units: Vec<Vec<String>> = stream.units.iter().map(|u| u.tokens.clone()).collect();
    let mut structural: Vec<Vec<bool>> = units.iter().map(|t| vec![false; t.len()]).collect();
    let mut log = TransformLog::default();

    for rule in rules {
        match rule {
            TransformRule::EscapeDecode { entities } => {
                for (ui, tokens) in units.iter_mut().enumerate() {
                    for (ti, token) in tokens.iter_mut().enumerate() {
                        let decoded = decode_escapes(token, entities);
                        if decoded != *token {
                            log.push(
                                ui,
                                ti,
                                TransformKind::EscapeDecode,
                                vec![token.clone()],
                                vec![decoded.clone()],
                            );
                            *token = decoded;
                        }
                    }
                }
            }
            TransformRule::CaseFoldSentenceInitial => {
                let initials = sentence_initial_units(stream);
                let mut medial: BTreeSet<String> = BTreeSet::new();
                for (ui, tokens) in units.iter().enumerate() {
                    for (ti, token) in tokens.iter().enumerate() {
                        if !(ti == 0 && initials.contains(&ui)) {
                            medial.insert(token.clone());
                        }
                    }
                }
                for &ui in &initials {
                    let token = &units[ui][0];
                    let folded = token.to_lowercase();
                    if folded != *token && medial.contains(&folded) {
                        log.push(
                            ui,
                            0,
                            TransformKind::CaseFoldSentenceInitial,
                            vec![token.clone()],
                            vec![folded.clone()],
                        );
                        units[ui][0] = folded;
                    }
                }
            }
            TransformRule::EncliticSplit { clitics } => {
                for ui in 0..units.len() {
                    let mut ti = 0;
                    while ti < units[ui].len() {
                        if let Some((stem, clitic)) = split_enclitic(&units[ui][ti], clitics) {
                            if structural[ui][ti] {
                                return Err(NormalizeError::ConflictingTransforms { unit: ui });
                            }
                            log.push(
                                ui,
                                ti,
                                TransformKind::EncliticSplit,
                                vec![units[ui][ti].clone()],
                                vec![stem.clone(), clitic.clone()],
                            );
                            units[ui].splice(ti..=ti, [stem, clitic]);
                            structural[ui].splice(ti..=ti, [true, true]);
                            ti += 2;
                        } else {
                            ti += 1;
                        }
                    }
                }
            }
            TransformRule::CompoundMerge { compounds } => {
                for ui in 0..units.len() {
                    let mut ti = 0;
                    while ti + 1 < units[ui].len() {
                        let joined = format!("{} {}", units[ui][ti], units[ui][ti + 1]);
                        if compounds.contains(&joined) {
                            if structural[ui][ti] || structural[ui][ti + 1] {
                                return Err(NormalizeError::ConflictingTransforms { unit: ui });
                            }
                            log.push(
                                ui,
                                ti,
                                TransformKind::CompoundMerge,
                                vec![units[ui][ti].clone(), units[ui][ti + 1].clone()],
                                vec![joined.clone()],
                            );
                            units[ui].splice(ti..=ti + 1, [joined]);
                            structural[ui].splice(ti..=ti + 1, [true]);
                        }
                        ti += 1;
                    }
                }
            }
        }
    }

    let mut out = stream.clone();
    for (unit, tokens) in out.units.iter_mut().zip(units) {
        unit.tokens = tokens;
    }
    Ok((out, log))
}

/// Undoes a [`normalize`] call by replaying its log in reverse. Fails if the
/// stream does not carry the tokens the log claims to have produced.
pub fn unnormalize(
    stream: &AnnotatedStream,
    log: &TransformLog,
) -> Result<AnnotatedStream, NormalizeError> {
    let mut out = stream.clone();
    for entry in log.entries.iter().rev() {
        let unit = out
            .units
            .get_mut(entry.unit)
            .ok_or(NormalizeError::InconsistentLog { unit: entry.unit })?;
        let end = entry.token + entry.produced.len();
        if end > unit.tokens.len() || unit.tokens[entry.token..end] != entry.produced[..] {
            return Err(NormalizeError::InconsistentLog { unit: entry.unit });
        }
        unit.tokens
            .splice(entry.token..end, entry.original.iter().cloned());
    }
    Ok(out)
}

/// Parses a key-value config overriding the entity and clitic tables.
///
/// Rows are `entity<TAB>&name;<TAB>replacement` and `clitic<TAB>suffix`;
/// blank lines and `#` comments are skipped. Kinds with no rows keep their
/// defaults.
pub fn parse_transform_config(
    text: &str,
) -> Result<(BTreeMap<String, String>, Vec<String>), NormalizeError> {
    let mut entities: Option<BTreeMap<String, String>> = None;
    let mut clitics: Option<Vec<String>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["entity", name, replacement] => {
                if !name.starts_with('&') || !name.ends_with(';') || name.len() < 3 {
                    return Err(NormalizeError::BadConfig {
                        line: line_no,
                        reason: format!("entity name {name:?} must look like `&name;`"),
                    });
                }
                entities
                    .get_or_insert_with(BTreeMap::new)
                    .insert(name.to_string(), replacement.to_string());
            }
            ["clitic", suffix] => {
                if suffix.is_empty() {
                    return Err(NormalizeError::BadConfig {
                        line: line_no,
                        reason: "empty clitic suffix".to_string(),
                    });
                }
                clitics
                    .get_or_insert_with(Vec::new)
                    .push(suffix.to_string());
            }
            _ => {
                return Err(NormalizeError::BadConfig {
                    line: line_no,
                    reason: format!("expected `entity<TAB>name<TAB>replacement` or `clitic<TAB>suffix`, found {:?}", line),
                });
            }
        }
    }
    Ok((
        entities.unwrap_or_else(default_entities),
        clitics.unwrap_or_else(default_clitics),
    ))
}
