//! Deterministic tagset-to-tagset mappings: derivation from pairing counts,
//! application to streams, composition through a pivot scheme, and greedy
//! learning of contextual patches against a gold-aligned corpus.
//!
//! A [`Mapping`] rewrites tag bases via word-level exceptions first, then
//! per-tag rules, then a fallback policy for unseen tags. [`Patch`]es refine
//! a mapping after the fact: each one rewrites a source tag to a fixed target
//! wherever a single contextual test matches. Patch conditions always read
//! the original source stream, never patched output, so the effect of a patch
//! list at a unit depends only on which patches match there (the last
//! matching patch wins).
//!
//! Composition caveat: `compose(a, compose(b, c))` and
//! `compose(compose(a, b), c)` agree whenever the inner mappings are total
//! over the tags that reach them, and for partial mappings under the `fail`
//! and `unknown_tag` policies (with the reserved tag excluded from rule
//! sources). Under `passthrough` a tag that falls through the middle mapping
//! is re-examined by the last mapping in one grouping but not the other, so
//! associativity can fail; callers composing chains of passthrough mappings
//! should group them left to right.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::align::Pac;
use crate::corpus::{AnnotatedStream, SchemeId};
use crate::correspondence::{CorrespondenceTable, NULL_TAG};

/// Reserved output tag for the `unknown_tag` fallback policy.
pub const UNKNOWN_TAG: &str = "UNK";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("expected a stream in scheme {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },
    #[error("mappings do not chain: first targets {first_target}, second reads {second_source}")]
    ComposeMismatch {
        first_target: String,
        second_source: String,
    },
    #[error("cannot derive a mapping from an empty correspondence table")]
    EmptyTable,
    #[error("no rule for tag {tag} at unit {unit}")]
    UnmappedTag { tag: String, unit: usize },
    #[error("mapping file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackPolicy {
    /// An unseen tag is an error.
    Fail,
    /// An unseen tag is copied through unchanged.
    Passthrough,
    /// An unseen tag becomes [`UNKNOWN_TAG`].
    UnknownTag,
}

impl FallbackPolicy {
    pub fn token(self) -> &'static str {
        match self {
            FallbackPolicy::Fail => "fail",
            FallbackPolicy::Passthrough => "passthrough",
            FallbackPolicy::UnknownTag => "unk",
        }
    }

    pub fn from_token(s: &str) -> Option<FallbackPolicy> {
        Some(match s {
            "fail" => FallbackPolicy::Fail,
            "passthrough" => FallbackPolicy::Passthrough,
            "unk" => FallbackPolicy::UnknownTag,
            _ => return None,
        })
    }
}

/// A deterministic tag rewriting function between two schemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub source_scheme: SchemeId,
    pub target_scheme: SchemeId,
    /// Source tag base → target tag base.
    pub rules: BTreeMap<String, String>,
    /// (word surface, source tag base) → target tag base; overrides `rules`.
    pub lexicon_exceptions: BTreeMap<(String, String), String>,
    pub fallback_policy: FallbackPolicy,
}

impl Mapping {
    pub fn new(
        source_scheme: SchemeId,
        target_scheme: SchemeId,
        fallback_policy: FallbackPolicy,
    ) -> Mapping {
        Mapping {
            source_scheme,
            target_scheme,
            rules: BTreeMap::new(),
            lexicon_exceptions: BTreeMap::new(),
            fallback_policy,
        }
    }

    /// Maps every listed tag to itself.
    pub fn identity(
        scheme: SchemeId,
        tags: impl IntoIterator<Item = String>,
        fallback_policy: FallbackPolicy,
    ) -> Mapping {
        let mut m = Mapping::new(scheme.clone(), scheme, fallback_policy);
        for tag in tags {
            m.rules.insert(tag.clone(), tag);
        }
        m
    }

    /// Exceptions-then-rules lookup; `None` means the fallback policy
    /// decides.
    pub fn map_tag(&self, word: &str, tag_base: &str) -> Option<&str> {
        if let Some(t) = self
            .lexicon_exceptions
            .get(&(word.to_string(), tag_base.to_string()))
        {
            return Some(t);
        }
        self.rules.get(tag_base).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    Off,
    /// Every target tag in the table starts with pseudo-count one.
    AddOne,
}

/// Settings for [`derive_mapping`].
#[derive(Debug, Clone)]
pub struct DeriveSettings {
    pub fallback_policy: FallbackPolicy,
    /// Admit composite (`+`-joined) tags as rule sources and targets.
    pub include_composites: bool,
    pub smoothing: Smoothing,
}

impl Default for DeriveSettings {
    fn default() -> Self {
        DeriveSettings {
            fallback_policy: FallbackPolicy::Fail,
            include_composites: false,
            smoothing: Smoothing::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeriveWarning {
    /// Several targets shared the maximal count; the smallest was chosen.
    TieBroken {
        source_tag: String,
        chosen: String,
        alternatives: Vec<String>,
    },
    /// A source tag had no admissible target (only null or excluded
    /// composite pairings) and was left out of the rules.
    NoUsableTarget { source_tag: String },
}

fn is_composite(tag: &str) -> bool {
    tag.contains('+')
}

/// Derives the most-common-pairing mapping from a correspondence table.
///
/// For each admissible source tag the rule picks the target tag with the
/// maximal count; ties go to the lexicographically smaller target. The null
/// pseudo-tag is never a candidate; composite tags are excluded on both
/// sides unless `include_composites` is set.
pub fn derive_mapping(
    table: &CorrespondenceTable,
    settings: &DeriveSettings,
) -> Result<(Mapping, Vec<DeriveWarning>), MappingError> {
    if table.counts.is_empty() {
        return Err(MappingError::EmptyTable);
    }
    let admissible_target =
        |t: &str| t != NULL_TAG && (settings.include_composites || !is_composite(t));
    let universe: BTreeSet<&str> = table
        .counts
        .keys()
        .map(|(_, t)| t.as_str())
        .filter(|t| admissible_target(t))
        .collect();

    let mut mapping = Mapping::new(
        table.source_scheme.clone(),
        table.target_scheme.clone(),
        settings.fallback_policy,
    );
    let mut warnings = Vec::new();

    for source_tag in table.source_tags() {
        if !settings.include_composites && is_composite(source_tag) {
            continue;
        }
        let mut candidates: BTreeMap<&str, u64> = match settings.smoothing {
            Smoothing::Off => BTreeMap::new(),
            Smoothing::AddOne => universe.iter().map(|&t| (t, 1)).collect(),
        };
        for (tgt, n) in table.distribution(source_tag) {
            if admissible_target(tgt) {
                *candidates.entry(tgt).or_insert(0) += n;
            }
        }
        if candidates.is_empty() {
            warnings.push(DeriveWarning::NoUsableTarget {
                source_tag: source_tag.to_string(),
            });
            continue;
        }
        let best = *candidates.values().max().unwrap();
        let tied: Vec<&str> = candidates
            .iter()
            .filter(|(_, &n)| n == best)
            .map(|(&t, _)| t)
            .collect();
        let chosen = tied[0]; // BTreeMap order: lexicographically smallest
        if tied.len() > 1 {
            warnings.push(DeriveWarning::TieBroken {
                source_tag: source_tag.to_string(),
                chosen: chosen.to_string(),
                alternatives: tied[1..].iter().map(|t| t.to_string()).collect(),
            });
        }
        mapping
            .rules
            .insert(source_tag.to_string(), chosen.to_string());
    }
    Ok((mapping, warnings))
}

/// Rewrites every unit's tag base through the mapping. Tokens, unit order,
/// ditto suffixes, and sentence breaks are untouched; the output stream
/// carries the mapping's target scheme.
pub fn apply_mapping(
    mapping: &Mapping,
    stream: &AnnotatedStream,
) -> Result<AnnotatedStream, MappingError> {
    if stream.scheme != mapping.source_scheme {
        return Err(MappingError::SchemeMismatch {
            expected: mapping.source_scheme.to_string(),
            found: stream.scheme.to_string(),
        });
    }
    let mut out = stream.clone();
    out.scheme = mapping.target_scheme.clone();
    for unit in &mut out.units {
        let mapped = match mapping.map_tag(&unit.surface(), &unit.tag.base) {
            Some(t) => t.to_string(),
            None => match mapping.fallback_policy {
                FallbackPolicy::Fail => {
                    return Err(MappingError::UnmappedTag {
                        tag: unit.tag.base.clone(),
                        unit: unit.index,
                    });
                }
                FallbackPolicy::Passthrough => unit.tag.base.clone(),
                FallbackPolicy::UnknownTag => UNKNOWN_TAG.to_string(),
            },
        };
        unit.tag.base = mapped;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComposeWarning {
    /// A rule of the first mapping was dropped because its target has no
    /// rule in the second mapping (fail policy).
    DroppedRule {
        source_tag: String,
        intermediate_tag: String,
    },
    /// An exception of the first mapping was dropped for the same reason.
    DroppedException {
        word: String,
        source_tag: String,
        intermediate_tag: String,
    },
}

/// Chains two mappings through their shared middle scheme.
///
/// Gaps in the second mapping are resolved by the *second* mapping's
/// fallback policy at composition time; the composed mapping keeps the
/// *first* mapping's policy for tags it has never seen.
pub fn compose_mappings(
    first: &Mapping,
    second: &Mapping,
) -> Result<(Mapping, Vec<ComposeWarning>), MappingError> {
    if first.target_scheme != second.source_scheme {
        return Err(MappingError::ComposeMismatch {
            first_target: first.target_scheme.to_string(),
            second_source: second.source_scheme.to_string(),
        });
    }
    let mut out = Mapping::new(
        first.source_scheme.clone(),
        second.target_scheme.clone(),
        first.fallback_policy,
    );
    let mut warnings = Vec::new();
    let chain = |intermediate: &str| -> Option<String> {
        match second.rules.get(intermediate) {
            Some(c) => Some(c.clone()),
            None => match second.fallback_policy {
                FallbackPolicy::Fail => None,
                FallbackPolicy::Passthrough => Some(intermediate.to_string()),
                FallbackPolicy::UnknownTag => Some(UNKNOWN_TAG.to_string()),
            },
        }
    };
    for (a, b) in &first.rules {
        match chain(b) {
            Some(c) => {
                out.rules.insert(a.clone(), c);
            }
            None => warnings.push(ComposeWarning::DroppedRule {
                source_tag: a.clone(),
                intermediate_tag: b.clone(),
            }),
        }
    }
    for ((word, a), b) in &first.lexicon_exceptions {
        let retargeted = match second.lexicon_exceptions.get(&(word.clone(), b.clone())) {
            Some(c) => Some(c.clone()),
            None => chain(b),
        };
        match retargeted {
            Some(c) => {
                out.lexicon_exceptions.insert((word.clone(), a.clone()), c);
            }
            None => warnings.push(ComposeWarning::DroppedException {
                word: word.clone(),
                source_tag: a.clone(),
                intermediate_tag: b.clone(),
            }),
        }
    }
    Ok((out, warnings))
}

/// One contextual test evaluated against the original source stream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PatchContext {
    PrevTagEquals(String),
    NextTagEquals(String),
    PrevWordEquals(String),
    CurrentWordEquals(String),
}

impl PatchContext {
    pub fn template_token(&self) -> &'static str {
        match self {
            PatchContext::PrevTagEquals(_) => "prev_tag",
            PatchContext::NextTagEquals(_) => "next_tag",
            PatchContext::PrevWordEquals(_) => "prev_word",
            PatchContext::CurrentWordEquals(_) => "cur_word",
        }
    }

    pub fn argument(&self) -> &str {
        match self {
            PatchContext::PrevTagEquals(s)
            | PatchContext::NextTagEquals(s)
            | PatchContext::PrevWordEquals(s)
            | PatchContext::CurrentWordEquals(s) => s,
        }
    }

    pub fn from_parts(template: &str, argument: &str) -> Option<PatchContext> {
        let arg = argument.to_string();
        Some(match template {
            "prev_tag" => PatchContext::PrevTagEquals(arg),
            "next_tag" => PatchContext::NextTagEquals(arg),
            "prev_word" => PatchContext::PrevWordEquals(arg),
            "cur_word" => PatchContext::CurrentWordEquals(arg),
            _ => return None,
        })
    }
}

/// A contextual rewrite refining a mapping: where the source tag base is
/// `from_tag` and `context` holds, the output tag becomes `to_tag`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Patch {
    pub from_tag: String,
    pub to_tag: String,
    pub context: PatchContext,
}

/// Evaluates a patch context at `unit` of the source stream.
pub fn context_matches(stream: &AnnotatedStream, unit: usize, context: &PatchContext) -> bool {
    match context {
        PatchContext::PrevTagEquals(t) => unit > 0 && stream.units[unit - 1].tag.base == *t,
        PatchContext::NextTagEquals(t) => {
            unit + 1 < stream.len() && stream.units[unit + 1].tag.base == *t
        }
        PatchContext::PrevWordEquals(w) => unit > 0 && stream.units[unit - 1].surface() == *w,
        PatchContext::CurrentWordEquals(w) => stream.units[unit].surface() == *w,
    }
}

fn prediction_correct(pred: Option<&str>, gold: &str) -> bool {
    matches!(pred, Some(p) if p == gold && p != UNKNOWN_TAG)
}

/// Greedily learns up to `budget` patches against the gold annotation on the
/// right side of `pac`.
///
/// Training sites are the one-to-one links; candidate patches are
/// instantiated from the four context templates at currently mispredicted
/// sites. Each round accepts the candidate with the largest net error
/// reduction over all sites (ties go to the smallest candidate in patch
/// order) and stops when no candidate has positive net gain.
pub fn learn_patches(pac: &Pac, base: &Mapping, budget: usize) -> Result<Vec<Patch>, MappingError> {
    if pac.left.scheme != base.source_scheme {
        return Err(MappingError::SchemeMismatch {
            expected: base.source_scheme.to_string(),
            found: pac.left.scheme.to_string(),
        });
    }
    if pac.right.scheme != base.target_scheme {
        return Err(MappingError::SchemeMismatch {
            expected: base.target_scheme.to_string(),
            found: pac.right.scheme.to_string(),
        });
    }
    let left = &pac.left;
    let sites: Vec<(usize, String)> = pac
        .links
        .iter()
        .filter(|l| l.left.len() == 1 && l.right.len() == 1)
        .map(|l| {
            (
                l.left.start,
                pac.right.units[l.right.start].tag.base.clone(),
            )
        })
        .collect();
    let mut preds: Vec<Option<String>> = sites
        .iter()
        .map(|(i, _)| {
            let u = &left.units[*i];
            match base.map_tag(&u.surface(), &u.tag.base) {
                Some(t) => Some(t.to_string()),
                None => match base.fallback_policy {
                    FallbackPolicy::Fail => None,
                    FallbackPolicy::Passthrough => Some(u.tag.base.clone()),
                    FallbackPolicy::UnknownTag => Some(UNKNOWN_TAG.to_string()),
                },
            }
        })
        .collect();

    let mut patches = Vec::new();
    while patches.len() < budget {
        let mut candidates: BTreeSet<Patch> = BTreeSet::new();
        for (k, (i, gold)) in sites.iter().enumerate() {
            if prediction_correct(preds[k].as_deref(), gold) || gold == UNKNOWN_TAG {
                continue;
            }
            let i = *i;
            let from_tag = left.units[i].tag.base.clone();
            let mut add = |context: PatchContext| {
                candidates.insert(Patch {
                    from_tag: from_tag.clone(),
                    to_tag: gold.clone(),
                    context,
                });
            };
            if i > 0 {
                add(PatchContext::PrevTagEquals(
                    left.units[i - 1].tag.base.clone(),
                ));
                add(PatchContext::PrevWordEquals(left.units[i - 1].surface()));
            }
            if i + 1 < left.len() {
                add(PatchContext::NextTagEquals(
                    left.units[i + 1].tag.base.clone(),
                ));
            }
            add(PatchContext::CurrentWordEquals(left.units[i].surface()));
        }

        let mut best: Option<(i64, Patch, Vec<usize>)> = None;
        for cand in candidates {
            let mut net = 0i64;
            let mut touched = Vec::new();
            for (k, (i, gold)) in sites.iter().enumerate() {
                if left.units[*i].tag.base != cand.from_tag
                    || !context_matches(left, *i, &cand.context)
                {
                    continue;
                }
                touched.push(k);
                let was = prediction_correct(preds[k].as_deref(), gold);
                let now = cand.to_tag == *gold && cand.to_tag != UNKNOWN_TAG;
                net += i64::from(now) - i64::from(was);
            }
            if best.as_ref().is_none_or(|(b, _, _)| net > *b) {
                best = Some((net, cand, touched));
            }
        }
        match best {
            Some((net, patch, touched)) if net > 0 => {
                for k in touched {
                    preds[k] = Some(patch.to_tag.clone());
                }
                patches.push(patch);
            }
            _ => break,
        }
    }
    Ok(patches)
}

/// Applies the mapping, then each patch in order wherever the source stream
/// satisfies its tag and context tests.
pub fn apply_patches(
    patches: &[Patch],
    mapping: &Mapping,
    stream: &AnnotatedStream,
) -> Result<AnnotatedStream, MappingError> {
    let mut out = apply_mapping(mapping, stream)?;
    for patch in patches {
        for i in 0..stream.len() {
            if stream.units[i].tag.base == patch.from_tag
                && context_matches(stream, i, &patch.context)
            {
                out.units[i].tag.base = patch.to_tag.clone();
            }
        }
    }
    Ok(out)
}

/// Serializes a mapping and its patch list: `key=value` headers, then
/// `rule`, `patch`, and `lex` rows (rules and exceptions sorted, patches in
/// application order).
pub fn write_mapping_file(mapping: &Mapping, patches: &[Patch]) -> String {
    let mut out = String::new();
    out.push_str(&format!("source={}\n", mapping.source_scheme));
    out.push_str(&format!("target={}\n", mapping.target_scheme));
    out.push_str(&format!("fallback={}\n", mapping.fallback_policy.token()));
    for (src, tgt) in &mapping.rules {
        out.push_str(&format!("rule\t{src}\t{tgt}\n"));
    }
    for p in patches {
        out.push_str(&format!(
            "patch\t{}\t{}\t{}\t{}\n",
            p.from_tag,
            p.to_tag,
            p.context.template_token(),
            p.context.argument()
        ));
    }
    for ((word, src), tgt) in &mapping.lexicon_exceptions {
        out.push_str(&format!("lex\t{word}\t{src}\t{tgt}\n"));
    }
    out
}

/// Parses the form written by [`write_mapping_file`].
pub fn parse_mapping_file(text: &str) -> Result<(Mapping, Vec<Patch>), MappingError> {
    let mut source: Option<SchemeId> = None;
    let mut target: Option<SchemeId> = None;
    let mut fallback: Option<FallbackPolicy> = None;
    let mut rules: BTreeMap<String, String> = BTreeMap::new();
    let mut lexicon: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut patches: Vec<Patch> = Vec::new();

    let err = |line: usize, reason: String| MappingError::Parse { line, reason };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("source=") {
            source = Some(v.parse().map_err(|e| err(line_no, format!("{e}")))?);
            continue;
        }
        if let Some(v) = line.strip_prefix("target=") {
            target = Some(v.parse().map_err(|e| err(line_no, format!("{e}")))?);
            continue;
        }
        if let Some(v) = line.strip_prefix("fallback=") {
            fallback = Some(
                FallbackPolicy::from_token(v)
                    .ok_or_else(|| err(line_no, format!("unknown fallback policy {v:?}")))?,
            );
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "rule" => {
                if fields.len() != 3 {
                    return Err(err(line_no, "rule rows take 3 fields".to_string()));
                }
                if fields[2] == NULL_TAG {
                    return Err(err(
                        line_no,
                        "a rule may not target the null pseudo-tag".to_string(),
                    ));
                }
                if rules
                    .insert(fields[1].to_string(), fields[2].to_string())
                    .is_some()
                {
                    return Err(err(line_no, format!("duplicate rule for {}", fields[1])));
                }
            }
            "patch" => {
                if fields.len() != 5 {
                    return Err(err(line_no, "patch rows take 5 fields".to_string()));
                }
                let context = PatchContext::from_parts(fields[3], fields[4])
                    .ok_or_else(|| err(line_no, format!("unknown template {:?}", fields[3])))?;
                patches.push(Patch {
                    from_tag: fields[1].to_string(),
                    to_tag: fields[2].to_string(),
                    context,
                });
            }
            "lex" => {
                if fields.len() != 4 {
                    return Err(err(line_no, "lex rows take 4 fields".to_string()));
                }
                if lexicon
                    .insert(
                        (fields[1].to_string(), fields[2].to_string()),
                        fields[3].to_string(),
                    )
                    .is_some()
                {
                    return Err(err(
                        line_no,
                        format!("duplicate exception for ({}, {})", fields[1], fields[2]),
                    ));
                }
            }
            other => {
                return Err(err(line_no, format!("unknown row kind {other:?}")));
            }
        }
    }

    let mapping = Mapping {
        source_scheme: source.ok_or_else(|| err(0, "missing `source=` header".to_string()))?,
        target_scheme: target.ok_or_else(|| err(0, "missing `target=` header".to_string()))?,
        rules,
        lexicon_exceptions: lexicon,
        fallback_policy: fallback
            .ok_or_else(|| err(0, "missing `fallback=` header".to_string()))?,
    };
    Ok((mapping, patches))
}
