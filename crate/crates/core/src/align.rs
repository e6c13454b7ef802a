//! Island-driven alignment of two annotated streams over the same text.
//!
//! Surfaces occurring exactly once in both streams are *anchors* (islands);
//! the longest strictly-increasing subsequence of anchor pairs fixes a
//! skeleton of one-to-one links, and the gaps between anchors are resolved
//! from both ends inward by a fixed repair cascade: exact match, case-folded
//! match, escape-decoded match, enclitic split, compound merge, fuzzy match
//! (edit distance <= 2 within a small look-ahead window), and finally null
//! links. The fuzzy step resynchronizes on the nearest exactly-equal pair
//! inside its window when one exists — an equal pair past the frontier is
//! strong evidence the units before it are extra — and pairs or nulls the
//! skipped units by minimal repair cost. The result is a parallel annotated
//! corpus ([`Pac`]): a pair of streams plus a complete, monotone set of
//! links.
//!
//! [`render_pac`] and [`parse_pac`] define the canonical on-disk PAC format:
//! one row per link with columns token, left tag, right tag, separated by
//! runs of at least two spaces. Null-right rows have no third column; a `-`
//! in the middle column marks a null-left row; multi-unit sides join their
//! tags with `+`; a pair whose two surfaces differ (case, escape or fuzzy
//! repairs) writes both as `left|right` in the token column. Sentence
//! boundaries render as dash rows with a `---` cell per side that has the
//! break. Link kinds are not stored: they are re-derived from row content by
//! the same classification the aligner uses, so parsing inverts rendering.
//! Tokens containing `|` or double spaces and tags containing `+` or double
//! spaces are outside the format's domain.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{
    parse_tag_label, AnnotatedStream, CorpusError, SchemeId, TagLabel, TaggedUnit,
};
use crate::normalize::{decode_escapes, default_entities};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("invalid alignment config: {0}")]
    InvalidConfig(String),
    #[error(
        "alignment failed: {nulls} of {total} units unlinked ({fraction:.1}% > {limit:.1}% allowed); \
         worst gap pairs left units {left_start}..{left_end} with right units {right_start}..{right_end}"
    )]
    TooManyNulls {
        nulls: usize,
        total: usize,
        fraction: f64,
        limit: f64,
        left_start: usize,
        left_end: usize,
        right_start: usize,
        right_end: usize,
    },
    #[error("PAC line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Half-open run of unit indices on one side of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn single(index: usize) -> Span {
        Span::new(index, index + 1)
    }

    pub fn empty_at(pos: usize) -> Span {
        Span::new(pos, pos)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkKind {
    Match,
    CaseMatch,
    Split,
    Merge,
    Fuzzy,
    NullLeft,
    NullRight,
}

impl LinkKind {
    /// Stable lowercase token used in link files.
    pub fn token(self) -> &'static str {
        match self {
            LinkKind::Match => "match",
            LinkKind::CaseMatch => "case_match",
            LinkKind::Split => "split",
            LinkKind::Merge => "merge",
            LinkKind::Fuzzy => "fuzzy",
            LinkKind::NullLeft => "null_left",
            LinkKind::NullRight => "null_right",
        }
    }

    pub fn from_token(s: &str) -> Option<LinkKind> {
        Some(match s {
            "match" => LinkKind::Match,
            "case_match" => LinkKind::CaseMatch,
            "split" => LinkKind::Split,
            "merge" => LinkKind::Merge,
            "fuzzy" => LinkKind::Fuzzy,
            "null_left" => LinkKind::NullLeft,
            "null_right" => LinkKind::NullRight,
            _ => return None,
        })
    }

    pub fn is_null(self) -> bool {
        matches!(self, LinkKind::NullLeft | LinkKind::NullRight)
    }
}

/// A correspondence between a run of left units and a run of right units.
/// At most one side is empty; an empty left side is a `null_left` link
/// (right-only unit), an empty right side a `null_right` link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub left: Span,
    pub right: Span,
    pub kind: LinkKind,
}

impl Link {
    fn one_to_one(l: usize, r: usize, kind: LinkKind) -> Link {
        Link {
            left: Span::single(l),
            right: Span::single(r),
            kind,
        }
    }

    fn null_right(l: usize, r_pos: usize) -> Link {
        Link {
            left: Span::single(l),
            right: Span::empty_at(r_pos),
            kind: LinkKind::NullRight,
        }
    }

    fn null_left(l_pos: usize, r: usize) -> Link {
        Link {
            left: Span::empty_at(l_pos),
            right: Span::single(r),
            kind: LinkKind::NullLeft,
        }
    }
}

/// A surface occurring exactly once in each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub left_index: usize,
    pub right_index: usize,
    pub surface: String,
}

/// Which side of a PAC a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A sentence boundary present on one side only, dropped from alignment but
/// reported for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryDiscrepancy {
    /// Index of the link after which the one-sided boundary occurs.
    pub link: usize,
    /// The side that has the boundary.
    pub side: Side,
}

/// A parallel annotated corpus: two streams over the same text plus links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pac {
    pub left: AnnotatedStream,
    pub right: AnnotatedStream,
    pub links: Vec<Link>,
}

impl Pac {
    /// Checks completeness (every unit index on each side appears in exactly
    /// one link), monotonicity (non-empty spans strictly increase on both
    /// sides), and kind/shape agreement.
    pub fn validate(&self) -> Result<(), String> {
        let mut next_l = 0usize;
        let mut next_r = 0usize;
        for (i, link) in self.links.iter().enumerate() {
            if link.left.start != next_l && !link.left.is_empty() {
                return Err(format!(
                    "link {i}: left span starts at {} but {} units consumed",
                    link.left.start, next_l
                ));
            }
            if link.right.start != next_r && !link.right.is_empty() {
                return Err(format!(
                    "link {i}: right span starts at {} but {} units consumed",
                    link.right.start, next_r
                ));
            }
            if link.left.is_empty() && link.right.is_empty() {
                return Err(format!("link {i}: both sides empty"));
            }
            let shape_ok = match link.kind {
                LinkKind::Match | LinkKind::CaseMatch | LinkKind::Fuzzy => {
                    link.left.len() == 1 && link.right.len() == 1
                }
                LinkKind::Split => link.left.len() == 1 && link.right.len() >= 2,
                LinkKind::Merge => link.left.len() >= 2 && link.right.len() == 1,
                LinkKind::NullLeft => link.left.is_empty() && !link.right.is_empty(),
                LinkKind::NullRight => !link.left.is_empty() && link.right.is_empty(),
            };
            if !shape_ok {
                return Err(format!(
                    "link {i}: kind {:?} does not fit spans {:?}/{:?}",
                    link.kind, link.left, link.right
                ));
            }
            next_l = link.left.end.max(next_l);
            next_r = link.right.end.max(next_r);
        }
        if next_l != self.left.len() || next_r != self.right.len() {
            return Err(format!(
                "links cover {next_l}/{} left and {next_r}/{} right units",
                self.left.len(),
                self.right.len()
            ));
        }
        Ok(())
    }

    /// Sentence boundaries present after a link on one side only.
    pub fn boundary_discrepancies(&self) -> Vec<BoundaryDiscrepancy> {
        let mut out = Vec::new();
        for (i, link) in self.links.iter().enumerate() {
            let (lb, rb) = link_breaks(self, link);
            if lb && !rb {
                out.push(BoundaryDiscrepancy {
                    link: i,
                    side: Side::Left,
                });
            } else if rb && !lb {
                out.push(BoundaryDiscrepancy {
                    link: i,
                    side: Side::Right,
                });
            }
        }
        out
    }
}

/// Whether each side has a sentence break immediately after `link`.
fn link_breaks(pac: &Pac, link: &Link) -> (bool, bool) {
    let lb = !link.left.is_empty() && pac.left.sentence_breaks.contains(&(link.left.end - 1));
    let rb = !link.right.is_empty() && pac.right.sentence_breaks.contains(&(link.right.end - 1));
    (lb, rb)
}

/// Repair cascade and failure-tolerance settings for [`align`].
#[derive(Debug, Clone)]
pub struct AlignConfig {
    /// Fraction of units (both sides pooled) allowed to end up in null links
    /// before alignment fails.
    pub max_null_fraction: f64,
    /// Entity table for escape-decoded matching.
    pub entities: BTreeMap<String, String>,
    pub repair_case: bool,
    pub repair_escape: bool,
    pub repair_enclitic: bool,
    pub repair_compound: bool,
    pub repair_fuzzy: bool,
    /// Maximum character edit distance for a fuzzy pair.
    pub fuzzy_max_edits: usize,
    /// How many units past the frontier a fuzzy pair may be sought.
    pub fuzzy_window: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            max_null_fraction: 0.30,
            entities: default_entities(),
            repair_case: true,
            repair_escape: true,
            repair_enclitic: true,
            repair_compound: true,
            repair_fuzzy: true,
            fuzzy_max_edits: 2,
            fuzzy_window: 3,
        }
    }
}

fn surface_of(stream: &AnnotatedStream, index: usize) -> String {
    stream.units[index].surface()
}

/// Finds anchor pairs: surfaces with exactly one occurrence in each stream,
/// restricted to the longest strictly-increasing subsequence of right indices
/// in left-index order so the anchor skeleton is mutually consistent.
pub fn find_anchors(left: &AnnotatedStream, right: &AnnotatedStream) -> Vec<Anchor> {
    fn singleton_positions(stream: &AnnotatedStream) -> BTreeMap<String, usize> {
        let mut seen: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for (i, unit) in stream.units.iter().enumerate() {
            let e = seen.entry(unit.surface()).or_insert((0, i));
            e.0 += 1;
        }
        seen.into_iter()
            .filter(|(_, (count, _))| *count == 1)
            .map(|(surface, (_, index))| (surface, index))
            .collect()
    }

    let left_singletons = singleton_positions(left);
    let right_singletons = singleton_positions(right);

    let mut pairs: Vec<(usize, usize, &str)> = left_singletons
        .iter()
        .filter_map(|(surface, &l)| {
            right_singletons
                .get(surface)
                .map(|&r| (l, r, surface.as_str()))
        })
        .collect();
    pairs.sort_unstable_by_key(|&(l, _, _)| l);

    // Longest strictly increasing subsequence on right indices.
    let mut tails: Vec<usize> = Vec::new(); // indices into `pairs`
    let mut parent: Vec<Option<usize>> = vec![None; pairs.len()];
    for k in 0..pairs.len() {
        let r = pairs[k].1;
        let pos = tails.partition_point(|&t| pairs[t].1 < r);
        if pos > 0 {
            parent[k] = Some(tails[pos - 1]);
        }
        if pos == tails.len() {
            tails.push(k);
        } else {
            tails[pos] = k;
        }
    }
    let mut chain = Vec::new();
    let mut cur = tails.last().copied();
    while let Some(k) = cur {
        chain.push(k);
        cur = parent[k];
    }
    chain.reverse();
    chain
        .into_iter()
        .map(|k| Anchor {
            left_index: pairs[k].0,
            right_index: pairs[k].1,
            surface: pairs[k].2.to_string(),
        })
        .collect()
}

/// Character-level Levenshtein distance.
pub fn char_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Kind of a one-to-one pair, derived from its two surfaces. Shared by the
/// aligner and the PAC parser so that rendering and parsing agree on kinds.
fn classify_pair(l: &str, r: &str, entities: &BTreeMap<String, String>) -> LinkKind {
    if l == r {
        LinkKind::Match
    } else if l.to_lowercase() == r.to_lowercase() {
        LinkKind::CaseMatch
    } else if decode_escapes(l, entities) == decode_escapes(r, entities) {
        LinkKind::Match
    } else {
        LinkKind::Fuzzy
    }
}

/// Do `first ++ second` (directly or space-joined) spell `whole`?
fn parts_join_to(first: &str, second: &str, whole: &str) -> bool {
    whole.len() >= first.len() + second.len()
        && whole.starts_with(first)
        && whole.ends_with(second)
        && (whole.len() == first.len() + second.len()
            || (whole.len() == first.len() + second.len() + 1
                && whole.as_bytes()[first.len()] == b' '))
}

struct GapState {
    lo_l: usize,
    hi_l: usize,
    lo_r: usize,
    hi_r: usize,
    front: Vec<Link>,
    back: Vec<Link>,
}

/// Tries the repair cascade at the front frontier; pushes links and advances
/// on success.
fn try_front(
    left: &AnnotatedStream,
    right: &AnnotatedStream,
    cfg: &AlignConfig,
    gap: &mut GapState,
) -> bool {
    let sl = surface_of(left, gap.lo_l);
    let sr = surface_of(right, gap.lo_r);
    if sl == sr {
        gap.front
            .push(Link::one_to_one(gap.lo_l, gap.lo_r, LinkKind::Match));
        gap.lo_l += 1;
        gap.lo_r += 1;
        return true;
    }
    if cfg.repair_case && sl.to_lowercase() == sr.to_lowercase() {
        gap.front
            .push(Link::one_to_one(gap.lo_l, gap.lo_r, LinkKind::CaseMatch));
        gap.lo_l += 1;
        gap.lo_r += 1;
        return true;
    }
    if cfg.repair_escape && decode_escapes(&sl, &cfg.entities) == decode_escapes(&sr, &cfg.entities)
    {
        gap.front
            .push(Link::one_to_one(gap.lo_l, gap.lo_r, LinkKind::Match));
        gap.lo_l += 1;
        gap.lo_r += 1;
        return true;
    }
    if cfg.repair_enclitic && gap.lo_r + 1 < gap.hi_r {
        let sr2 = surface_of(right, gap.lo_r + 1);
        if parts_join_to(&sr, &sr2, &sl) {
            gap.front.push(Link {
                left: Span::single(gap.lo_l),
                right: Span::new(gap.lo_r, gap.lo_r + 2),
                kind: LinkKind::Split,
            });
            gap.lo_l += 1;
            gap.lo_r += 2;
            return true;
        }
    }
    if cfg.repair_compound && gap.lo_l + 1 < gap.hi_l {
        let sl2 = surface_of(left, gap.lo_l + 1);
        if parts_join_to(&sl, &sl2, &sr) {
            gap.front.push(Link {
                left: Span::new(gap.lo_l, gap.lo_l + 2),
                right: Span::single(gap.lo_r),
                kind: LinkKind::Merge,
            });
            gap.lo_l += 2;
            gap.lo_r += 1;
            return true;
        }
    }
    if cfg.repair_fuzzy {
        let resync = fuzzy_resync(
            cfg,
            gap.hi_l - gap.lo_l,
            gap.hi_r - gap.lo_r,
            false,
            &|i| surface_of(left, gap.lo_l + i),
            &|j| surface_of(right, gap.lo_r + j),
        );
        if let Some((i, j, shape)) = resync {
            let block = pair_block(left, right, gap.lo_l, i, gap.lo_r, j, cfg);
            gap.front.extend(block);
            let a = surface_of(left, gap.lo_l + i);
            let b = surface_of(right, gap.lo_r + j);
            match shape {
                ResyncShape::Pair => {
                    gap.front.push(Link::one_to_one(
                        gap.lo_l + i,
                        gap.lo_r + j,
                        classify_pair(&a, &b, &cfg.entities),
                    ));
                    gap.lo_l += i + 1;
                    gap.lo_r += j + 1;
                }
                ResyncShape::Split => {
                    gap.front.push(Link {
                        left: Span::single(gap.lo_l + i),
                        right: Span::new(gap.lo_r + j, gap.lo_r + j + 2),
                        kind: LinkKind::Split,
                    });
                    gap.lo_l += i + 1;
                    gap.lo_r += j + 2;
                }
                ResyncShape::Merge => {
                    gap.front.push(Link {
                        left: Span::new(gap.lo_l + i, gap.lo_l + i + 2),
                        right: Span::single(gap.lo_r + j),
                        kind: LinkKind::Merge,
                    });
                    gap.lo_l += i + 2;
                    gap.lo_r += j + 1;
                }
            }
            return true;
        }
    }
    false
}

/// What the fuzzy repair resynchronized on inside its look-ahead window.
enum ResyncShape {
    /// One left unit against one right unit.
    Pair,
    /// The left unit at the offset against two consecutive right units.
    Split,
    /// Two consecutive left units against the right unit at the offset.
    Merge,
}

/// Picks the resynchronization point for the fuzzy repair inside the
/// look-ahead window. A first pass looks for strong evidence that the units
/// before an offset are extra: surfaces equal under the exact, case or escape
/// repairs, or a clean two-token split/merge junction. Failing that, a second
/// pass takes the admissible fuzzy pair with the smallest length-normalized
/// edit distance (a two-edit change of a long word beats a two-edit change of
/// a two-letter word), nearest first on ties. Offsets are ordered by total
/// skip, then left skip, and count inward from the frontier; `backwards`
/// flips the in-text order of junction partners for the gap's back end.
fn fuzzy_resync(
    cfg: &AlignConfig,
    l_rem: usize,
    r_rem: usize,
    backwards: bool,
    l_surface: &dyn Fn(usize) -> String,
    r_surface: &dyn Fn(usize) -> String,
) -> Option<(usize, usize, ResyncShape)> {
    let li = l_rem.min(cfg.fuzzy_window);
    let rj = r_rem.min(cfg.fuzzy_window);
    let mut offsets: Vec<(usize, usize)> =
        (0..li).flat_map(|i| (0..rj).map(move |j| (i, j))).collect();
    offsets.sort_unstable_by_key(|&(i, j)| (i + j, i));
    for &(i, j) in &offsets {
        let a = l_surface(i);
        let b = r_surface(j);
        if a == b
            || (cfg.repair_case && a.to_lowercase() == b.to_lowercase())
            || (cfg.repair_escape
                && decode_escapes(&a, &cfg.entities) == decode_escapes(&b, &cfg.entities))
        {
            return Some((i, j, ResyncShape::Pair));
        }
        if cfg.repair_enclitic && j + 1 < r_rem {
            let b2 = r_surface(j + 1);
            let (first, second) = if backwards { (&b2, &b) } else { (&b, &b2) };
            if parts_join_to(first, second, &a) {
                return Some((i, j, ResyncShape::Split));
            }
        }
        if cfg.repair_compound && i + 1 < l_rem {
            let a2 = l_surface(i + 1);
            let (first, second) = if backwards { (&a2, &a) } else { (&a, &a2) };
            if parts_join_to(first, second, &b) {
                return Some((i, j, ResyncShape::Merge));
            }
        }
    }
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for &(i, j) in &offsets {
        let a = l_surface(i);
        let b = r_surface(j);
        let d = char_edit_distance(&a, &b);
        if d <= cfg.fuzzy_max_edits {
            let m = a.chars().count().max(b.chars().count()).max(1);
            // d/m < best_d/best_m by exact cross-multiplication; ties keep
            // the earlier (nearer) candidate.
            let better = match best {
                None => true,
                Some((bd, bm, _, _)) => d * bm < bd * m,
            };
            if better {
                best = Some((d, m, i, j));
            }
        }
    }
    best.map(|(_, _, i, j)| (i, j, ResyncShape::Pair))
}

/// Resolves the units skipped over by a window resynchronization: a minimal
/// repair-cost pairing of `ln` left units starting at `l0` against `rn` right
/// units starting at `r0`, using case/fuzzy pairs where admissible and nulls
/// otherwise. Links come back in position order.
fn pair_block(
    left: &AnnotatedStream,
    right: &AnnotatedStream,
    l0: usize,
    ln: usize,
    r0: usize,
    rn: usize,
    cfg: &AlignConfig,
) -> Vec<Link> {
    const NULL_COST: u32 = 4;
    let pair_cost = |a: usize, b: usize| -> Option<u32> {
        let sa = surface_of(left, l0 + a);
        let sb = surface_of(right, r0 + b);
        let d = char_edit_distance(&sa, &sb);
        if d <= cfg.fuzzy_max_edits {
            // Length-normalized: a small edit on a long word is cheap.
            let m = sa.chars().count().max(sb.chars().count()).max(1);
            Some(2 + (4 * d / m) as u32)
        } else {
            None
        }
    };
    // dp[a][b]: minimal cost to resolve left[a..ln] against right[b..rn].
    let mut dp = vec![vec![u32::MAX; rn + 1]; ln + 1];
    let mut step = vec![vec![0u8; rn + 1]; ln + 1];
    for a in (0..=ln).rev() {
        for b in (0..=rn).rev() {
            if a == ln && b == rn {
                dp[a][b] = 0;
                continue;
            }
            // Candidate order resolves cost ties: pair first, then null on
            // the side with more units remaining, then the left side.
            let mut candidates: Vec<(u32, u8)> = Vec::with_capacity(3);
            if a < ln && b < rn {
                if let Some(c) = pair_cost(a, b) {
                    candidates.push((c + dp[a + 1][b + 1], 0));
                }
            }
            let null_right = (a < ln).then(|| (NULL_COST + dp[a + 1][b], 1u8));
            let null_left = (b < rn).then(|| (NULL_COST + dp[a][b + 1], 2u8));
            if ln - a >= rn - b {
                candidates.extend(null_right);
                candidates.extend(null_left);
            } else {
                candidates.extend(null_left);
                candidates.extend(null_right);
            }
            for (cost, mv) in candidates {
                if cost < dp[a][b] {
                    dp[a][b] = cost;
                    step[a][b] = mv;
                }
            }
        }
    }
    let mut links = Vec::new();
    let (mut a, mut b) = (0, 0);
    while a < ln || b < rn {
        match step[a][b] {
            0 => {
                let sa = surface_of(left, l0 + a);
                let sb = surface_of(right, r0 + b);
                links.push(Link::one_to_one(
                    l0 + a,
                    r0 + b,
                    classify_pair(&sa, &sb, &cfg.entities),
                ));
                a += 1;
                b += 1;
            }
            1 => {
                links.push(Link::null_right(l0 + a, r0 + b));
                a += 1;
            }
            _ => {
                links.push(Link::null_left(l0 + a, r0 + b));
                b += 1;
            }
        }
    }
    links
}

/// Mirror of [`try_front`] at the back frontier. Links are pushed to
/// `gap.back` in reverse position order; the caller reverses the list once
/// the gap is finished.
fn try_back(
    left: &AnnotatedStream,
    right: &AnnotatedStream,
    cfg: &AlignConfig,
    gap: &mut GapState,
) -> bool {
    let bl = gap.hi_l - 1;
    let br = gap.hi_r - 1;
    let sl = surface_of(left, bl);
    let sr = surface_of(right, br);
    if sl == sr {
        gap.back.push(Link::one_to_one(bl, br, LinkKind::Match));
        gap.hi_l -= 1;
        gap.hi_r -= 1;
        return true;
    }
    if cfg.repair_case && sl.to_lowercase() == sr.to_lowercase() {
        gap.back.push(Link::one_to_one(bl, br, LinkKind::CaseMatch));
        gap.hi_l -= 1;
        gap.hi_r -= 1;
        return true;
    }
    if cfg.repair_escape && decode_escapes(&sl, &cfg.entities) == decode_escapes(&sr, &cfg.entities)
    {
        gap.back.push(Link::one_to_one(bl, br, LinkKind::Match));
        gap.hi_l -= 1;
        gap.hi_r -= 1;
        return true;
    }
    if cfg.repair_enclitic && br > gap.lo_r {
        let sr1 = surface_of(right, br - 1);
        if parts_join_to(&sr1, &sr, &sl) {
            gap.back.push(Link {
                left: Span::single(bl),
                right: Span::new(br - 1, br + 1),
                kind: LinkKind::Split,
            });
            gap.hi_l -= 1;
            gap.hi_r -= 2;
            return true;
        }
    }
    if cfg.repair_compound && bl > gap.lo_l {
        let sl1 = surface_of(left, bl - 1);
        if parts_join_to(&sl1, &sl, &sr) {
            gap.back.push(Link {
                left: Span::new(bl - 1, bl + 1),
                right: Span::single(br),
                kind: LinkKind::Merge,
            });
            gap.hi_l -= 2;
            gap.hi_r -= 1;
            return true;
        }
    }
    if cfg.repair_fuzzy {
        let resync = fuzzy_resync(
            cfg,
            gap.hi_l - gap.lo_l,
            gap.hi_r - gap.lo_r,
            true,
            &|i| surface_of(left, bl - i),
            &|j| surface_of(right, br - j),
        );
        if let Some((i, j, shape)) = resync {
            let a = surface_of(left, bl - i);
            let b = surface_of(right, br - j);
            // Forward position order: the resynchronized link, then the
            // skipped block after it; pushed reversed so the caller's final
            // reversal restores order.
            let mut chunk = Vec::new();
            match shape {
                ResyncShape::Pair => {
                    chunk.push(Link::one_to_one(
                        bl - i,
                        br - j,
                        classify_pair(&a, &b, &cfg.entities),
                    ));
                    gap.hi_l -= i + 1;
                    gap.hi_r -= j + 1;
                }
                ResyncShape::Split => {
                    chunk.push(Link {
                        left: Span::single(bl - i),
                        right: Span::new(br - j - 1, br - j + 1),
                        kind: LinkKind::Split,
                    });
                    gap.hi_l -= i + 1;
                    gap.hi_r -= j + 2;
                }
                ResyncShape::Merge => {
                    chunk.push(Link {
                        left: Span::new(bl - i - 1, bl - i + 1),
                        right: Span::single(br - j),
                        kind: LinkKind::Merge,
                    });
                    gap.hi_l -= i + 2;
                    gap.hi_r -= j + 1;
                }
            }
            chunk.extend(pair_block(left, right, bl - i + 1, i, br - j + 1, j, cfg));
            gap.back.extend(chunk.into_iter().rev());
            return true;
        }
    }
    false
}

/// Resolves one inter-anchor gap; returns its links and the number of units
/// that ended up in null links.
fn resolve_gap(
    left: &AnnotatedStream,
    right: &AnnotatedStream,
    l_span: Span,
    r_span: Span,
    cfg: &AlignConfig,
) -> (Vec<Link>, usize) {
    let mut gap = GapState {
        lo_l: l_span.start,
        hi_l: l_span.end,
        lo_r: r_span.start,
        hi_r: r_span.end,
        front: Vec::new(),
        back: Vec::new(),
    };
    loop {
        let l_rem = gap.hi_l - gap.lo_l;
        let r_rem = gap.hi_r - gap.lo_r;
        if l_rem == 0 && r_rem == 0 {
            break;
        }
        if l_rem == 0 {
            for r in gap.lo_r..gap.hi_r {
                gap.front.push(Link::null_left(gap.lo_l, r));
            }
            gap.lo_r = gap.hi_r;
            continue;
        }
        if r_rem == 0 {
            for l in gap.lo_l..gap.hi_l {
                gap.front.push(Link::null_right(l, gap.lo_r));
            }
            gap.lo_l = gap.hi_l;
            continue;
        }
        if try_front(left, right, cfg, &mut gap) {
            continue;
        }
        if try_back(left, right, cfg, &mut gap) {
            continue;
        }
        // Nothing resolves at either frontier: emit a single null at the
        // front on the longer remaining side (ties null the left unit).
        if l_rem >= r_rem {
            gap.front.push(Link::null_right(gap.lo_l, gap.lo_r));
            gap.lo_l += 1;
        } else {
            gap.front.push(Link::null_left(gap.lo_l, gap.lo_r));
            gap.lo_r += 1;
        }
    }
    let mut links = gap.front;
    gap.back.reverse();
    links.extend(gap.back);
    let nulls = links
        .iter()
        .filter(|l| l.kind.is_null())
        .map(|l| l.left.len() + l.right.len())
        .sum();
    (links, nulls)
}

/// Rewrites the empty side of every null link to sit at the next unconsumed
/// index of that side, so structurally equal alignments compare equal.
fn canonicalize_null_positions(links: &mut [Link]) {
    let mut next_l = 0;
    let mut next_r = 0;
    for link in links {
        if link.left.is_empty() {
            link.left = Span::empty_at(next_l);
        } else {
            next_l = link.left.end;
        }
        if link.right.is_empty() {
            link.right = Span::empty_at(next_r);
        } else {
            next_r = link.right.end;
        }
    }
}

/// Aligns two streams of the same text into a [`Pac`].
///
/// Fails when more than `max_null_fraction` of all units (both sides pooled)
/// end up in null links; the error reports the gap that contributed the most
/// unlinked units.
pub fn align(
    left: &AnnotatedStream,
    right: &AnnotatedStream,
    cfg: &AlignConfig,
) -> Result<Pac, AlignError> {
    if !(0.0..=1.0).contains(&cfg.max_null_fraction) {
        return Err(AlignError::InvalidConfig(format!(
            "max_null_fraction {} outside [0, 1]",
            cfg.max_null_fraction
        )));
    }
    if cfg.fuzzy_window == 0 {
        return Err(AlignError::InvalidConfig(
            "fuzzy_window must be at least 1".to_string(),
        ));
    }

    let anchors = find_anchors(left, right);
    let mut links: Vec<Link> = Vec::new();
    let mut worst_gap: Option<(usize, Span, Span)> = None;
    let mut null_units = 0usize;
    let mut prev_l = 0usize;
    let mut prev_r = 0usize;

    let ends = anchors
        .iter()
        .map(|a| (a.left_index, a.right_index, true))
        .chain([(left.len(), right.len(), false)]);
    for (al, ar, is_anchor) in ends {
        let l_span = Span::new(prev_l, al);
        let r_span = Span::new(prev_r, ar);
        let (gap_links, gap_nulls) = resolve_gap(left, right, l_span, r_span, cfg);
        null_units += gap_nulls;
        if gap_nulls > 0 && worst_gap.as_ref().is_none_or(|(n, _, _)| gap_nulls > *n) {
            worst_gap = Some((gap_nulls, l_span, r_span));
        }
        links.extend(gap_links);
        if is_anchor {
            links.push(Link::one_to_one(al, ar, LinkKind::Match));
            prev_l = al + 1;
            prev_r = ar + 1;
        }
    }

    let total = left.len() + right.len();
    if total > 0 {
        let fraction = null_units as f64 / total as f64;
        if fraction > cfg.max_null_fraction {
            let (_, l_span, r_span) =
                worst_gap.unwrap_or((0, Span::empty_at(0), Span::empty_at(0)));
            return Err(AlignError::TooManyNulls {
                nulls: null_units,
                total,
                fraction: fraction * 100.0,
                limit: cfg.max_null_fraction * 100.0,
                left_start: l_span.start,
                left_end: l_span.end,
                right_start: r_span.start,
                right_end: r_span.end,
            });
        }
    }

    canonicalize_null_positions(&mut links);
    let pac = Pac {
        left: left.clone(),
        right: right.clone(),
        links,
    };
    debug_assert_eq!(pac.validate(), Ok(()));
    Ok(pac)
}

fn flat_surface(stream: &AnnotatedStream, span: Span) -> String {
    span.iter()
        .map(|i| stream.units[i].surface())
        .collect::<Vec<_>>()
        .join(" ")
}

fn joined_tags(stream: &AnnotatedStream, span: Span) -> String {
    span.iter()
        .map(|i| stream.units[i].tag.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

/// Renders a PAC in the canonical three-column format. Byte-stable: equal
/// PACs render to equal text.
pub fn render_pac(pac: &Pac) -> String {
    let mut rows: Vec<(String, String, Option<String>)> = Vec::new();
    for link in &pac.links {
        let flat_l = flat_surface(&pac.left, link.left);
        let flat_r = flat_surface(&pac.right, link.right);
        let token_cell = if link.left.is_empty() {
            flat_r.clone()
        } else if link.right.is_empty() || flat_r == flat_l {
            flat_l.clone()
        } else {
            format!("{flat_l}|{flat_r}")
        };
        let left_cell = if link.left.is_empty() {
            "-".to_string()
        } else {
            joined_tags(&pac.left, link.left)
        };
        let right_cell = if link.right.is_empty() {
            None
        } else {
            Some(joined_tags(&pac.right, link.right))
        };
        rows.push((token_cell, left_cell, right_cell));
        let (lb, rb) = link_breaks(pac, link);
        if lb || rb {
            rows.push((
                "-----".to_string(),
                if lb { "---" } else { "-" }.to_string(),
                if rb { Some("---".to_string()) } else { None },
            ));
        }
    }

    let w1 = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    let w2 = rows
        .iter()
        .filter(|r| r.2.is_some())
        .map(|r| r.1.chars().count())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (c1, c2, c3) in rows {
        match c3 {
            Some(c3) => {
                out.push_str(&format!("{c1:<w1$}  {c2:<w2$}  {c3}\n"));
            }
            None => {
                out.push_str(&format!("{c1:<w1$}  {c2}\n"));
            }
        }
    }
    out
}

/// Splits a row into cells on runs of two or more spaces.
fn split_cells(line: &str) -> Vec<&str> {
    let mut cells = Vec::new();
    let mut rest = line.trim_end();
    while !rest.is_empty() {
        match rest.find("  ") {
            Some(p) => {
                cells.push(&rest[..p]);
                rest = rest[p..].trim_start_matches(' ');
            }
            None => {
                cells.push(rest);
                rest = "";
            }
        }
    }
    cells
}

/// Splits the words of a token cell across `n` units: all but the last unit
/// take one word, the last takes the rest.
fn distribute_words(
    words: &[String],
    n: usize,
    line: usize,
) -> Result<Vec<Vec<String>>, AlignError> {
    if words.len() < n {
        return Err(AlignError::Parse {
            line,
            reason: format!("{} words cannot fill {} units", words.len(), n),
        });
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k + 1 == n {
            out.push(words[k..].to_vec());
        } else {
            out.push(vec![words[k].clone()]);
        }
    }
    Ok(out)
}

/// Parses canonical PAC text back into a [`Pac`]. Scheme names are supplied
/// by the caller; they are not stored in the file.
pub fn parse_pac(
    text: &str,
    left_scheme: SchemeId,
    right_scheme: SchemeId,
) -> Result<Pac, AlignError> {
    let entities = default_entities();
    let mut left_units: Vec<TaggedUnit> = Vec::new();
    let mut right_units: Vec<TaggedUnit> = Vec::new();
    let mut left_breaks = std::collections::BTreeSet::new();
    let mut right_breaks = std::collections::BTreeSet::new();
    let mut links: Vec<Link> = Vec::new();

    let parse_tags = |cell: &str, line: usize| -> Result<Vec<TagLabel>, AlignError> {
        cell.split('+')
            .map(|t| {
                parse_tag_label(t).map_err(|e| AlignError::Parse {
                    line,
                    reason: e.to_string(),
                })
            })
            .collect()
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let cells = split_cells(line);
        if cells[0] == "-----" {
            if cells.len() > 3 {
                return Err(AlignError::Parse {
                    line: line_no,
                    reason: "boundary row has more than three cells".to_string(),
                });
            }
            for (idx, cell) in cells.iter().enumerate().skip(1) {
                match (*cell, idx) {
                    ("---", 1) => {
                        if let Some(last) = left_units.len().checked_sub(1) {
                            left_breaks.insert(last);
                        }
                    }
                    ("---", 2) => {
                        if let Some(last) = right_units.len().checked_sub(1) {
                            right_breaks.insert(last);
                        }
                    }
                    ("-", _) => {}
                    _ => {
                        return Err(AlignError::Parse {
                            line: line_no,
                            reason: format!("unexpected boundary cell {cell:?}"),
                        });
                    }
                }
            }
            continue;
        }

        if cells.len() < 2 || cells.len() > 3 {
            return Err(AlignError::Parse {
                line: line_no,
                reason: format!("expected 2 or 3 cells, found {}", cells.len()),
            });
        }
        let mut texts = cells[0].split('|');
        let first_text = texts.next().unwrap_or("");
        let second_text = texts.next();
        if texts.next().is_some() {
            return Err(AlignError::Parse {
                line: line_no,
                reason: "token cell has more than one `|`".to_string(),
            });
        }
        let words = |s: &str| -> Vec<String> {
            s.split(' ')
                .filter(|w| !w.is_empty())
                .map(str::to_string)
                .collect()
        };

        if cells.len() == 2 {
            // null_right: left units only.
            if second_text.is_some() {
                return Err(AlignError::Parse {
                    line: line_no,
                    reason: "null row cannot carry two surfaces".to_string(),
                });
            }
            let tags = parse_tags(cells[1], line_no)?;
            let tokens = distribute_words(&words(first_text), tags.len(), line_no)?;
            let start = left_units.len();
            for (tokens, tag) in tokens.into_iter().zip(tags) {
                left_units.push(TaggedUnit {
                    tokens,
                    tag,
                    index: left_units.len(),
                });
            }
            links.push(Link {
                left: Span::new(start, left_units.len()),
                right: Span::empty_at(right_units.len()),
                kind: LinkKind::NullRight,
            });
        } else if cells[1] == "-" {
            // null_left: right units only.
            if second_text.is_some() {
                return Err(AlignError::Parse {
                    line: line_no,
                    reason: "null row cannot carry two surfaces".to_string(),
                });
            }
            let tags = parse_tags(cells[2], line_no)?;
            let tokens = distribute_words(&words(first_text), tags.len(), line_no)?;
            let start = right_units.len();
            for (tokens, tag) in tokens.into_iter().zip(tags) {
                right_units.push(TaggedUnit {
                    tokens,
                    tag,
                    index: right_units.len(),
                });
            }
            links.push(Link {
                left: Span::empty_at(left_units.len()),
                right: Span::new(start, right_units.len()),
                kind: LinkKind::NullLeft,
            });
        } else {
            let left_tags = parse_tags(cells[1], line_no)?;
            let right_tags = parse_tags(cells[2], line_no)?;
            let left_text = first_text;
            let right_text = second_text.unwrap_or(first_text);
            let left_tokens = distribute_words(&words(left_text), left_tags.len(), line_no)?;
            let right_tokens = distribute_words(&words(right_text), right_tags.len(), line_no)?;
            let kind = match (left_tags.len(), right_tags.len()) {
                (1, 1) => classify_pair(left_text, right_text, &entities),
                (1, _) => LinkKind::Split,
                (_, 1) => LinkKind::Merge,
                (l, r) => {
                    return Err(AlignError::Parse {
                        line: line_no,
                        reason: format!("unsupported link shape {l} left x {r} right"),
                    });
                }
            };
            let l_start = left_units.len();
            for (tokens, tag) in left_tokens.into_iter().zip(left_tags) {
                left_units.push(TaggedUnit {
                    tokens,
                    tag,
                    index: left_units.len(),
                });
            }
            let r_start = right_units.len();
            for (tokens, tag) in right_tokens.into_iter().zip(right_tags) {
                right_units.push(TaggedUnit {
                    tokens,
                    tag,
                    index: right_units.len(),
                });
            }
            links.push(Link {
                left: Span::new(l_start, left_units.len()),
                right: Span::new(r_start, right_units.len()),
                kind,
            });
        }
    }

    canonicalize_null_positions(&mut links);
    let left = AnnotatedStream::new(left_scheme, left_units, left_breaks)?;
    let right = AnnotatedStream::new(right_scheme, right_units, right_breaks)?;
    let pac = Pac { left, right, links };
    pac.validate()
        .map_err(|reason| AlignError::Parse { line: 0, reason })?;
    Ok(pac)
}
