//! Support code shared by the integration test targets: an independent
//! minimum-edit-distance alignment oracle, an exhaustive mapping enumerator,
//! and small construction helpers.

#![allow(dead_code)]
// The oracles below keep the explicit index form of their recurrences so they
// can be checked against the definitions by eye.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use tagmap_core::{AnnotatedStream, Link, LinkKind, Pac, SchemeId, Span};

pub fn scheme(name: &str) -> SchemeId {
    SchemeId::new(name).unwrap()
}

pub fn stream(name: &str, text: &str) -> AnnotatedStream {
    tagmap_core::parse_vertical(text, scheme(name)).unwrap()
}

/// Plain full-matrix Levenshtein distance, written independently of the
/// library's implementation.
fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

const PAIR_EXACT: u64 = 0;
const PAIR_REPAIRED: u64 = 1;
const GAP: u64 = 2;
const FORBIDDEN: u64 = 1_000_000;

fn pair_cost(a: &str, b: &str) -> u64 {
    if a == b {
        PAIR_EXACT
    } else if a.to_lowercase() == b.to_lowercase() || levenshtein(a, b) <= 2 {
        PAIR_REPAIRED
    } else {
        FORBIDDEN
    }
}

/// Global minimum-edit-distance alignment over unit surfaces: pairs cost 0
/// (equal) or 1 (case or ≤2-edit difference), unpairable surfaces are
/// effectively forbidden, and a skipped unit costs 2. Used as an oracle
/// for one-to-one-plus-null alignments; it never produces split or merge
/// links.
pub fn med_align(left: &AnnotatedStream, right: &AnnotatedStream) -> Vec<Link> {
    let ls: Vec<String> = left.units.iter().map(|u| u.surface()).collect();
    let rs: Vec<String> = right.units.iter().map(|u| u.surface()).collect();
    let n = ls.len();
    let m = rs.len();
    let mut dp = vec![vec![0u64; m + 1]; n + 1];
    for i in 0..=n {
        dp[i][0] = i as u64 * GAP;
    }
    for j in 0..=m {
        dp[0][j] = j as u64 * GAP;
    }
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = (dp[i - 1][j - 1] + pair_cost(&ls[i - 1], &rs[j - 1]))
                .min(dp[i - 1][j] + GAP)
                .min(dp[i][j - 1] + GAP);
        }
    }

    let mut rev: Vec<Link> = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + pair_cost(&ls[i - 1], &rs[j - 1]) {
            let kind = if ls[i - 1] == rs[j - 1] {
                LinkKind::Match
            } else if ls[i - 1].to_lowercase() == rs[j - 1].to_lowercase() {
                LinkKind::CaseMatch
            } else {
                LinkKind::Fuzzy
            };
            rev.push(Link {
                left: Span::single(i - 1),
                right: Span::single(j - 1),
                kind,
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[i][j] == dp[i - 1][j] + GAP {
            rev.push(Link {
                left: Span::single(i - 1),
                right: Span::empty_at(j),
                kind: LinkKind::NullRight,
            });
            i -= 1;
        } else {
            rev.push(Link {
                left: Span::empty_at(i),
                right: Span::single(j - 1),
                kind: LinkKind::NullLeft,
            });
            j -= 1;
        }
    }
    rev.reverse();
    // Canonical empty-side positions: each empty span sits at the next
    // unconsumed index of its side.
    let (mut next_l, mut next_r) = (0, 0);
    for link in &mut rev {
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
    rev
}

/// All total functions from `sources` to `targets`, i.e. every deterministic
/// tag→tag mapping over the given alphabets.
pub fn enumerate_total_rule_sets(
    sources: &[String],
    targets: &[String],
) -> Vec<BTreeMap<String, String>> {
    let mut out = Vec::new();
    let k = sources.len();
    let t = targets.len();
    if t == 0 {
        return out;
    }
    let total = t.pow(k as u32);
    for code in 0..total {
        let mut rules = BTreeMap::new();
        let mut c = code;
        for s in sources {
            rules.insert(s.clone(), targets[c % t].clone());
            c /= t;
        }
        out.push(rules);
    }
    out
}

/// Fraction of one-to-one links whose right-side tag base equals the rule
/// target of the left-side tag base; links with an unmapped source count as
/// wrong.
pub fn rule_set_accuracy(pac: &Pac, rules: &BTreeMap<String, String>) -> f64 {
    let mut total = 0u64;
    let mut hits = 0u64;
    for link in &pac.links {
        if link.left.len() == 1 && link.right.len() == 1 {
            total += 1;
            let src = &pac.left.units[link.left.start].tag.base;
            let gold = &pac.right.units[link.right.start].tag.base;
            if rules.get(src) == Some(gold) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// The spans of `truth` that also occur in `found` (same left and right
/// spans), counted for recovery statistics.
pub fn recovered_links(truth: &[Link], found: &[Link]) -> usize {
    let found_spans: std::collections::BTreeSet<(Span, Span)> =
        found.iter().map(|l| (l.left, l.right)).collect();
    truth
        .iter()
        .filter(|l| found_spans.contains(&(l.left, l.right)))
        .count()
}
