//! Synthetic stream-pair generation with known ground truth.
//!
//! Produces a left stream from a fixed ~200-word vocabulary with Zipf-like
//! frequencies (so singleton density is controllable), then derives the
//! right stream by sampling per-unit perturbations — dropped units, splits,
//! merges, case toggles, and character edits — and records the exact link
//! structure as it goes. Tags are drawn from a caller-supplied
//! source-tag → target-tag confusion matrix. All randomness comes from a
//! ChaCha8 generator seeded from the spec, so equal specs give byte-equal
//! output on every platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::align::{Link, LinkKind, Pac, Span};
use crate::corpus::{AnnotatedStream, SchemeId, TagLabel, TaggedUnit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("rate {name} = {value} outside [0, 1]")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("tag {tag}: {reason}")]
    BadDistribution { tag: String, reason: String },
    #[error("tag confusion matrix is empty")]
    EmptyConfusion,
    #[error("length must be at least 1")]
    InvalidLength,
    #[error("divergence spec line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// How the right stream diverges from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSpec {
    /// A left unit's word is cut in two right units.
    pub split_rate: f64,
    /// Two left units become one right unit.
    pub merge_rate: f64,
    /// The right word's first letter flips case.
    pub case_rate: f64,
    /// The left unit has no right counterpart.
    pub null_rate: f64,
    /// The right word differs by one or two character edits.
    pub fuzzy_rate: f64,
    /// Source tag → (target tag, probability); each row sums to 1.
    pub tag_confusion: BTreeMap<String, Vec<(String, f64)>>,
    pub seed: u64,
}

impl DivergenceSpec {
    /// All rates zero and every tag mapped to itself with certainty.
    pub fn identity(tags: impl IntoIterator<Item = String>, seed: u64) -> DivergenceSpec {
        DivergenceSpec {
            split_rate: 0.0,
            merge_rate: 0.0,
            case_rate: 0.0,
            null_rate: 0.0,
            fuzzy_rate: 0.0,
            tag_confusion: tags
                .into_iter()
                .map(|t| (t.clone(), vec![(t, 1.0)]))
                .collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let rates = [
            ("split_rate", self.split_rate),
            ("merge_rate", self.merge_rate),
            ("case_rate", self.case_rate),
            ("null_rate", self.null_rate),
            ("fuzzy_rate", self.fuzzy_rate),
        ];
        for (name, value) in rates {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(GeneratorError::InvalidRate { name, value });
            }
        }
        if self.tag_confusion.is_empty() {
            return Err(GeneratorError::EmptyConfusion);
        }
        for (tag, dist) in &self.tag_confusion {
            if dist.is_empty() {
                return Err(GeneratorError::BadDistribution {
                    tag: tag.clone(),
                    reason: "empty distribution".to_string(),
                });
            }
            if let Some((t, p)) = dist.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
                return Err(GeneratorError::BadDistribution {
                    tag: tag.clone(),
                    reason: format!("probability {p} for {t} outside [0, 1]"),
                });
            }
            let sum: f64 = dist.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(GeneratorError::BadDistribution {
                    tag: tag.clone(),
                    reason: format!("probabilities sum to {sum}, expected 1"),
                });
            }
        }
        Ok(())
    }
}

/// Probability of a sentence break after each link.
const BREAK_RATE: f64 = 0.08;

const CONSONANTS: [char; 12] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const VOCABULARY_SIZE: usize = 200;
/// Zipf exponent for word-frequency weights `(rank + 1)^-EXPONENT`.
const ZIPF_EXPONENT: f64 = 0.6;

/// The fixed generator vocabulary: 60 consonant-vowel syllables followed by
/// two-syllable compounds, 200 word types in all.
pub fn vocabulary() -> Vec<String> {
    let mut syllables = Vec::with_capacity(60);
    for c in CONSONANTS {
        for v in VOWELS {
            syllables.push(format!("{c}{v}"));
        }
    }
    let mut vocab = syllables.clone();
    'fill: for a in &syllables {
        for b in &syllables {
            if vocab.len() >= VOCABULARY_SIZE {
                break 'fill;
            }
            vocab.push(format!("{a}{b}"));
        }
    }
    vocab
}

fn sample_target(dist: &[(String, f64)], rng: &mut ChaCha8Rng) -> String {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (tag, p) in dist {
        acc += p;
        if x < acc {
            return tag.clone();
        }
    }
    dist.last().unwrap().0.clone()
}

fn toggle_first_case(w: &str) -> String {
    let mut chars = w.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        Some(c) if c.is_uppercase() => c.to_lowercase().chain(chars).collect(),
        _ => w.to_string(),
    }
}

/// One or two random character edits that leave the word different even
/// under case folding; `None` when no such word was found.
fn fuzz_word(w: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    for _ in 0..10 {
        let mut chars: Vec<char> = w.chars().collect();
        let edits = rng.gen_range(1..=2);
        for _ in 0..edits {
            let letter = (b'a' + rng.gen_range(0..26u8)) as char;
            match rng.gen_range(0..3) {
                0 => {
                    let at = rng.gen_range(0..chars.len());
                    chars[at] = letter;
                }
                1 => {
                    let at = rng.gen_range(0..=chars.len());
                    chars.insert(at, letter);
                }
                _ if chars.len() > 1 => {
                    let at = rng.gen_range(0..chars.len());
                    chars.remove(at);
                }
                _ => {}
            }
        }
        let candidate: String = chars.into_iter().collect();
        if !candidate.is_empty() && candidate != w && candidate.to_lowercase() != w.to_lowercase() {
            return Some(candidate);
        }
    }
    None
}

enum Step {
    Exact,
    Null,
    Split,
    Merge,
    Case,
    Fuzzy,
}

/// Generates a left stream of `length` units, a perturbed right stream, and
/// the exact link structure relating them.
pub fn generate(spec: &DivergenceSpec, length: usize) -> Result<Pac, GeneratorError> {
    spec.validate()?;
    if length == 0 {
        return Err(GeneratorError::InvalidLength);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary();
    let weights: Vec<f64> = (0..vocab.len())
        .map(|k| ((k + 1) as f64).powf(-ZIPF_EXPONENT))
        .collect();
    let word_dist = WeightedIndex::new(&weights).expect("static weights are valid");
    let sources: Vec<&String> = spec.tag_confusion.keys().collect();

    let mut left_units: Vec<TaggedUnit> = Vec::with_capacity(length);
    let mut right_units: Vec<TaggedUnit> = Vec::new();
    let mut left_breaks: BTreeSet<usize> = BTreeSet::new();
    let mut right_breaks: BTreeSet<usize> = BTreeSet::new();
    let mut links: Vec<Link> = Vec::new();

    let push_left = |units: &mut Vec<TaggedUnit>, tokens: Vec<String>, tag: String| {
        let index = units.len();
        units.push(TaggedUnit {
            tokens,
            tag: TagLabel::plain(tag),
            index,
        });
    };

    while left_units.len() < length {
        let word = vocab[word_dist.sample(&mut rng)].clone();
        let src = sources[rng.gen_range(0..sources.len())].clone();
        let tgt = sample_target(&spec.tag_confusion[&src], &mut rng);

        let step = if rng.gen_bool(spec.null_rate) {
            Step::Null
        } else if rng.gen_bool(spec.split_rate) {
            Step::Split
        } else if rng.gen_bool(spec.merge_rate) {
            Step::Merge
        } else if rng.gen_bool(spec.case_rate) {
            Step::Case
        } else if rng.gen_bool(spec.fuzzy_rate) {
            Step::Fuzzy
        } else {
            Step::Exact
        };

        let l = left_units.len();
        let r = right_units.len();
        match step {
            Step::Null => {
                push_left(&mut left_units, vec![word], src);
                links.push(Link {
                    left: Span::single(l),
                    right: Span::empty_at(r),
                    kind: LinkKind::NullRight,
                });
            }
            Step::Split if word.chars().count() >= 2 => {
                let cut = rng.gen_range(1..word.chars().count());
                let byte_cut = word.char_indices().nth(cut).map(|(b, _)| b).unwrap();
                let (a, b) = word.split_at(byte_cut);
                let tgt2 = sample_target(&spec.tag_confusion[&src], &mut rng);
                push_left(&mut left_units, vec![word.clone()], src);
                push_left(&mut right_units, vec![a.to_string()], tgt);
                push_left(&mut right_units, vec![b.to_string()], tgt2);
                links.push(Link {
                    left: Span::single(l),
                    right: Span::new(r, r + 2),
                    kind: LinkKind::Split,
                });
            }
            Step::Merge if left_units.len() + 2 <= length => {
                let word2 = vocab[word_dist.sample(&mut rng)].clone();
                let src2 = sources[rng.gen_range(0..sources.len())].clone();
                push_left(&mut left_units, vec![word.clone()], src);
                push_left(&mut left_units, vec![word2.clone()], src2);
                push_left(&mut right_units, vec![word, word2], tgt);
                links.push(Link {
                    left: Span::new(l, l + 2),
                    right: Span::single(r),
                    kind: LinkKind::Merge,
                });
            }
            Step::Case if toggle_first_case(&word) != word => {
                push_left(&mut left_units, vec![word.clone()], src);
                push_left(&mut right_units, vec![toggle_first_case(&word)], tgt);
                links.push(Link {
                    left: Span::single(l),
                    right: Span::single(r),
                    kind: LinkKind::CaseMatch,
                });
            }
            Step::Fuzzy => match fuzz_word(&word, &mut rng) {
                Some(fuzzed) => {
                    push_left(&mut left_units, vec![word], src);
                    push_left(&mut right_units, vec![fuzzed], tgt);
                    links.push(Link {
                        left: Span::single(l),
                        right: Span::single(r),
                        kind: LinkKind::Fuzzy,
                    });
                }
                None => {
                    push_left(&mut left_units, vec![word.clone()], src);
                    push_left(&mut right_units, vec![word], tgt);
                    links.push(Link {
                        left: Span::single(l),
                        right: Span::single(r),
                        kind: LinkKind::Match,
                    });
                }
            },
            _ => {
                push_left(&mut left_units, vec![word.clone()], src);
                push_left(&mut right_units, vec![word], tgt);
                links.push(Link {
                    left: Span::single(l),
                    right: Span::single(r),
                    kind: LinkKind::Match,
                });
            }
        }

        if rng.gen_bool(BREAK_RATE) {
            left_breaks.insert(left_units.len() - 1);
            let link = links.last().unwrap();
            if !link.right.is_empty() {
                right_breaks.insert(right_units.len() - 1);
            }
        }
    }

    let left = AnnotatedStream::new(SchemeId::new("SRC").unwrap(), left_units, left_breaks)
        .expect("generated left stream is well-formed");
    let right = AnnotatedStream::new(SchemeId::new("TGT").unwrap(), right_units, right_breaks)
        .expect("generated right stream is well-formed");
    let pac = Pac { left, right, links };
    debug_assert_eq!(pac.validate(), Ok(()));
    Ok(pac)
}

/// Serializes ground-truth links: one `kind<TAB>left-range<TAB>right-range`
/// row per link.
pub fn write_links_tsv(pac: &Pac) -> String {
    let mut out = String::from("kind\tleft\tright\n");
    for link in &pac.links {
        out.push_str(&format!(
            "{}\t{}..{}\t{}..{}\n",
            link.kind.token(),
            link.left.start,
            link.left.end,
            link.right.start,
            link.right.end
        ));
    }
    out
}

/// Parses a `key=value` divergence spec. Recognized keys: `seed`, `length`,
/// the five `*_rate`s, and repeated `confusion=SRC<TAB>TGT<TAB>P` rows.
/// Returns the spec and the requested length.
pub fn parse_divergence_spec(text: &str) -> Result<(DivergenceSpec, usize), GeneratorError> {
    let mut spec = DivergenceSpec {
        split_rate: 0.0,
        merge_rate: 0.0,
        case_rate: 0.0,
        null_rate: 0.0,
        fuzzy_rate: 0.0,
        tag_confusion: BTreeMap::new(),
        seed: 0,
    };
    let mut length: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| GeneratorError::Parse {
            line: line_no,
            reason: "expected key=value".to_string(),
        })?;
        let parse_rate = |v: &str| -> Result<f64, GeneratorError> {
            v.parse().map_err(|_| GeneratorError::Parse {
                line: line_no,
                reason: format!("bad number {v:?}"),
            })
        };
        match key {
            "seed" => {
                spec.seed = value.parse().map_err(|_| GeneratorError::Parse {
                    line: line_no,
                    reason: format!("bad seed {value:?}"),
                })?;
            }
            "length" => {
                length = Some(value.parse().map_err(|_| GeneratorError::Parse {
                    line: line_no,
                    reason: format!("bad length {value:?}"),
                })?);
            }
            "split_rate" => spec.split_rate = parse_rate(value)?,
            "merge_rate" => spec.merge_rate = parse_rate(value)?,
            "case_rate" => spec.case_rate = parse_rate(value)?,
            "null_rate" => spec.null_rate = parse_rate(value)?,
            "fuzzy_rate" => spec.fuzzy_rate = parse_rate(value)?,
            "confusion" => {
                let fields: Vec<&str> = value.split('\t').collect();
                if fields.len() != 3 {
                    return Err(GeneratorError::Parse {
                        line: line_no,
                        reason: "confusion rows take SRC<TAB>TGT<TAB>P".to_string(),
                    });
                }
                let p = parse_rate(fields[2])?;
                spec.tag_confusion
                    .entry(fields[0].to_string())
                    .or_default()
                    .push((fields[1].to_string(), p));
            }
            other => {
                return Err(GeneratorError::Parse {
                    line: line_no,
                    reason: format!("unknown key {other:?}"),
                });
            }
        }
    }

    let length = length.ok_or(GeneratorError::Parse {
        line: 0,
        reason: "missing `length=`".to_string(),
    })?;
    if length == 0 {
        return Err(GeneratorError::InvalidLength);
    }
    spec.validate()?;
    Ok((spec, length))
}
