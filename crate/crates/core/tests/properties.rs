//! Invariant checks over randomized inputs. Most loops are hand-seeded so
//! failures reproduce exactly; a small proptest section covers value-level
//! round trips.

mod common;

use std::collections::BTreeMap;

use common::{enumerate_total_rule_sets, med_align, recovered_links, scheme};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tagmap_core::{
    align, apply_mapping, apply_patches, compose_mappings, derive_mapping, evaluate,
    extract_correspondences, find_anchors, format_percent, generate, group_ditto_units,
    learn_patches, normalize, parse_pac, parse_tag_label, parse_vertical, render_distribution,
    render_pac, unnormalize, AlignConfig, AnnotatedStream, CorrespondenceTable, DeriveSettings,
    DivergenceSpec, FallbackPolicy, Link, LinkKind, Mapping, Span, TagLabel, TaggedUnit,
    TransformRule,
};

fn spec_with_rates(
    seed: u64,
    split: f64,
    merge: f64,
    case: f64,
    null: f64,
    fuzzy: f64,
) -> DivergenceSpec {
    let mut spec =
        DivergenceSpec::identity(["T1".to_string(), "T2".to_string(), "T3".to_string()], seed);
    spec.split_rate = split;
    spec.merge_rate = merge;
    spec.case_rate = case;
    spec.null_rate = null;
    spec.fuzzy_rate = fuzzy;
    spec
}

#[test]
fn vertical_format_round_trips_byte_exactly() {
    for seed in 0..20 {
        let pac = generate(&spec_with_rates(seed, 0.1, 0.1, 0.1, 0.1, 0.1), 80).unwrap();
        for side in [&pac.left, &pac.right] {
            let text = side.to_vertical();
            let back = parse_vertical(&text, side.scheme.clone()).unwrap();
            assert_eq!(&back, side, "seed {seed}");
            assert_eq!(back.to_vertical(), text, "seed {seed}");
        }
    }
}

#[test]
fn pac_format_round_trips_byte_exactly() {
    for seed in 0..20 {
        let pac = generate(&spec_with_rates(seed, 0.08, 0.08, 0.08, 0.08, 0.08), 60).unwrap();
        let text = render_pac(&pac);
        let back = parse_pac(&text, pac.left.scheme.clone(), pac.right.scheme.clone()).unwrap();
        assert_eq!(back, pac, "seed {seed}");
        assert_eq!(render_pac(&back), text, "seed {seed}");
    }
}

#[test]
fn aligner_output_is_complete_and_monotone() {
    for seed in 0..30 {
        let truth = generate(&spec_with_rates(seed, 0.04, 0.04, 0.04, 0.04, 0.04), 150).unwrap();
        let pac = align(&truth.left, &truth.right, &AlignConfig::default()).unwrap();
        assert_eq!(pac.validate(), Ok(()), "seed {seed}");
    }
}

#[test]
fn anchors_appear_as_match_links() {
    for seed in 0..20 {
        let truth = generate(&spec_with_rates(seed, 0.05, 0.05, 0.05, 0.05, 0.05), 120).unwrap();
        let anchors = find_anchors(&truth.left, &truth.right);
        let pac = align(&truth.left, &truth.right, &AlignConfig::default()).unwrap();
        for anchor in &anchors {
            let link = pac
                .links
                .iter()
                .find(|l| l.left.iter().any(|i| i == anchor.left_index))
                .expect("complete alignment covers the anchor unit");
            assert_eq!(link.kind, LinkKind::Match, "seed {seed}");
            assert_eq!(link.right, Span::single(anchor.right_index), "seed {seed}");
        }
    }
}

#[test]
fn med_oracle_corroborates_ground_truth_on_one_to_one_pairs() {
    let mut truth_total = 0usize;
    let mut med_hits = 0usize;
    for seed in 0..10 {
        let truth = generate(&spec_with_rates(seed, 0.0, 0.0, 0.04, 0.04, 0.04), 120).unwrap();
        let med = med_align(&truth.left, &truth.right);
        truth_total += truth.links.len();
        med_hits += recovered_links(&truth.links, &med);
    }
    let rate = med_hits as f64 / truth_total as f64;
    assert!(rate >= 0.98, "MED oracle recovered only {rate:.4}");
}

#[test]
fn transposing_the_streams_mirrors_the_alignment() {
    fn mirror(links: &[Link]) -> Vec<Link> {
        links
            .iter()
            .map(|l| Link {
                left: l.right,
                right: l.left,
                kind: match l.kind {
                    LinkKind::NullLeft => LinkKind::NullRight,
                    LinkKind::NullRight => LinkKind::NullLeft,
                    LinkKind::Split => LinkKind::Merge,
                    LinkKind::Merge => LinkKind::Split,
                    k => k,
                },
            })
            .collect()
    }
    // Dropped units are excluded: when a gap cannot be fully repaired the
    // leftover units are emitted in a fixed left-before-right order, which is
    // deliberately direction-dependent.
    for seed in 0..10 {
        let truth = generate(&spec_with_rates(seed, 0.04, 0.04, 0.04, 0.0, 0.0), 100).unwrap();
        let forward = align(&truth.left, &truth.right, &AlignConfig::default()).unwrap();
        let backward = align(&truth.right, &truth.left, &AlignConfig::default()).unwrap();
        assert_eq!(backward.links, mirror(&forward.links), "seed {seed}");
    }
}

#[test]
fn correspondence_counts_sum_to_link_count() {
    for seed in 0..15 {
        let truth = generate(&spec_with_rates(seed, 0.06, 0.06, 0.06, 0.06, 0.06), 90).unwrap();
        let table = extract_correspondences(&truth, &scheme("SRC")).unwrap();
        let total: u64 = table.counts.values().sum();
        assert_eq!(total, truth.links.len() as u64, "seed {seed}");
    }
}

#[test]
fn rendered_percentages_sum_close_to_one_hundred() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..200 {
        let k = rng.gen_range(2..=8);
        let mut table = CorrespondenceTable::new(scheme("A"), scheme("B"));
        for t in 0..k {
            table.add("S", format!("T{t:02}"), rng.gen_range(1..100));
        }
        let rendered = render_distribution(&table, "S").unwrap();
        let sum: f64 = rendered
            .lines()
            .map(|l| {
                l.rsplit(' ')
                    .next()
                    .unwrap()
                    .trim_end_matches('%')
                    .parse::<f64>()
                    .unwrap()
            })
            .sum();
        let bound = 0.005 * k as f64 + 1e-9;
        assert!(
            (sum - 100.0).abs() <= bound,
            "{k} targets sum to {sum} (bound {bound})"
        );
        if k <= 4 {
            assert!((sum - 100.0).abs() <= 0.02 + 1e-9);
        }
    }
}

#[test]
fn derived_mapping_maximizes_table_weight() {
    let mut rng = StdRng::seed_from_u64(23);
    for round in 0..60 {
        let sources: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("S{i}")).collect();
        let targets: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("T{i}")).collect();
        let mut table = CorrespondenceTable::new(scheme("A"), scheme("B"));
        for s in &sources {
            for t in &targets {
                let n = rng.gen_range(0..20);
                if n > 0 {
                    table.add(s.clone(), t.clone(), n);
                }
            }
            // Guarantee at least one observation per source tag.
            table.add(s.clone(), targets[0].clone(), 1);
        }
        let (mapping, _) = derive_mapping(&table, &DeriveSettings::default()).unwrap();
        let weight = |rules: &BTreeMap<String, String>| -> u64 {
            table
                .counts
                .iter()
                .filter(|((s, t), _)| rules.get(s) == Some(t))
                .map(|(_, &n)| n)
                .sum()
        };
        let derived_weight = weight(&mapping.rules);
        for rules in enumerate_total_rule_sets(&sources, &targets) {
            assert!(
                derived_weight >= weight(&rules),
                "round {round}: {rules:?} beats derived {:?}",
                mapping.rules
            );
        }
    }
}

#[test]
fn derive_unaffected_by_count_scaling() {
    let mut rng = StdRng::seed_from_u64(31);
    for _ in 0..40 {
        let mut table = CorrespondenceTable::new(scheme("A"), scheme("B"));
        for s in 0..rng.gen_range(1..=4) {
            for t in 0..rng.gen_range(1..=4) {
                table.add(format!("S{s}"), format!("T{t}"), rng.gen_range(1..50));
            }
        }
        let factor: u64 = rng.gen_range(2..30);
        let mut scaled = CorrespondenceTable::new(scheme("A"), scheme("B"));
        for ((s, t), n) in &table.counts {
            scaled.add(s.clone(), t.clone(), n * factor);
        }
        let (m1, _) = derive_mapping(&table, &DeriveSettings::default()).unwrap();
        let (m2, _) = derive_mapping(&scaled, &DeriveSettings::default()).unwrap();
        assert_eq!(m1.rules, m2.rules);
    }
}

fn random_total_mapping(
    rng: &mut StdRng,
    src: &SchemeLabel,
    tgt: &SchemeLabel,
    policy: FallbackPolicy,
) -> Mapping {
    let mut m = Mapping::new(scheme(src.0), scheme(tgt.0), policy);
    for s in &src.1 {
        let t = &tgt.1[rng.gen_range(0..tgt.1.len())];
        m.rules.insert(s.clone(), t.clone());
    }
    m
}

/// Scheme name plus its tag alphabet.
struct SchemeLabel(&'static str, Vec<String>);

#[test]
fn composition_is_associative_in_sound_configurations() {
    let mut rng = StdRng::seed_from_u64(41);
    let alphabet = |prefix: &str, n: usize| -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    };
    for round in 0..60 {
        let a = SchemeLabel("A", alphabet("a", rng.gen_range(2..=4)));
        let b = SchemeLabel("B", alphabet("b", rng.gen_range(2..=4)));
        let c = SchemeLabel("C", alphabet("c", rng.gen_range(2..=4)));
        let d = SchemeLabel("D", alphabet("d", rng.gen_range(2..=4)));
        let policies = [
            FallbackPolicy::Fail,
            FallbackPolicy::Passthrough,
            FallbackPolicy::UnknownTag,
        ];

        // Total mappings: associativity holds under every policy mix.
        let pol_ab = policies[rng.gen_range(0..3)];
        let pol_bc = policies[rng.gen_range(0..3)];
        let pol_cd = policies[rng.gen_range(0..3)];
        let ab = random_total_mapping(&mut rng, &a, &b, pol_ab);
        let bc = random_total_mapping(&mut rng, &b, &c, pol_bc);
        let cd = random_total_mapping(&mut rng, &c, &d, pol_cd);
        let (left, _) = compose_mappings(&compose_mappings(&ab, &bc).unwrap().0, &cd).unwrap();
        let (right, _) = compose_mappings(&ab, &compose_mappings(&bc, &cd).unwrap().0).unwrap();
        assert_eq!(left, right, "round {round} (total)");

        // Partial mappings under a uniform fail or unknown-tag policy.
        for policy in [FallbackPolicy::Fail, FallbackPolicy::UnknownTag] {
            let drop_some = |m: &Mapping, rng: &mut StdRng| -> Mapping {
                let mut out = m.clone();
                out.fallback_policy = policy;
                let keys: Vec<String> = out.rules.keys().cloned().collect();
                for k in keys {
                    if rng.gen_bool(0.3) {
                        out.rules.remove(&k);
                    }
                }
                out
            };
            let ab = drop_some(&ab, &mut rng);
            let bc = drop_some(&bc, &mut rng);
            let cd = drop_some(&cd, &mut rng);
            let (left, _) = compose_mappings(&compose_mappings(&ab, &bc).unwrap().0, &cd).unwrap();
            let (right, _) = compose_mappings(&ab, &compose_mappings(&bc, &cd).unwrap().0).unwrap();
            assert_eq!(left, right, "round {round} ({policy:?})");
        }
    }
}

#[test]
fn apply_preserves_tokens_breaks_and_length() {
    for seed in 0..10 {
        let truth = generate(&spec_with_rates(seed, 0.0, 0.0, 0.0, 0.0, 0.0), 100).unwrap();
        let stream = &truth.left;
        let mut mapping = Mapping::new(scheme("SRC"), scheme("OUT"), FallbackPolicy::UnknownTag);
        mapping.rules.insert("T1".to_string(), "U1".to_string());
        mapping.rules.insert("T2".to_string(), "U2".to_string());
        let out = apply_mapping(&mapping, stream).unwrap();
        assert_eq!(out.len(), stream.len());
        assert_eq!(out.sentence_breaks, stream.sentence_breaks);
        assert_eq!(out.scheme, scheme("OUT"));
        for (a, b) in out.units.iter().zip(&stream.units) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.tag.ditto, b.tag.ditto);
        }
    }
}

#[test]
fn each_learned_patch_strictly_improves_training_accuracy() {
    for seed in 0..8 {
        let mut spec = DivergenceSpec::identity(Vec::<String>::new(), seed);
        spec.tag_confusion.insert(
            "A".to_string(),
            vec![("X".to_string(), 0.7), ("Y".to_string(), 0.3)],
        );
        spec.tag_confusion
            .insert("B".to_string(), vec![("Z".to_string(), 1.0)]);
        let truth = generate(&spec, 150).unwrap();
        let table = extract_correspondences(&truth, &scheme("SRC")).unwrap();
        let (base, _) = derive_mapping(
            &table,
            &DeriveSettings {
                fallback_policy: FallbackPolicy::Passthrough,
                ..DeriveSettings::default()
            },
        )
        .unwrap();
        let patches = learn_patches(&truth, &base, 8).unwrap();
        let accuracy_after = |k: usize| -> f64 {
            let out = apply_patches(&patches[..k], &base, &truth.left).unwrap();
            evaluate(&out, &truth.right).unwrap().accuracy()
        };
        let mut last = accuracy_after(0);
        for k in 1..=patches.len() {
            let next = accuracy_after(k);
            assert!(
                next > last,
                "seed {seed}: patch {k} did not improve ({last} -> {next})"
            );
            last = next;
        }
    }
}

#[test]
fn evaluate_against_self_is_perfect() {
    for seed in 0..10 {
        let truth = generate(&spec_with_rates(seed, 0.1, 0.1, 0.1, 0.1, 0.1), 60).unwrap();
        for side in [&truth.left, &truth.right] {
            assert_eq!(evaluate(side, side).unwrap().accuracy(), 1.0);
        }
    }
}

#[test]
fn ditto_grouping_is_idempotent_and_conserves_tokens() {
    let mut rng = StdRng::seed_from_u64(53);
    for round in 0..25 {
        // Random mix of plain units and complete ditto runs.
        let mut units: Vec<TaggedUnit> = Vec::new();
        let mut breaks = std::collections::BTreeSet::new();
        let vocab = tagmap_core::generator::vocabulary();
        let pick = |rng: &mut StdRng| vocab[rng.gen_range(0..vocab.len())].clone();
        for _ in 0..rng.gen_range(1..=30) {
            if rng.gen_bool(0.3) {
                let n = rng.gen_range(2..=4);
                for i in 1..=n {
                    let index = units.len();
                    units.push(TaggedUnit {
                        tokens: vec![pick(&mut rng)],
                        tag: TagLabel::with_ditto("RUN", i, n),
                        index,
                    });
                }
            } else {
                let index = units.len();
                units.push(TaggedUnit {
                    tokens: vec![pick(&mut rng)],
                    tag: TagLabel::plain(format!("P{}", rng.gen_range(0..4))),
                    index,
                });
            }
            if rng.gen_bool(0.15) {
                breaks.insert(units.len() - 1);
            }
        }
        let stream = AnnotatedStream::new(scheme("S"), units, breaks).unwrap();
        let grouped = group_ditto_units(&stream).unwrap();
        let flat = |s: &AnnotatedStream| -> Vec<String> {
            s.units.iter().flat_map(|u| u.tokens.clone()).collect()
        };
        assert_eq!(flat(&grouped), flat(&stream), "round {round}");
        let again = group_ditto_units(&grouped).unwrap();
        assert_eq!(again, grouped, "round {round}");
    }
}

#[test]
fn normalization_replay_restores_the_original_stream() {
    let mut rng = StdRng::seed_from_u64(61);
    let words = [
        "Good",
        "morning",
        "who's",
        "they've",
        "&semi;",
        "&amp;",
        "can't",
        "Perspective",
        "news",
        "merge",
        "parts",
        "plain",
    ];
    for round in 0..40 {
        let mut text = String::new();
        let n = rng.gen_range(1..=25);
        for i in 0..n {
            let w = words[rng.gen_range(0..words.len())];
            text.push_str(&format!("{w}\tT{}\n", rng.gen_range(0..3)));
            if i + 1 < n && rng.gen_bool(0.2) {
                text.push_str("-----\n");
            }
        }
        let stream = parse_vertical(&text, scheme("S")).unwrap();
        let rules = [
            TransformRule::default_escape_decode(),
            TransformRule::CaseFoldSentenceInitial,
            TransformRule::default_enclitic_split(),
        ];
        let (normalized, log) = normalize(&stream, &rules).unwrap();
        let restored = unnormalize(&normalized, &log).unwrap();
        assert_eq!(restored, stream, "round {round}");
    }
}

#[test]
fn self_alignment_pipeline_reproduces_tags() {
    for seed in 0..6 {
        let truth = generate(&spec_with_rates(seed, 0.0, 0.0, 0.0, 0.0, 0.0), 80).unwrap();
        let x = &truth.left;
        let pac = align(x, x, &AlignConfig::default()).unwrap();
        let table = extract_correspondences(&pac, &scheme("SRC")).unwrap();
        let (mapping, warnings) = derive_mapping(&table, &DeriveSettings::default()).unwrap();
        assert!(warnings.is_empty());
        let out = apply_mapping(&mapping, x).unwrap();
        assert_eq!(evaluate(&out, x).unwrap().accuracy(), 1.0, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn percent_formatting_matches_independent_rounding(total in 1u64..10_000, count in 0u64..10_000) {
        let count = count % (total + 1);
        // floor((20000·c + t) / 2t) rounds 10000·c/t half-up in one step.
        let hundredths = (20_000u128 * count as u128 + total as u128) / (2 * total as u128);
        let expected = format!("{}.{:02}", hundredths / 100, hundredths % 100);
        prop_assert_eq!(format_percent(count, total), expected);
    }

    #[test]
    fn plain_tag_labels_round_trip(base in "[A-Za-z*][A-Za-z0-9(),*]{0,8}") {
        let label = TagLabel::plain(base.clone());
        prop_assert_eq!(parse_tag_label(&label.to_string()).unwrap(), label);
    }

    #[test]
    fn ditto_tag_labels_round_trip(
        base in "[A-Za-z][A-Za-z0-9(),]{0,6}",
        n in 2u32..6,
        i in 1u32..6,
    ) {
        let i = 1 + (i - 1) % n;
        let label = TagLabel::with_ditto(base, i, n);
        prop_assert_eq!(parse_tag_label(&label.to_string()).unwrap(), label);
    }
}
