//! Aligning two differently-tagged annotations of the same text and learning
//! tagset-to-tagset mappings from the result.
//!
//! The pipeline: parse vertical `token<TAB>tag` files into annotated streams
//! ([`corpus`]), optionally normalize tokenization differences reversibly
//! ([`normalize`]), align the two streams into a parallel annotated corpus
//! ([`align`]), count tag pairings ([`correspondence`]), derive and refine a
//! deterministic tag mapping ([`mapping`]), and score mapped output against
//! gold ([`eval`]). A seeded synthetic-pair generator ([`generator`])
//! provides ground truth for testing the whole chain.

pub mod align;
pub mod corpus;
pub mod correspondence;
pub mod eval;
pub mod generator;
pub mod mapping;
pub mod normalize;

pub use align::{
    align, find_anchors, parse_pac, render_pac, AlignConfig, AlignError, Anchor, Link, LinkKind,
    Pac, Span,
};
pub use corpus::{
    group_ditto_units, parse_tag_label, parse_vertical, AnnotatedStream, CorpusError, SchemeId,
    TagLabel, TaggedUnit,
};
pub use correspondence::{
    extract_correspondences, format_percent, parse_table_tsv, render_distribution, write_table_tsv,
    CorrespondenceError, CorrespondenceTable, NULL_TAG,
};
pub use eval::{evaluate, write_report, EvalError, EvaluationReport, TagScore};
pub use generator::{
    generate, parse_divergence_spec, write_links_tsv, DivergenceSpec, GeneratorError,
};
pub use mapping::{
    apply_mapping, apply_patches, compose_mappings, context_matches, derive_mapping, learn_patches,
    parse_mapping_file, write_mapping_file, ComposeWarning, DeriveSettings, DeriveWarning,
    FallbackPolicy, Mapping, MappingError, Patch, PatchContext, Smoothing, UNKNOWN_TAG,
};
pub use normalize::{
    normalize, parse_transform_config, unnormalize, NormalizeError, TransformEntry, TransformKind,
    TransformLog, TransformRule,
};
