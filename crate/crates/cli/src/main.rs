//! Command-line front end for the tag-alignment pipeline.
//!
//! Each subcommand wires one pipeline stage to files: parse the inputs, run
//! the library, write the result. Output files are written atomically (a
//! temporary file in the destination directory, then a rename), so a failing
//! run never leaves a partial output behind. Diagnostics go to stderr; data
//! goes to the output path, or to stdout when no path is given. Exit codes:
//! 0 on success, 1 on data errors, 2 on usage errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::{fs, process};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tagmap_core::{
    align, apply_patches, compose_mappings, derive_mapping, evaluate, extract_correspondences,
    generate, learn_patches, parse_divergence_spec, parse_mapping_file, parse_pac, parse_table_tsv,
    parse_transform_config, parse_vertical, render_distribution, render_pac, write_links_tsv,
    write_mapping_file, write_report, write_table_tsv, AlignConfig, AnnotatedStream,
    ComposeWarning, DeriveSettings, DeriveWarning, FallbackPolicy, Pac, SchemeId, Smoothing,
};

#[derive(Parser)]
#[command(
    name = "tagmap",
    version,
    about = "Aligns two tagged annotations of one text and derives tagset mappings",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two vertical files over the same text into a parallel corpus
    Align(AlignArgs),
    /// Count source/target tag pairings in a parallel corpus
    Extract(ExtractArgs),
    /// Derive a most-common-pairing mapping from a correspondence table
    Derive(DeriveArgs),
    /// Retag vertical files with a mapping and its patches
    Apply(ApplyArgs),
    /// Learn contextual patches that fix a mapping's residual errors
    Patch(PatchArgs),
    /// Chain two mappings through their shared middle scheme
    Compose(ComposeArgs),
    /// Score a retagged vertical file against a gold reference
    Eval(EvalArgs),
    /// Produce a synthetic aligned pair with known ground-truth links
    Generate(GenerateArgs),
    /// Print one source tag's target distribution as a percentage listing
    Render(RenderArgs),
}

#[derive(Args)]
struct AlignArgs {
    /// Left-side vertical file
    left: PathBuf,
    /// Right-side vertical file
    right: PathBuf,
    /// Tagging scheme name for the left file
    #[arg(long, value_name = "NAME")]
    left_scheme: String,
    /// Tagging scheme name for the right file
    #[arg(long, value_name = "NAME")]
    right_scheme: String,
    /// Output path for the aligned corpus (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Fail when more than this fraction of units (both sides pooled) end up
    /// in null links
    #[arg(long, value_name = "FLOAT")]
    max_null_fraction: Option<f64>,
    /// Key-value file overriding the escape-entity table
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Disable the case-folded matching repair
    #[arg(long)]
    no_case_repair: bool,
    /// Disable the escape-decoded matching repair
    #[arg(long)]
    no_escape_repair: bool,
    /// Disable the one-to-two split repair
    #[arg(long)]
    no_enclitic_repair: bool,
    /// Disable the two-to-one merge repair
    #[arg(long)]
    no_compound_repair: bool,
    /// Disable the bounded-edit-distance repair
    #[arg(long)]
    no_fuzzy_repair: bool,
}

#[derive(Args)]
struct ExtractArgs {
    /// Parallel corpus file
    pac: PathBuf,
    /// Tagging scheme name for the left column
    #[arg(long, value_name = "NAME")]
    left_scheme: String,
    /// Tagging scheme name for the right column
    #[arg(long, value_name = "NAME")]
    right_scheme: String,
    /// Scheme whose tags become table rows (defaults to the left scheme)
    #[arg(long, value_name = "NAME")]
    source: Option<String>,
    /// Output path for the correspondence table (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// Correspondence table file
    table: PathBuf,
    /// Output path for the mapping (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// What the mapping does with tags it has no rule for
    #[arg(long, value_enum, default_value_t = FallbackArg::Fail)]
    fallback: FallbackArg,
    /// Count smoothing applied before picking each rule's target
    #[arg(long, value_enum, default_value_t = SmoothingArg::None)]
    smoothing: SmoothingArg,
    /// Admit composite (`+`-joined) tags as rule sources and targets
    #[arg(long)]
    composites: bool,
    /// Fail instead of warning when a rule's targets tie at the maximal count
    #[arg(long)]
    strict_ties: bool,
}

#[derive(Args)]
struct ApplyArgs {
    /// Mapping file (patches in the file are applied too)
    mapping: PathBuf,
    /// Vertical files to retag
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output path (single input only; stdout when omitted)
    #[arg(short, long, value_name = "FILE", conflicts_with = "out_dir")]
    output: Option<PathBuf>,
    /// Directory receiving one output per input, named after the input
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Retag up to this many inputs concurrently
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
}

#[derive(Args)]
struct PatchArgs {
    /// Mapping file to learn patches for (must not already contain patches)
    mapping: PathBuf,
    /// Parallel corpus whose schemes match the mapping's source and target
    pac: PathBuf,
    /// Maximum number of patches to learn
    #[arg(long, value_name = "N", default_value_t = 10)]
    budget: usize,
    /// Output path for the patched mapping (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ComposeArgs {
    /// Mapping applied first
    first: PathBuf,
    /// Mapping applied second; its source scheme must be the first's target
    second: PathBuf,
    /// Output path for the composed mapping (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Vertical file with predicted tags
    predicted: PathBuf,
    /// Vertical file with gold tags over the same tokens
    gold: PathBuf,
    /// Tagging scheme name shared by both files
    #[arg(long, value_name = "NAME")]
    scheme: String,
    /// Output path for the report (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Key-value divergence spec (rates, seed, length, confusion rows)
    spec: PathBuf,
    /// Directory receiving left.vrt, right.vrt, links.tsv, and corpus.pac
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Override the seed given in the spec file
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Correspondence table file
    table: PathBuf,
    /// Source tag whose distribution to print
    tag: String,
    /// Output path for the listing (stdout when omitted)
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    /// Reject streams containing unmapped tags
    Fail,
    /// Copy unmapped tags through unchanged
    Passthrough,
    /// Replace unmapped tags with the unknown-tag marker
    Unk,
}

impl From<FallbackArg> for FallbackPolicy {
    fn from(value: FallbackArg) -> FallbackPolicy {
        match value {
            FallbackArg::Fail => FallbackPolicy::Fail,
            FallbackArg::Passthrough => FallbackPolicy::Passthrough,
            FallbackArg::Unk => FallbackPolicy::UnknownTag,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    /// Use raw counts
    None,
    /// Give every target tag in the table a pseudo-count of one
    Addone,
}

impl From<SmoothingArg> for Smoothing {
    fn from(value: SmoothingArg) -> Smoothing {
        match value {
            SmoothingArg::None => Smoothing::Off,
            SmoothingArg::Addone => Smoothing::AddOne,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align(args) => run_align(args),
        Command::Extract(args) => run_extract(args),
        Command::Derive(args) => run_derive(args),
        Command::Apply(args) => run_apply(args),
        Command::Patch(args) => run_patch(args),
        Command::Compose(args) => run_compose(args),
        Command::Eval(args) => run_eval(args),
        Command::Generate(args) => run_generate(args),
        Command::Render(args) => run_render(args),
    };
    if let Err(err) = result {
        eprintln!("tagmap: {err:#}");
        process::exit(1);
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn scheme(name: &str) -> Result<SchemeId> {
    Ok(SchemeId::new(name)?)
}

fn load_vertical(path: &Path, scheme: SchemeId) -> Result<AnnotatedStream> {
    parse_vertical(&read_file(path)?, scheme).with_context(|| format!("{}", path.display()))
}

fn load_pac(path: &Path, left: SchemeId, right: SchemeId) -> Result<Pac> {
    parse_pac(&read_file(path)?, left, right).with_context(|| format!("{}", path.display()))
}

/// Writes via a temporary file in the destination directory plus a rename,
/// so the destination is either untouched or complete.
fn write_atomic(path: &Path, data: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(data.as_bytes())
        .and_then(|()| tmp.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, data),
        None => {
            print!("{data}");
            Ok(())
        }
    }
}

fn run_align(args: AlignArgs) -> Result<()> {
    let left = load_vertical(&args.left, scheme(&args.left_scheme)?)?;
    let right = load_vertical(&args.right, scheme(&args.right_scheme)?)?;

    let mut cfg = AlignConfig::default();
    if let Some(f) = args.max_null_fraction {
        cfg.max_null_fraction = f;
    }
    if let Some(path) = &args.config {
        let (entities, _clitics) = parse_transform_config(&read_file(path)?)
            .with_context(|| format!("{}", path.display()))?;
        cfg.entities = entities;
    }
    cfg.repair_case = !args.no_case_repair;
    cfg.repair_escape = !args.no_escape_repair;
    cfg.repair_enclitic = !args.no_enclitic_repair;
    cfg.repair_compound = !args.no_compound_repair;
    cfg.repair_fuzzy = !args.no_fuzzy_repair;

    let pac = align(&left, &right, &cfg).with_context(|| {
        format!(
            "aligning {} against {}",
            args.left.display(),
            args.right.display()
        )
    })?;
    for d in pac.boundary_discrepancies() {
        let side = match d.side {
            tagmap_core::align::Side::Left => "left",
            tagmap_core::align::Side::Right => "right",
        };
        eprintln!(
            "tagmap: warning: sentence break after link {} exists on the {side} side only",
            d.link
        );
    }
    emit(args.output.as_deref(), &render_pac(&pac))
}

fn run_extract(args: ExtractArgs) -> Result<()> {
    let pac = load_pac(
        &args.pac,
        scheme(&args.left_scheme)?,
        scheme(&args.right_scheme)?,
    )?;
    let source = scheme(args.source.as_deref().unwrap_or(&args.left_scheme))?;
    let table = extract_correspondences(&pac, &source)
        .with_context(|| format!("extracting from {}", args.pac.display()))?;
    emit(args.output.as_deref(), &write_table_tsv(&table))
}

fn run_derive(args: DeriveArgs) -> Result<()> {
    let table = parse_table_tsv(&read_file(&args.table)?)
        .with_context(|| format!("{}", args.table.display()))?;
    let settings = DeriveSettings {
        fallback_policy: args.fallback.into(),
        include_composites: args.composites,
        smoothing: args.smoothing.into(),
    };
    let (mapping, warnings) = derive_mapping(&table, &settings)
        .with_context(|| format!("deriving from {}", args.table.display()))?;

    let mut ties = 0usize;
    for warning in &warnings {
        match warning {
            DeriveWarning::TieBroken {
                source_tag,
                chosen,
                alternatives,
            } => {
                ties += 1;
                eprintln!(
                    "tagmap: warning: {source_tag}: targets tie at the maximal count; \
                     chose {chosen} over {}",
                    alternatives.join(", ")
                );
            }
            DeriveWarning::NoUsableTarget { source_tag } => {
                eprintln!("tagmap: warning: {source_tag}: no usable target, rule omitted")
            }
        }
    }
    if args.strict_ties && ties > 0 {
        bail!(
            "{ties} rule(s) in {} needed a tie-break; rerun without --strict-ties to accept \
             the lexicographically smallest target",
            args.table.display()
        );
    }
    emit(args.output.as_deref(), &write_mapping_file(&mapping, &[]))
}

fn run_apply(args: ApplyArgs) -> Result<()> {
    let (mapping, patches) = parse_mapping_file(&read_file(&args.mapping)?)
        .with_context(|| format!("{}", args.mapping.display()))?;

    let retag = |input: &Path| -> Result<String> {
        let stream = load_vertical(input, mapping.source_scheme.clone())?;
        let mapped = apply_patches(&patches, &mapping, &stream)
            .with_context(|| format!("retagging {}", input.display()))?;
        Ok(mapped.to_vertical())
    };

    if args.inputs.len() == 1 && args.out_dir.is_none() {
        return emit(args.output.as_deref(), &retag(&args.inputs[0])?);
    }
    if args.output.is_some() {
        bail!("--output takes a single input; use --out-dir for several");
    }
    let dir = match &args.out_dir {
        Some(dir) => dir,
        None => bail!("several inputs need --out-dir"),
    };

    let mut jobs: Vec<(PathBuf, PathBuf)> = Vec::new();
    for input in &args.inputs {
        let name = input
            .file_name()
            .with_context(|| format!("{} has no file name", input.display()))?;
        let out = dir.join(name);
        if let Some((clash, _)) = jobs.iter().find(|(_, o)| *o == out) {
            bail!(
                "{} and {} would both write {}",
                clash.display(),
                input.display(),
                out.display()
            );
        }
        jobs.push((input.clone(), out));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let run_all = || {
        jobs.par_iter()
            .map(|(input, out)| retag(input).and_then(|text| write_atomic(out, &text)))
            .collect::<Vec<Result<()>>>()
    };
    let results = match args.parallel {
        Some(threads) if threads > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building the worker pool")?
            .install(run_all),
        _ => jobs
            .iter()
            .map(|(input, out)| retag(input).and_then(|text| write_atomic(out, &text)))
            .collect(),
    };

    let mut failed = false;
    for result in results {
        if let Err(err) = result {
            failed = true;
            eprintln!("tagmap: {err:#}");
        }
    }
    if failed {
        bail!("some inputs failed");
    }
    Ok(())
}

fn run_patch(args: PatchArgs) -> Result<()> {
    let (mapping, existing) = parse_mapping_file(&read_file(&args.mapping)?)
        .with_context(|| format!("{}", args.mapping.display()))?;
    if !existing.is_empty() {
        bail!(
            "{} already contains {} patch(es); patches are learned against an unpatched mapping",
            args.mapping.display(),
            existing.len()
        );
    }
    let pac = load_pac(
        &args.pac,
        mapping.source_scheme.clone(),
        mapping.target_scheme.clone(),
    )?;
    let patches = learn_patches(&pac, &mapping, args.budget)
        .with_context(|| format!("learning patches from {}", args.pac.display()))?;
    eprintln!("tagmap: learned {} patch(es)", patches.len());
    emit(
        args.output.as_deref(),
        &write_mapping_file(&mapping, &patches),
    )
}

fn run_compose(args: ComposeArgs) -> Result<()> {
    let (first, first_patches) = parse_mapping_file(&read_file(&args.first)?)
        .with_context(|| format!("{}", args.first.display()))?;
    let (second, second_patches) = parse_mapping_file(&read_file(&args.second)?)
        .with_context(|| format!("{}", args.second.display()))?;
    if !first_patches.is_empty() || !second_patches.is_empty() {
        bail!(
            "patched mappings cannot be composed: patch contexts read the stream the patch \
             was learned on, which the composed mapping never sees"
        );
    }
    let (composed, warnings) = compose_mappings(&first, &second).with_context(|| {
        format!(
            "composing {} with {}",
            args.first.display(),
            args.second.display()
        )
    })?;
    for warning in &warnings {
        match warning {
            ComposeWarning::DroppedRule {
                source_tag,
                intermediate_tag,
            } => eprintln!(
                "tagmap: warning: rule {source_tag}->{intermediate_tag} dropped: no rule for \
                 {intermediate_tag} in the second mapping"
            ),
            ComposeWarning::DroppedException {
                word,
                source_tag,
                intermediate_tag,
            } => eprintln!(
                "tagmap: warning: exception ({word}, {source_tag})->{intermediate_tag} dropped: \
                 no rule for {intermediate_tag} in the second mapping"
            ),
        }
    }
    emit(args.output.as_deref(), &write_mapping_file(&composed, &[]))
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let s = scheme(&args.scheme)?;
    let predicted = load_vertical(&args.predicted, s.clone())?;
    let gold = load_vertical(&args.gold, s)?;
    let report = evaluate(&predicted, &gold).with_context(|| {
        format!(
            "comparing {} against {}",
            args.predicted.display(),
            args.gold.display()
        )
    })?;
    emit(args.output.as_deref(), &write_report(&report))
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let (mut spec, length) = parse_divergence_spec(&read_file(&args.spec)?)
        .with_context(|| format!("{}", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let pac = generate(&spec, length)
        .with_context(|| format!("generating from {}", args.spec.display()))?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_atomic(&args.out_dir.join("left.vrt"), &pac.left.to_vertical())?;
    write_atomic(&args.out_dir.join("right.vrt"), &pac.right.to_vertical())?;
    write_atomic(&args.out_dir.join("links.tsv"), &write_links_tsv(&pac))?;
    write_atomic(&args.out_dir.join("corpus.pac"), &render_pac(&pac))?;
    Ok(())
}

fn run_render(args: RenderArgs) -> Result<()> {
    let table = parse_table_tsv(&read_file(&args.table)?)
        .with_context(|| format!("{}", args.table.display()))?;
    let listing = render_distribution(&table, &args.tag)
        .with_context(|| format!("rendering from {}", args.table.display()))?;
    emit(args.output.as_deref(), &listing)
}
