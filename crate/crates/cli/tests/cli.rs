//! End-to-end tests driving the installed binary through real files,
//! checking the pipeline stages, exit codes, stderr diagnostics, and the
//! no-partial-output guarantee.

use std::ffi::OsStr;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const CLAWS_VRT: &str = include_str!("../../core/tests/fixtures/broadcast_claws.vrt");
const ICE_VRT: &str = include_str!("../../core/tests/fixtures/broadcast_ice.vrt");
const BROADCAST_PAC: &str = include_str!("../../core/tests/fixtures/broadcast.pac");

fn tagmap<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_tagmap"))
        .args(args)
        .output()
        .expect("spawning the binary")
}

fn ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let out = tagmap(args);
    assert!(
        out.status.success(),
        "expected success, got exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

fn s(path: &Path) -> &str {
    path.to_str().expect("temp paths are UTF-8")
}

#[test]
fn align_reproduces_the_reference_corpus_and_warns_on_stderr() {
    let dir = tempdir().unwrap();
    let left = dir.path().join("claws.vrt");
    let right = dir.path().join("ice.vrt");
    let out = dir.path().join("aligned.pac");
    fs::write(&left, CLAWS_VRT).unwrap();
    fs::write(&right, ICE_VRT).unwrap();

    let run = ok([
        "align",
        s(&left),
        s(&right),
        "--left-scheme",
        "CLAWS",
        "--right-scheme",
        "ICE",
        "-o",
        s(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), BROADCAST_PAC);
    // The dropped header lives on the left side only; its trailing sentence
    // break has no right-side counterpart and is reported, not silently lost.
    assert!(stderr_of(&run).contains("left side only"), "{run:?}");
    assert!(stdout_of(&run).is_empty());
}

#[test]
fn pipeline_on_identical_streams_reproduces_the_tags() {
    let dir = tempdir().unwrap();
    let vrt = dir.path().join("claws.vrt");
    let pac = dir.path().join("self.pac");
    let table = dir.path().join("table.tsv");
    let map = dir.path().join("identity.map");
    let retagged = dir.path().join("retagged.vrt");
    fs::write(&vrt, CLAWS_VRT).unwrap();

    ok([
        "align",
        s(&vrt),
        s(&vrt),
        "--left-scheme",
        "CLAWS",
        "--right-scheme",
        "CLAWS",
        "-o",
        s(&pac),
    ]);
    ok([
        "extract",
        s(&pac),
        "--left-scheme",
        "CLAWS",
        "--right-scheme",
        "CLAWS",
        "-o",
        s(&table),
    ]);
    // Without -o the same bytes go to stdout.
    let to_stdout = ok([
        "extract",
        s(&pac),
        "--left-scheme",
        "CLAWS",
        "--right-scheme",
        "CLAWS",
    ]);
    assert_eq!(stdout_of(&to_stdout), fs::read_to_string(&table).unwrap());

    ok(["derive", s(&table), "-o", s(&map)]);
    ok(["apply", s(&map), s(&vrt), "-o", s(&retagged)]);
    assert_eq!(fs::read_to_string(&retagged).unwrap(), CLAWS_VRT);

    let eval = ok(["eval", s(&retagged), s(&vrt), "--scheme", "CLAWS"]);
    assert!(stdout_of(&eval).contains("accuracy=1.000000"), "{eval:?}");
}

#[test]
fn generated_corpora_are_deterministic_and_seed_sensitive() {
    let dir = tempdir().unwrap();
    let spec = dir.path().join("divergence.cfg");
    fs::write(
        &spec,
        "seed=7\nlength=60\nsplit_rate=0.05\nmerge_rate=0.05\ncase_rate=0.05\n\
         null_rate=0.05\nfuzzy_rate=0.05\n\
         confusion=A\tX\t0.7\nconfusion=A\tY\t0.3\nconfusion=B\tZ\t1.0\n",
    )
    .unwrap();

    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let reseeded = dir.path().join("reseeded");
    ok(["generate", s(&spec), "--out-dir", s(&first)]);
    ok(["generate", s(&spec), "--out-dir", s(&second)]);
    ok([
        "generate",
        s(&spec),
        "--out-dir",
        s(&reseeded),
        "--seed",
        "99",
    ]);

    for name in ["left.vrt", "right.vrt", "links.tsv", "corpus.pac"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    assert_ne!(
        fs::read(first.join("left.vrt")).unwrap(),
        fs::read(reseeded.join("left.vrt")).unwrap(),
        "--seed had no effect"
    );
}

#[test]
fn apply_parallel_matches_serial_output() {
    let dir = tempdir().unwrap();
    let map = dir.path().join("m.map");
    fs::write(
        &map,
        "source=S\ntarget=T\nfallback=fail\nrule\tA\tX\nrule\tB\tY\n",
    )
    .unwrap();
    let inputs: Vec<_> = [
        ("in1.vrt", "p\tA\nq\tB\n"),
        ("in2.vrt", "r\tA\n-----\ns\tA\n"),
        ("in3.vrt", "t\tB\nu\tA\nv\tB\n"),
    ]
    .iter()
    .map(|(name, text)| {
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        path
    })
    .collect();

    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    let mut serial_args = vec!["apply".to_string(), s(&map).to_string()];
    serial_args.extend(inputs.iter().map(|p| s(p).to_string()));
    let mut parallel_args = serial_args.clone();
    serial_args.extend(["--out-dir".to_string(), s(&serial).to_string()]);
    parallel_args.extend([
        "--out-dir".to_string(),
        s(&parallel).to_string(),
        "--parallel".to_string(),
        "2".to_string(),
    ]);

    ok(serial_args);
    ok(parallel_args);
    for name in ["in1.vrt", "in2.vrt", "in3.vrt"] {
        assert_eq!(
            fs::read(serial.join(name)).unwrap(),
            fs::read(parallel.join(name)).unwrap(),
            "{name} differs between serial and parallel runs"
        );
    }
    assert_eq!(
        fs::read_to_string(serial.join("in2.vrt")).unwrap(),
        "r\tX\n-----\ns\tX\n"
    );
}

#[test]
fn derive_reports_ties_on_stderr_and_strict_ties_refuses() {
    let dir = tempdir().unwrap();
    let table = dir.path().join("tied.tsv");
    fs::write(
        &table,
        "# source=S\n# target=T\nsource_tag\ttarget_tag\tcount\tpercentage\n\
         A\tX\t2\t50.00\nA\tY\t2\t50.00\n",
    )
    .unwrap();

    let out = dir.path().join("m.map");
    let lenient = ok(["derive", s(&table), "-o", s(&out)]);
    assert!(stderr_of(&lenient).contains("tie"), "{lenient:?}");
    assert!(fs::read_to_string(&out).unwrap().contains("rule\tA\tX"));

    let refused = dir.path().join("refused.map");
    let strict = tagmap(["derive", s(&table), "-o", s(&refused), "--strict-ties"]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(!refused.exists(), "refused derivation still wrote a file");
}

#[test]
fn render_prints_exact_percentages() {
    let dir = tempdir().unwrap();
    let table = dir.path().join("t.tsv");
    fs::write(
        &table,
        "# source=S\n# target=T\nsource_tag\ttarget_tag\tcount\tpercentage\n\
         A\tX\t1\t25.00\nA\tY\t3\t75.00\n",
    )
    .unwrap();
    let run = ok(["render", s(&table), "A"]);
    assert_eq!(stdout_of(&run), "X 25.00%\nY 75.00%\n");
}

#[test]
fn patch_learns_a_contextual_fix_and_round_trips_through_the_file() {
    let dir = tempdir().unwrap();
    // One stream, two taggings with identical tokens: tag A goes to X except
    // after a B unit, so the base rule errs once and one patch repairs it.
    let left = dir.path().join("left.vrt");
    let right = dir.path().join("right.vrt");
    fs::write(&left, "a\tA\nb\tB\nc\tA\nd\tA\ne\tA\nf\tA\n").unwrap();
    fs::write(&right, "a\tX\nb\tM\nc\tY\nd\tX\ne\tX\nf\tX\n").unwrap();

    let pac = dir.path().join("aligned.pac");
    let table = dir.path().join("t.tsv");
    let base = dir.path().join("base.map");
    let patched = dir.path().join("patched.map");
    ok([
        "align",
        s(&left),
        s(&right),
        "--left-scheme",
        "SRC",
        "--right-scheme",
        "TGT",
        "-o",
        s(&pac),
    ]);
    ok([
        "extract",
        s(&pac),
        "--left-scheme",
        "SRC",
        "--right-scheme",
        "TGT",
        "-o",
        s(&table),
    ]);
    ok(["derive", s(&table), "-o", s(&base)]);

    let learn = ok([
        "patch",
        s(&base),
        s(&pac),
        "--budget",
        "1",
        "-o",
        s(&patched),
    ]);
    assert!(stderr_of(&learn).contains("learned 1 patch"), "{learn:?}");
    let patched_text = fs::read_to_string(&patched).unwrap();
    assert_eq!(patched_text.matches("patch\t").count(), 1, "{patched_text}");

    let pred = dir.path().join("pred.vrt");
    ok(["apply", s(&patched), s(&left), "-o", s(&pred)]);
    let eval = ok(["eval", s(&pred), s(&right), "--scheme", "TGT"]);
    assert!(stdout_of(&eval).contains("accuracy=1.000000"), "{eval:?}");

    // Learning on top of an already patched mapping is refused.
    let again = tagmap(["patch", s(&patched), s(&pac)]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr_of(&again).contains("already contains"), "{again:?}");
}

#[test]
fn compose_chains_two_mapping_files() {
    let dir = tempdir().unwrap();
    let first = dir.path().join("first.map");
    let second = dir.path().join("second.map");
    fs::write(
        &first,
        "source=S\ntarget=M\nfallback=fail\nrule\tA\tP\nrule\tB\tQ\n",
    )
    .unwrap();
    fs::write(
        &second,
        "source=M\ntarget=T\nfallback=fail\nrule\tP\tU\nrule\tQ\tV\n",
    )
    .unwrap();

    let composed = dir.path().join("composed.map");
    ok(["compose", s(&first), s(&second), "-o", s(&composed)]);
    let text = fs::read_to_string(&composed).unwrap();
    assert!(text.contains("source=S"), "{text}");
    assert!(text.contains("target=T"), "{text}");
    assert!(text.contains("rule\tA\tU"), "{text}");
    assert!(text.contains("rule\tB\tV"), "{text}");

    let input = dir.path().join("in.vrt");
    fs::write(&input, "x\tA\ny\tB\n").unwrap();
    let run = ok(["apply", s(&composed), s(&input)]);
    assert_eq!(stdout_of(&run), "x\tU\ny\tV\n");
}

#[test]
fn missing_input_fails_without_partial_output() {
    let dir = tempdir().unwrap();
    let absent = dir.path().join("absent.vrt");
    let out = dir.path().join("never.pac");
    let run = tagmap([
        "align",
        s(&absent),
        s(&absent),
        "--left-scheme",
        "L",
        "--right-scheme",
        "R",
        "-o",
        s(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr_of(&run).contains("absent.vrt"), "{run:?}");
    assert!(!out.exists(), "failed run left an output behind");
}

#[test]
fn token_mismatch_diagnostic_names_the_first_divergent_unit() {
    let dir = tempdir().unwrap();
    let pred = dir.path().join("pred.vrt");
    let gold = dir.path().join("gold.vrt");
    let report = dir.path().join("report.txt");
    fs::write(&pred, "x\tX\ny\tY\n").unwrap();
    fs::write(&gold, "x\tX\nz\tY\n").unwrap();

    let run = tagmap([
        "eval",
        s(&pred),
        s(&gold),
        "--scheme",
        "T",
        "-o",
        s(&report),
    ]);
    assert_eq!(run.status.code(), Some(1));
    let err = stderr_of(&run);
    assert!(err.contains("unit 1"), "{err}");
    assert!(
        err.contains("pred.vrt") && err.contains("gold.vrt"),
        "{err}"
    );
    assert!(!report.exists(), "failed eval still wrote a report");
}

#[test]
fn usage_errors_exit_two() {
    let missing_arg = tagmap(["derive"]);
    assert_eq!(missing_arg.status.code(), Some(2));
    let unknown_flag = tagmap(["align", "--definitely-not-a-flag"]);
    assert_eq!(unknown_flag.status.code(), Some(2));
}
