use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/toy")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotscope"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_json(out: &Output) -> serde_json::Value {
    let line = String::from_utf8(out.stderr.clone()).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert!(v["error"]["message"].is_string());
    v["error"]["kind"].clone()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn missing_input_is_a_json_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "score",
        "--tasks",
        "no-such-file",
        "--losses",
        "x",
        "--out",
        &path(dir.path(), "m.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out), "io");
    assert!(!dir.path().join("m.csv").exists());
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = run(&["score", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out), "usage");
    let out = run(&["--workers", "0", "classify", "--traces", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "ingest",
        "index",
        "cooccur",
        "sample",
        "freq",
        "pivots",
        "classify",
        "auc",
        "score",
        "curve",
        "adjacency",
        "curate",
        "langdist",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn reruns_reproduce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<String> = ["a.csv", "b.csv"]
        .iter()
        .map(|n| path(dir.path(), n))
        .collect();
    for out in &outs {
        ok(&[
            "score",
            "--tasks",
            &fixture("tasks.jsonl"),
            "--losses",
            &fixture("losses.jsonl"),
            "--out",
            out,
        ]);
    }
    let first = read(&outs[0]);
    assert_eq!(first, read(&outs[1]));
    let header = first.lines().next().unwrap();
    let hash = header.strip_prefix("# pivotscope score config=").unwrap();
    assert!(hash.len() == 16 && hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn the_seed_only_moves_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let sample = |seed: &str, name: &str| {
        let out = path(dir.path(), name);
        ok(&[
            "sample",
            "--corpus",
            &fixture("corpus.jsonl"),
            "--n",
            "20",
            "--seed",
            seed,
            "--out",
            &out,
        ]);
        read(out)
            .lines()
            .skip(1)
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let a = sample("1", "a.txt");
    assert_eq!(a.len(), 20);
    assert_eq!(a, sample("1", "b.txt"));
    assert_ne!(a, sample("2", "c.txt"));
}

#[test]
fn raw_ingest_feeds_the_counting_commands() {
    let dir = tempfile::tempdir().unwrap();
    let raw = path(dir.path(), "raw.jsonl");
    std::fs::write(
        &raw,
        concat!(
            "{\"doc_id\":\"a\",\"text\":\"the lung is cold\"}\n",
            "{\"doc_id\":\"b\",\"text\":\"\"}\n",
            "{\"doc_id\":\"c\",\"text\":\"le poumon est froid , the lung\"}\n",
        ),
    )
    .unwrap();
    let (corpus, vocab) = (
        path(dir.path(), "corpus.jsonl"),
        path(dir.path(), "vocab.txt"),
    );
    ok(&[
        "ingest",
        "--corpus",
        &raw,
        "--raw",
        "--out",
        &corpus,
        "--vocab-out",
        &vocab,
    ]);
    let lines: Vec<String> = read(&corpus).lines().map(String::from).collect();
    assert!(lines[0].starts_with("{\"pivotscope\":"));
    assert_eq!(lines.len(), 3, "empty document dropped");
    assert_eq!(read(&vocab).lines().next(), Some("the"));

    let freq = path(dir.path(), "freq.csv");
    let ids = path(dir.path(), "ids.txt");
    std::fs::write(&ids, "a\nc\n").unwrap();
    ok(&[
        "freq", "--corpus", &corpus, "--vocab", &vocab, "--docs", &ids, "--out", &freq,
    ]);
    let freq = read(freq);
    assert!(freq
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("token_id,count,sample_size,freq"));
    assert!(
        freq.contains("\n0,2,2,1.000000\n"),
        "`the` in both documents"
    );
}

#[test]
fn curve_adjacency_and_langdist_run_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let curve = path(dir.path(), "curve.csv");
    // the traces track only the target words and the five planted pivot words
    let out = run(&[
        "curve",
        "--traces",
        &fixture("traces.jsonl"),
        "--pivots",
        &fixture("expected/pivots.csv"),
        "--out",
        &curve,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out), "missing_tracked_token");
    ok(&[
        "curve",
        "--traces",
        &fixture("traces.jsonl"),
        "--pivot-tokens",
        "227,228,229,230,231",
        "--out",
        &curve,
    ]);
    let curve = read(curve);
    let rows: Vec<&str> = curve.lines().skip(2).collect();
    assert_eq!(
        curve.lines().nth(1),
        Some("layer_index,mean_pivot_prob,mean_target_prob")
    );
    assert_eq!(rows.len(), 8);

    let corpus = [
        "--corpus",
        &fixture("corpus.jsonl"),
        "--vocab",
        &fixture("vocab.txt"),
    ];
    let adj: PathBuf = dir.path().join("adj.csv");
    ok(&[
        &["adjacency"],
        &corpus[..],
        &[
            "--config",
            &fixture("curate.toml"),
            "--out",
            &path(dir.path(), "adj.csv"),
        ],
    ]
    .concat());
    let adj = read(adj);
    let pivots = adj.lines().filter(|l| l.ends_with(",pivot")).count();
    let manifest = read(fixture("expected/manifest.jsonl"));
    let header: serde_json::Value = serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    assert_eq!(header["pivot_set_size"], pivots);

    let dist = path(dir.path(), "dist.csv");
    let manifest_args = [
        "--manifest",
        &fixture("expected/manifest.jsonl"),
        "--padding",
        &fixture("padding.jsonl"),
    ];
    ok(&[
        &["langdist"],
        &corpus[..],
        &manifest_args[..],
        &["--out", &dist],
    ]
    .concat());
    let dist = read(dist);
    let values: Vec<&str> = dist.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(
        dist.lines().nth(1),
        Some("fr,zh,ja,en,other,non_english_docs,docs")
    );
    assert_eq!(values[5], header["non_english_doc_count"].to_string());
    assert_eq!(values[6], "40");
}
