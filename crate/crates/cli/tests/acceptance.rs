//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pivotscope::behavior::{self, Behavior, LayerDistribution, LayerTrace};
use pivotscope::cooccur_index::{build_index, sample_corpus, token_freq};
use pivotscope::curation::{
    build_adjacency, score_documents, select_pivots, threshold, AdjacencyStats, RankingKey,
    Threshold,
};
use pivotscope::langid::chunks;
use pivotscope::pivot_discovery::{
    f_scores, pivot_layer_curve, top_candidates, PivotSet, Provenance,
};
use pivotscope::scoring::{calibrated_score, task_score, LossRecord, Protocol, Subject};
use pivotscope::{seed, Corpus, Document, Ratio, TokenId, Vocabulary};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

fn corpus_of(docs: Vec<Document>, vocab_size: usize, shard_size: usize) -> Corpus {
    Corpus::from_documents(docs, Vocabulary::synthetic(vocab_size), shard_size)
        .expect("valid corpus")
}

fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &x in pos {
        for &y in neg {
            wins += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let mut instances = 0u64;
    for total in 2..=8u32 {
        for code in 0..4u32.pow(total) {
            let values: Vec<f64> = (0..total).map(|i| ((code >> (2 * i)) & 3) as f64).collect();
            for split in 1..total as usize {
                let (pos, neg) = values.split_at(split);
                let got = behavior::auc(pos, neg).map_err(|e| e.to_string())?;
                let want = pairwise_auc(pos, neg);
                ensure((got - want).abs() <= 1e-12, || {
                    format!("{pos:?} vs {neg:?}: {got} != {want}")
                })?;
                instances += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{instances} instances in {:.1?}", start.elapsed()))
}

fn auc_edges() -> Outcome {
    let auc = |p: &[f64], n: &[f64]| behavior::auc(p, n).map_err(|e| e.to_string());
    ensure(auc(&[3.0, 4.0, 5.0], &[0.0, 1.0, 2.0])? == 1.0, || {
        "perfect separation".into()
    })?;
    ensure(auc(&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0])? == 0.0, || {
        "reversed".into()
    })?;
    ensure(auc(&[2.0, 2.0], &[2.0, 2.0, 2.0])? == 0.5, || {
        "all tied".into()
    })?;
    let mut rng = seed::rng(seed::derive(0, "acceptance/auc-swap"));
    for _ in 0..1000 {
        let np = rng.gen_range(1..10);
        let nn = rng.gen_range(1..10);
        let p: Vec<f64> = (0..np).map(|_| rng.gen_range(0..6) as f64).collect();
        let n: Vec<f64> = (0..nn).map(|_| rng.gen_range(0..6) as f64).collect();
        let (a, b) = (auc(&p, &n)?, auc(&n, &p)?);
        ensure((b - (1.0 - a)).abs() <= 1e-12, || {
            format!("swap {p:?} {n:?}: {a} {b}")
        })?;
    }
    Ok("separation, reversal, ties and 1000 label swaps".into())
}

fn scoring_arithmetic() -> Outcome {
    let protocol = Protocol::default();
    let mut rng = seed::rng(seed::derive(0, "acceptance/scoring"));
    let mut worst = 0.0f64;
    for task in 0..4 {
        let task_id = format!("t{task}");
        let mut records = Vec::new();
        for trial in 0..5 {
            for slot in 0..10u8 {
                let subject = if slot == 0 {
                    Subject::Source
                } else {
                    Subject::Distractor(slot - 1)
                };
                let n = rng.gen_range(1..5);
                records.push(LossRecord {
                    task_id: task_id.clone(),
                    trial,
                    subject,
                    shot_seed: rng.gen(),
                    token_logprobs: (0..n).map(|_| -rng.gen_range(0.0..8.0)).collect(),
                });
            }
        }
        let mut flat = 0.0;
        for trial in 0..5 {
            let p = |r: &LossRecord| {
                (r.token_logprobs.iter().sum::<f64>() / r.token_logprobs.len() as f64).exp()
            };
            let mut source = 0.0;
            let mut distractors = 0.0;
            for r in records.iter().filter(|r| r.trial == trial) {
                match r.subject {
                    Subject::Source => source = p(r),
                    Subject::Distractor(_) => distractors += p(r),
                }
            }
            flat += source - distractors / 9.0;
        }
        flat /= 5.0;
        records.shuffle(&mut rng);
        let got = task_score(&records, &protocol).map_err(|e| e.to_string())?;
        worst = worst.max((got - flat).abs());
        ensure((got - flat).abs() <= 1e-12, || {
            format!("{task_id}: {got} != {flat}")
        })?;
    }
    for case in 0..10_000 {
        let ps = draw_prob(&mut rng);
        let pd: Vec<f64> = (0..9).map(|_| draw_prob(&mut rng)).collect();
        let c = calibrated_score(ps, &pd, &protocol).map_err(|e| e.to_string())?;
        ensure(c > -1.0 && c < 1.0, || {
            format!("case {case}: {c} outside (-1, 1)")
        })?;
    }
    Ok(format!(
        "200 records within {worst:.1e}, 10000 bounded scores"
    ))
}

fn draw_prob(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..20) {
        0 => f64::MIN_POSITIVE,
        1 => 1.0,
        _ => 1.0 - rng.gen::<f64>(),
    }
}

fn planted_pivot_rank(root: u64) -> bool {
    const S: u32 = 0;
    const T: u32 = 1;
    const P: u32 = 2;
    let mut rng = seed::rng(seed::derive(root, "acceptance/planted-pivot"));
    let docs: Vec<Document> = (0..5000)
        .map(|i| {
            let (anchor, rate) = match i {
                0..=499 => (Some(S), 0.8),
                500..=999 => (Some(T), 0.7),
                _ => (None, 0.05),
            };
            let mut tokens: Vec<u32> = (0..30)
                .map(|_| 3 + (997.0 * rng.gen::<f64>().powi(2)) as u32)
                .collect();
            tokens.extend(anchor);
            if rng.gen_bool(rate) {
                tokens.push(P);
            }
            tokens.shuffle(&mut rng);
            Document::new(format!("d{i:04}"), tokens)
        })
        .collect();
    let corpus = corpus_of(docs, 1000, 4096);
    let terms: BTreeSet<Vec<TokenId>> = [vec![TokenId(S)], vec![TokenId(T)]].into();
    let index = build_index(&corpus, &terms, 1).expect("index");
    let freq = |term: u32, label: &str| {
        let ids = index
            .sample_docs(&[TokenId(term)], 2000, seed::derive(root, label))
            .expect("sample");
        token_freq(&corpus, &ids).expect("freq")
    };
    let fre_s = freq(S, "s");
    let fre_t = freq(T, "t");
    let bg_ids = sample_corpus(&corpus, 2000, seed::derive(root, "bg"));
    let fre_bg = token_freq(&corpus, &bg_ids).expect("freq");
    let candidates = f_scores(&fre_s, &fre_t, &fre_bg).expect("f");
    top_candidates(&candidates, 3)
        .iter()
        .any(|c| c.token == TokenId(P))
}

fn pivot_recovery() -> Outcome {
    let start = Instant::now();
    let hits = (0..100u64).filter(|&s| planted_pivot_rank(s)).count();
    ensure(hits >= 95, || {
        format!("planted pivot in top 3 for {hits}/100 seeds")
    })?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "top 3 in {hits}/100 seeds, {:.1?}",
        start.elapsed()
    ))
}

fn random_docs(rng: &mut impl Rng, n: usize, vocab: u32) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..16);
            Document::new(
                format!("d{i:02}"),
                (0..len).map(|_| rng.gen_range(0..vocab)),
            )
        })
        .collect()
}

/// Returns false when the pruning guard rejected the configuration.
fn curation_case(trial: u64) -> Result<bool, String> {
    const V: u32 = 30;
    let mut rng = seed::rng(seed::derive(trial, "acceptance/curation"));
    let docs = random_docs(&mut rng, 50, V);
    let n = docs.len() as u128;
    let min_docs = rng.gen_range(1..4u64);
    let (fp, fq) = (rng.gen_range(1..30u128), rng.gen_range(1..60u128));
    let (cp, cq) = (rng.gen_range(0..5u128), 10u128);
    let corpus = corpus_of(docs.clone(), V as usize, rng.gen_range(1..20));
    let stats =
        build_adjacency(&corpus, min_docs, rng.gen_range(1..5)).map_err(|e| e.to_string())?;

    let sets: Vec<BTreeSet<u32>> = docs
        .iter()
        .map(|d| d.tokens.iter().map(|t| t.0).collect())
        .collect();
    let df = |t: u32| sets.iter().filter(|s| s.contains(&t)).count() as u64;
    let codf = |a: u32, b: u32| {
        sets.iter()
            .filter(|s| s.contains(&a) && s.contains(&b))
            .count() as u64
    };
    let present: Vec<u32> = (0..V).filter(|&t| df(t) > 0).collect();
    let mut kept_pairs = 0;
    for &a in &present {
        ensure(stats.token_doc_count(TokenId(a)) == df(a), || {
            format!("df({a})")
        })?;
        for &b in present.iter().filter(|&&b| b > a) {
            let c = codf(a, b);
            let want = if c >= min_docs { c } else { 0 };
            kept_pairs += usize::from(want > 0);
            ensure(stats.pair_doc_count(TokenId(a), TokenId(b)) == want, || {
                format!(
                    "codf({a},{b}) = {} want {want}",
                    stats.pair_doc_count(TokenId(a), TokenId(b))
                )
            })?;
        }
    }
    ensure(stats.n_pairs() == kept_pairs, || "pair count".into())?;
    ensure(stats.token_doc_counts().len() == present.len(), || {
        "token count".into()
    })?;

    let sum_df: u128 = present.iter().map(|&t| df(t) as u128).sum();
    let (tn, td) = (fp * sum_df, fq * present.len() as u128 * n);
    let theta = threshold(&stats, Ratio::new(fp, fq)).map_err(|e| e.to_string())?;
    ensure(theta.0 == Ratio::new(tn, td), || {
        format!("theta {} want {tn}/{td}", theta.0)
    })?;

    let admits = |c: u64| c as u128 * td >= tn * n;
    let selection = select_pivots(&stats, theta, Ratio::new(cp, cq));
    if min_docs > 1 && admits(min_docs - 1) {
        ensure(selection.is_err(), || "lossy pruning accepted".into())?;
        return Ok(false);
    }
    let selection = selection.map_err(|e| e.to_string())?;
    let mut degree: BTreeMap<u32, u64> = present.iter().map(|&t| (t, 0)).collect();
    for &a in &present {
        for &b in present.iter().filter(|&&b| b > a) {
            let c = codf(a, b);
            if c >= min_docs && admits(c) {
                *degree.get_mut(&a).unwrap() += 1;
                *degree.get_mut(&b).unwrap() += 1;
            }
        }
    }
    let mut survivors: Vec<(u32, u64)> = degree.into_iter().filter(|&(_, d)| d > 0).collect();
    survivors.sort_by_key(|&(t, d)| (std::cmp::Reverse(d), t));
    let cut = (cp * survivors.len() as u128).div_ceil(cq) as usize;
    let pivots: BTreeSet<TokenId> = survivors[cut.min(survivors.len())..]
        .iter()
        .map(|&(t, _)| TokenId(t))
        .collect();
    ensure(selection.pivots == pivots, || {
        format!("pivots {:?} want {pivots:?}", selection.pivots)
    })?;

    let ranked = score_documents(&corpus, &pivots, RankingKey::Proportion);
    let mut want: Vec<(f64, u64, String)> = docs
        .iter()
        .map(|d| {
            let c = d.tokens.iter().filter(|t| pivots.contains(t)).count() as u64;
            (c as f64 / d.tokens.len() as f64, c, d.doc_id.clone())
        })
        .collect();
    want.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let got: Vec<(u64, &str)> = ranked
        .iter()
        .map(|s| (s.pivot_count, s.doc_id.as_str()))
        .collect();
    let want: Vec<(u64, &str)> = want.iter().map(|w| (w.1, w.2.as_str())).collect();
    ensure(got == want, || "document ranking".into())?;
    Ok(true)
}

fn shard_merge_case(trial: u64) -> Result<(), String> {
    let mut rng = seed::rng(seed::derive(trial, "acceptance/shard-merge"));
    let docs = random_docs(&mut rng, 50, 30);
    let parts = rng.gen_range(2..8);
    let mut shards: Vec<Vec<&Document>> = vec![Vec::new(); parts];
    for d in &docs {
        shards[rng.gen_range(0..parts)].push(d);
    }
    let merged = shards
        .into_iter()
        .map(AdjacencyStats::from_documents)
        .reduce(AdjacencyStats::merge)
        .expect("parts");
    ensure(merged == AdjacencyStats::from_documents(&docs), || {
        format!("trial {trial}")
    })
}

fn curation_oracle() -> Outcome {
    let mut full = 0;
    for trial in 0..100 {
        full += usize::from(curation_case(trial).map_err(|e| format!("corpus {trial}: {e}"))?);
    }
    for trial in 0..100 {
        shard_merge_case(trial)?;
    }
    Ok(format!(
        "100 corpora match brute force ({} rejected by the pruning guard), 100 shard splits merge exactly",
        100 - full
    ))
}

fn curation_separation() -> Outcome {
    // ids: 0..20 function words, 20..220 background content, 220..320
    // planted pivot vocabulary, then one fresh id per hapax occurrence
    let mut rng = seed::rng(seed::derive(0, "acceptance/separation"));
    let mut next_hapax = 320u32;
    let mut hapax = || {
        next_hapax += 1;
        next_hapax - 1
    };
    let mut docs = Vec::new();
    for i in 0..10_000 {
        let planted = i % 10 == 0;
        let mut tokens = Vec::with_capacity(20);
        if planted {
            tokens.extend((0..10).map(|_| rng.gen_range(220..320)));
            tokens.extend((0..5).map(|_| rng.gen_range(0..20)));
            tokens.extend((0..5).map(|_| hapax()));
        } else {
            tokens.extend((0..10).map(|_| rng.gen_range(0..20)));
            tokens.extend((0..2).map(|_| rng.gen_range(20..220)));
            tokens.extend((0..8).map(|_| hapax()));
        }
        tokens.shuffle(&mut rng);
        let kind = if planted { "planted" } else { "plain" };
        docs.push(Document::new(format!("{kind}-{i:05}"), tokens));
    }
    let corpus = corpus_of(docs, next_hapax as usize, 4096);
    let stats = build_adjacency(&corpus, 2, 4).map_err(|e| e.to_string())?;
    // a unit factor keeps θ·N above min_docs - 1 for this hapax-heavy corpus
    let theta: Threshold = threshold(&stats, Ratio::new(1, 1)).map_err(|e| e.to_string())?;
    let selection = select_pivots(&stats, theta, Ratio::new(1, 10)).map_err(|e| e.to_string())?;
    let ranked = score_documents(&corpus, &selection.pivots, RankingKey::Proportion);
    let planted = ranked[..1000]
        .iter()
        .filter(|s| s.doc_id.starts_with("planted"))
        .count();
    ensure(planted >= 900, || {
        format!("{planted}/1000 planted in the top 1000")
    })?;
    Ok(format!("{planted}/1000 planted docs in the top 1000"))
}

fn chunking() -> Outcome {
    let mut checked = 0;
    for (size, step) in [(256, 128), (256, 256), (256, 1), (100, 30)] {
        for len in 1..=2048usize {
            let spans = chunks(len, size, step).map_err(|e| e.to_string())?;
            let want = if len <= size {
                1
            } else {
                (len - size).div_ceil(step) + 1
            };
            let ctx = || format!("len {len} size {size} step {step}");
            ensure(spans.len() == want, || {
                format!("{}: {} spans", ctx(), spans.len())
            })?;
            ensure(spans[0].start == 0, ctx)?;
            ensure(spans.last().unwrap().end == len, ctx)?;
            for (i, s) in spans.iter().enumerate() {
                ensure(s.start < s.end && s.end <= len && s.len() <= size, ctx)?;
                ensure(s.start == i * step, ctx)?;
                if i + 1 < spans.len() {
                    ensure(s.len() == size, ctx)?;
                    ensure(spans[i + 1].start <= s.end, ctx)?;
                    ensure(s.end - spans[i + 1].start == size - step, ctx)?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} length and window combinations"))
}

fn scenario_trace(
    task_id: &str,
    input: &[u32],
    output: &[u32],
    layers: &[(u32, f64)],
) -> LayerTrace {
    LayerTrace {
        v: behavior::TRACE_SCHEMA_VERSION,
        task_id: task_id.into(),
        n_layers: layers.len(),
        vocab_size: 32,
        input_token_ids: input.iter().map(|&t| TokenId(t)).collect(),
        output_token_ids: output.iter().map(|&t| TokenId(t)).collect(),
        source_token_ids: None,
        layers: layers
            .iter()
            .map(|&(t, p)| LayerDistribution {
                top_k: vec![(TokenId(t), p), (TokenId(31), p / 4.0)],
                tracked: BTreeMap::new(),
            })
            .collect(),
    }
}

fn behavior_fixture() -> Outcome {
    let vocab = Vocabulary::from_surfaces([
        "the",
        ":",
        "bio",
        "logie",
        "logy",
        "bron",
        "chite",
        "chitis",
        "lung",
        "français",
        "english",
    ])
    .map_err(|e| e.to_string())?;
    let id = |s: &str| vocab.id(s).expect("surface").0;
    let prompt = |w: &[&str]| -> Vec<u32> {
        let mut ids: Vec<u32> = ["français", ":", "english", ":", "the"]
            .iter()
            .map(|s| id(s))
            .collect();
        ids.extend(w.iter().map(|s| id(s)));
        ids
    };
    let biology = scenario_trace(
        "biologie-biology",
        &prompt(&["bio", "logie"]),
        &[id("bio"), id("logy")],
        &[
            (id("the"), 0.04),
            (id(":"), 0.09),
            (id("bio"), 0.62),
            (id("bio"), 0.48),
        ],
    );
    let bronchitis = scenario_trace(
        "bronchite-bronchitis",
        &prompt(&["bron", "chite"]),
        &[id("bron"), id("chitis")],
        &[
            (id("the"), 0.05),
            (id("lung"), 0.21),
            (id("lung"), 0.37),
            (id("bron"), 0.33),
        ],
    );
    for (trace, want, peak) in [
        (&biology, Behavior::Cooccurrence, "bio"),
        (&bronchitis, Behavior::SemanticPivot, "lung"),
    ] {
        trace.validate().map_err(|e| e.to_string())?;
        let label = behavior::classify(trace).map_err(|e| e.to_string())?;
        ensure(
            label.label == want && label.peak_token == TokenId(id(peak)),
            || {
                format!(
                    "{}: {:?} peak {}",
                    trace.task_id, label.label, label.peak_token
                )
            },
        )?;
    }
    Ok("biology is co-occurrence at `bio`, bronchitis is a semantic pivot at `lung`".into())
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pivotscope"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{} failed: {}",
            args[2],
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn pipeline(dir: &Path, workers: &str) -> Result<(), String> {
    let fx = fixture_dir();
    let f = |name: &str| fx.join(name).display().to_string();
    let o = |name: &str| dir.join(name).display().to_string();
    let langs = "en,fr,zh,ja".to_string();
    let corpus = [
        "--corpus".into(),
        f("corpus.jsonl"),
        "--vocab".into(),
        f("vocab.txt"),
        "--shard-size".into(),
        "16".into(),
    ];
    let tasks = ["--tasks".into(), f("tasks.jsonl")];
    let owned = |xs: &[&str]| -> Vec<String> { xs.iter().map(|x| x.to_string()).collect() };
    let steps: Vec<Vec<String>> = vec![
        [
            owned(&["score"]),
            tasks.to_vec(),
            vec![
                "--losses".into(),
                f("losses.jsonl"),
                "--languages".into(),
                langs.clone(),
                "--out".into(),
                o("matrix.csv"),
            ],
        ]
        .concat(),
        vec![
            "classify".into(),
            "--traces".into(),
            f("traces.jsonl"),
            "--out".into(),
            o("labels.jsonl"),
        ],
        [
            owned(&["index"]),
            corpus.to_vec(),
            tasks.to_vec(),
            vec!["--out".into(), o("index.bin")],
        ]
        .concat(),
        [
            owned(&["cooccur", "--index"]),
            vec![
                o("index.bin"),
                "--vocab".into(),
                f("vocab.txt"),
                "--out".into(),
                o("stats.bin"),
            ],
            tasks.to_vec(),
        ]
        .concat(),
        [
            owned(&["auc", "--labels"]),
            vec![
                o("labels.jsonl"),
                "--stats".into(),
                o("stats.bin"),
                "--vocab".into(),
                f("vocab.txt"),
            ],
            vec!["--languages".into(), langs, "--out".into(), o("auc.csv")],
            tasks.to_vec(),
        ]
        .concat(),
        [
            owned(&["pivots"]),
            corpus.to_vec(),
            tasks.to_vec(),
            vec![
                "--labels".into(),
                o("labels.jsonl"),
                "--out".into(),
                o("pivots.csv"),
            ],
            owned(&["--k", "10", "--filter", "stoplist"]),
        ]
        .concat(),
        [
            owned(&["curate"]),
            corpus.to_vec(),
            vec![
                "--config".into(),
                f("curate.toml"),
                "--padding".into(),
                f("padding.jsonl"),
                "--out".into(),
                o("manifest.jsonl"),
            ],
        ]
        .concat(),
    ];
    for step in steps {
        let args: Vec<&str> = ["--workers", workers]
            .into_iter()
            .chain(step.iter().map(String::as_str))
            .collect();
        run_cli(&args)?;
    }
    Ok(())
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (one, four) = (tmp.path().join("w1"), tmp.path().join("w4"));
    for (dir, w) in [(&one, "1"), (&four, "4")] {
        std::fs::create_dir(dir).map_err(|e| e.to_string())?;
        pipeline(dir, w)?;
    }
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for name in ["matrix.csv", "auc.csv", "pivots.csv", "manifest.jsonl"] {
        let expected = read(fixture_dir().join("expected").join(name))?;
        ensure(read(one.join(name))? == expected, || {
            format!("{name} differs from the expected file")
        })?;
    }
    let outputs = [
        "matrix.csv",
        "labels.jsonl",
        "index.bin",
        "stats.bin",
        "auc.csv",
        "pivots.csv",
        "manifest.jsonl",
    ];
    for name in outputs {
        ensure(read(one.join(name))? == read(four.join(name))?, || {
            format!("{name} depends on --workers")
        })?;
    }
    Ok("score, auc, pivots and curate byte-identical; 4 workers match 1".into())
}

fn uniform_curve() -> Outcome {
    const V: usize = 50_253;
    let p = 1.0 / V as f64;
    let pivots = PivotSet {
        pair_id: "uniform".into(),
        tokens: (1000..1050).map(TokenId).collect(),
        provenance: Provenance::Candidate,
    };
    let trace = |task: usize| {
        let mut tracked: BTreeMap<TokenId, f64> = pivots.tokens.iter().map(|&t| (t, p)).collect();
        tracked.insert(TokenId(7), p);
        LayerTrace {
            v: behavior::TRACE_SCHEMA_VERSION,
            task_id: format!("uniform-{task}"),
            n_layers: 32,
            vocab_size: V,
            input_token_ids: [TokenId(3), TokenId(4)].into(),
            output_token_ids: [TokenId(7)].into(),
            source_token_ids: None,
            layers: vec![
                LayerDistribution {
                    top_k: vec![(TokenId(0), p), (TokenId(1), p)],
                    tracked,
                };
                32
            ],
        }
    };
    let traces: Vec<LayerTrace> = (0..3).map(trace).collect();
    let curve = pivot_layer_curve(&traces, &pivots).map_err(|e| e.to_string())?;
    let chance = 50.0 / V as f64;
    let worst = curve.iter().map(|c| (c - chance).abs()).fold(0.0, f64::max);
    ensure(curve.len() == 32 && worst <= 1e-9, || {
        format!("deviation {worst:e}")
    })?;
    Ok(format!(
        "flat at 50/{V} = {chance:.6e}, max deviation {worst:.1e}"
    ))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AUC oracle equivalence", auc_oracle),
        ("AUC edge cases", auc_edges),
        ("scoring arithmetic", scoring_arithmetic),
        ("pivot recovery", pivot_recovery),
        ("curation oracle equivalence", curation_oracle),
        ("curation separation", curation_separation),
        ("chunking properties", chunking),
        ("behavior fixture", behavior_fixture),
        ("end-to-end CLI fixture", end_to_end),
        ("uniform-trace curve baseline", uniform_curve),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(panic_message(e.as_ref())));
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
