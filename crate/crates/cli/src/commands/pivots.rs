use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use pivotscope::behavior::TaskTerms;
use pivotscope::cooccur_index::{build_index, sample_corpus, token_freq, Term};
use pivotscope::pivot_discovery::{
    f_scores, is_eligible, top_candidates, write_judge_requests, CandidateFilter, JudgeDecisions,
    Passthrough, PivotCandidate, Stoplist, DEFAULT_SAMPLE_SIZE, DEFAULT_TOP_K,
};
use pivotscope::seed;

use super::common::{labels_by_task, load_tasks, read_labels, read_lines, task_terms, CorpusArgs};
use crate::output::{f6, open, write_atomic, Provenance};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FilterKind {
    /// Keep every candidate.
    Passthrough,
    /// Drop punctuation, whitespace, single-byte and listed stop words.
    Stoplist,
    /// Keep what a judge response file accepts.
    Judge,
}

#[derive(Args, Debug)]
pub struct PivotsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub tasks: PathBuf,
    /// Behavior labels; when given only semantic-pivot tasks are searched.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Documents sampled per word and for the background.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub n: usize,
    /// Candidates kept per task before filtering.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    /// Root seed for the document samples.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FilterKind::Passthrough)]
    pub filter: FilterKind,
    /// Extra stop words for the stoplist filter, one per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Judge responses (JSON lines) for the judge filter.
    #[arg(long)]
    pub judge_responses: Option<PathBuf>,
    /// Also write a judge request for every candidate to this file.
    #[arg(long)]
    pub judge_requests: Option<PathBuf>,
    /// CSV output: task_id,rank,token_id,surface,f_score,fre_s,fre_t,fre_bg.
    #[arg(long)]
    pub out: PathBuf,
}

fn filter_name(f: FilterKind) -> &'static str {
    match f {
        FilterKind::Passthrough => "passthrough",
        FilterKind::Stoplist => "stoplist",
        FilterKind::Judge => "judge",
    }
}

fn term_key(term: &Term) -> String {
    term.iter()
        .map(|t| t.0.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn pivots(args: &PivotsArgs, workers: usize) -> Result<String> {
    if args.n == 0 || args.k == 0 {
        bail!("--n and --k must be at least 1");
    }
    let corpus = args.corpus.load()?;
    let vocab = corpus.vocab();
    let terms = task_terms(&load_tasks(&args.tasks)?, Some(vocab))?;
    let labels = args
        .labels
        .as_deref()
        .map(read_labels)
        .transpose()?
        .map(labels_by_task)
        .transpose()?;

    let eligible: Vec<&TaskTerms> = terms
        .iter()
        .filter(|t| !t.is_excluded())
        .filter(|t| match &labels {
            Some(map) => map.get(&t.task_id).is_some_and(|l| is_eligible(t, l)),
            None => !t.source_term.iter().any(|x| t.target_term.contains(x)),
        })
        .collect();

    let stop_words = args
        .stopwords
        .as_deref()
        .map(read_lines)
        .transpose()?
        .unwrap_or_default();
    let judge = match (args.filter, &args.judge_responses) {
        (FilterKind::Judge, Some(path)) => Some(JudgeDecisions::read_from(open(path)?)?),
        (FilterKind::Judge, None) => bail!("--filter judge needs --judge-responses"),
        _ => None,
    };
    let stoplist = Stoplist::standard(vocab).with_words(stop_words.iter().cloned());
    let filter: &dyn CandidateFilter = match args.filter {
        FilterKind::Passthrough => &Passthrough,
        FilterKind::Stoplist => &stoplist,
        FilterKind::Judge => judge.as_ref().expect("checked above"),
    };

    let tracked: BTreeSet<Term> = eligible
        .iter()
        .flat_map(|t| [t.source_term.clone(), t.target_term.clone()])
        .collect();
    let index = build_index(&corpus, &tracked, workers)?;
    let background = sample_corpus(
        &corpus,
        args.n,
        seed::derive(args.seed, "pivots/background"),
    );
    let fre_bg = token_freq(&corpus, &background)?;

    let mut rows: Vec<(String, usize, PivotCandidate)> = Vec::new();
    let mut requests: Vec<(&TaskTerms, Vec<PivotCandidate>)> = Vec::new();
    let mut skipped = 0;
    for task in &eligible {
        let side = |term: &Term, label: &str| -> Result<Option<_>> {
            let s = seed::derive(args.seed, &format!("pivots/{label}/{}", term_key(term)));
            let docs = index.sample_docs(term, args.n, s)?;
            if docs.is_empty() {
                return Ok(None);
            }
            Ok(Some(token_freq(&corpus, &docs)?))
        };
        let (Some(fre_s), Some(fre_t)) = (
            side(&task.source_term, "word")?,
            side(&task.target_term, "word")?,
        ) else {
            log::warn!("task {}: a word never occurs in the corpus", task.task_id);
            skipped += 1;
            continue;
        };
        let top = top_candidates(&f_scores(&fre_s, &fre_t, &fre_bg)?, args.k);
        for (rank, c) in top.iter().enumerate() {
            if filter.keep(c)? {
                rows.push((task.task_id.clone(), rank + 1, *c));
            }
        }
        if args.judge_requests.is_some() {
            requests.push((task, top));
        }
    }

    let mut prov = Provenance::new("pivots")
        .set("n", args.n)
        .set("k", args.k)
        .set("seed", args.seed)
        .set("filter", filter_name(args.filter))
        .set("labels", args.labels.is_some());
    if !stop_words.is_empty() {
        prov = prov.set("stopwords", stop_words.join(" "));
    }
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "task_id", "rank", "token_id", "surface", "f_score", "fre_s", "fre_t", "fre_bg",
        ])?;
        for (task_id, rank, c) in &rows {
            csv.write_record([
                task_id.clone(),
                rank.to_string(),
                c.token.to_string(),
                vocab.surface(c.token).unwrap_or_default().to_owned(),
                f6(c.f_score),
                f6(c.fre_s),
                f6(c.fre_t),
                f6(c.fre_bg),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if let Some(path) = &args.judge_requests {
        write_atomic(path, |w| {
            for (task, top) in &requests {
                write_judge_requests(&mut *w, top, vocab, [&task.source_word, &task.target_word])?;
            }
            Ok(())
        })?;
    }
    Ok(format!(
        "pivots: {} of {} tasks searched ({} skipped), {} candidates kept -> {}",
        eligible.len() - skipped,
        terms.len(),
        skipped,
        rows.len(),
        args.out.display()
    ))
}
