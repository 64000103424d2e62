use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use pivotscope::cooccur_index::{build_index, sample_corpus, token_freq, InvertedIndex, Term};
use pivotscope::{seed, TokenId};

use super::common::{load_tasks, load_vocab, read_lines, task_terms, CorpusArgs};
use crate::output::{f6, open, write_atomic, Provenance};

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Normalized corpus output.
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary output; needed in raw mode to keep the token ids.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

pub fn ingest(args: &IngestArgs) -> Result<String> {
    let corpus = args.corpus.load()?;
    let prov = Provenance::new("ingest").set("raw", args.corpus.raw);
    write_atomic(&args.out, |w| {
        w.write_all(prov.jsonl_record().as_bytes())?;
        corpus.write_jsonl(w)?;
        Ok(())
    })?;
    if let Some(path) = &args.vocab_out {
        write_atomic(path, |w| Ok(corpus.vocab().write_to(w)?))?;
    }
    Ok(format!(
        "ingest: {} documents ({} empty dropped), vocabulary {} -> {}",
        corpus.total_docs(),
        corpus.dropped_empty(),
        corpus.vocab().len(),
        args.out.display()
    ))
}

fn parse_term(s: &str) -> Result<Term> {
    let term: Term = s
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<u32>()
                .map(TokenId)
                .with_context(|| format!("bad token id `{p}`"))
        })
        .collect::<Result<_>>()?;
    if term.is_empty() {
        bail!("empty term");
    }
    Ok(term)
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Track the source and target words of these tasks.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Track these terms, one per line as space-separated token ids.
    #[arg(long)]
    pub terms: Option<PathBuf>,
    /// Binary index output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn index(args: &IndexArgs, workers: usize) -> Result<String> {
    let corpus = args.corpus.load()?;
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    if let Some(path) = &args.tasks {
        for t in task_terms(&load_tasks(path)?, Some(corpus.vocab()))? {
            terms.insert(t.source_term);
            terms.insert(t.target_term);
        }
    }
    if let Some(path) = &args.terms {
        for line in read_lines(path)? {
            terms.insert(parse_term(&line)?);
        }
    }
    if terms.is_empty() {
        bail!("nothing to index: pass --tasks and/or --terms");
    }
    let idx = build_index(&corpus, &terms, workers)?;
    write_atomic(&args.out, |w| Ok(idx.write_to(w)?))?;
    Ok(format!(
        "index: {} terms over {} documents -> {}",
        terms.len(),
        idx.total_docs(),
        args.out.display()
    ))
}

fn load_index(path: &std::path::Path) -> Result<InvertedIndex> {
    InvertedIndex::read_from(open(path)?)
        .with_context(|| format!("reading index {}", path.display()))
}

#[derive(Args, Debug)]
pub struct CooccurArgs {
    /// Index built over the tasks' words.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    /// Vocabulary for tasks without exported token ids.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Binary stats output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cooccur(args: &CooccurArgs) -> Result<String> {
    let idx = load_index(&args.index)?;
    let vocab = load_vocab(args.vocab.as_deref())?;
    let terms = task_terms(&load_tasks(&args.tasks)?, vocab.as_ref())?;
    let pairs: Vec<(Term, Term)> = terms
        .iter()
        .filter(|t| !t.is_excluded())
        .map(|t| (t.source_term.clone(), t.target_term.clone()))
        .collect();
    let stats = idx.stats(&pairs)?;
    write_atomic(&args.out, |w| Ok(stats.write_to(w)?))?;
    Ok(format!(
        "cooccur: {} pairs ({} excluded) over {} documents -> {}",
        stats.codf.len(),
        terms.len() - pairs.len(),
        stats.total_docs,
        args.out.display()
    ))
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Sample among documents containing a term of this index.
    #[arg(long, conflicts_with = "corpus")]
    pub index: Option<PathBuf>,
    /// Term as space-separated token ids.
    #[arg(long, requires = "index")]
    pub term: Option<String>,
    /// Sample uniformly from the whole corpus instead.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Number of documents.
    #[arg(long, default_value_t = pivotscope::pivot_discovery::DEFAULT_SAMPLE_SIZE)]
    pub n: usize,
    /// Root seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Document ids output, one per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sample(args: &SampleArgs) -> Result<String> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let mut prov = Provenance::new("sample")
        .set("n", args.n)
        .set("seed", args.seed);
    let ids: Vec<String> = match (&args.index, &args.corpus) {
        (Some(index), None) => {
            let term_text = args
                .term
                .as_deref()
                .context("--term is required with --index")?;
            let term = parse_term(term_text)?;
            let key = term
                .iter()
                .map(|t| t.0.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            prov = prov.set("term", &key);
            let idx = load_index(index)?;
            let s = seed::derive(args.seed, &format!("sample/{key}"));
            idx.sample_docs(&term, args.n, s)?
                .into_iter()
                .map(str::to_owned)
                .collect()
        }
        (None, Some(path)) => {
            prov = prov.set("term", "*");
            let corpus = pivotscope::Corpus::ingest_jsonl(
                path,
                pivotscope::corpus::IngestMode::Pretokenized,
                None,
                pivotscope::corpus::DEFAULT_SHARD_SIZE,
            )?;
            let s = seed::derive(args.seed, "sample/*");
            sample_corpus(&corpus, args.n, s)
                .into_iter()
                .map(str::to_owned)
                .collect()
        }
        _ => bail!("pass exactly one of --index or --corpus"),
    };
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        for id in &ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })?;
    Ok(format!(
        "sample: {} documents -> {}",
        ids.len(),
        args.out.display()
    ))
}

#[derive(Args, Debug)]
pub struct FreqArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Document ids, one per line (as written by `sample`).
    #[arg(long)]
    pub docs: PathBuf,
    /// CSV output: token_id,count,sample_size,freq.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn freq(args: &FreqArgs) -> Result<String> {
    let corpus = args.corpus.load()?;
    let ids = read_lines(&args.docs)?;
    let table = token_freq(&corpus, &ids)?;
    let prov = Provenance::new("freq").set("sample_size", table.sample_size());
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        writeln!(w, "token_id,count,sample_size,freq")?;
        for t in table.tokens() {
            writeln!(
                w,
                "{},{},{},{}",
                t,
                table.count(t),
                table.sample_size(),
                f6(table.freq(t))
            )?;
        }
        Ok(())
    })?;
    Ok(format!(
        "freq: {} tokens over {} documents -> {}",
        table.tokens().count(),
        table.sample_size(),
        args.out.display()
    ))
}
