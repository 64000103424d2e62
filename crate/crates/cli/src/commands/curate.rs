use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pivotscope::curation::{
    assemble, build_adjacency, score_documents, select_pivots, threshold, AdjacencyStats,
    AssembleOptions, PivotSelection, RankingKey, Threshold, DEFAULT_MIN_DOCS,
};
use pivotscope::langid::{
    ChunkUnit, DocumentLanguageId, ExternalLabels, Labeler, LanguageDistribution,
    ProfileClassifier, DEFAULT_CHUNK_SIZE, DEFAULT_CHUNK_STEP,
};
use pivotscope::{Corpus, Ratio, Vocabulary};

use super::common::{parse_ratio, read_lines, CorpusArgs};
use crate::config::FileConfig;
use crate::output::{write_atomic, Provenance};

#[derive(Args, Debug)]
pub struct PivotSetArgs {
    /// Settings file (TOML); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Drop token pairs seen in fewer documents before thresholding.
    #[arg(long)]
    pub min_docs: Option<u64>,
    /// θ as a fraction of the mean token document rate [default: 0.1].
    #[arg(long, value_parser = parse_ratio)]
    pub theta_factor: Option<Ratio>,
    /// Fixed θ document rate, replacing --theta-factor.
    #[arg(long, value_parser = parse_ratio)]
    pub theta: Option<Ratio>,
    /// Share of connected tokens removed as highest-degree [default: 0.1].
    #[arg(long, value_parser = parse_ratio)]
    pub degree_cut: Option<Ratio>,
}

struct PivotSettings {
    min_docs: u64,
    theta_factor: Ratio,
    theta: Option<Ratio>,
    degree_cut: Ratio,
}

fn ratio_or(flag: Option<Ratio>, file: Option<f64>, default: Ratio) -> Result<Ratio> {
    match (flag, file) {
        (Some(r), _) => Ok(r),
        (None, Some(x)) => Ok(Ratio::from_f64(x)?),
        (None, None) => Ok(default),
    }
}

impl PivotSetArgs {
    fn settings(&self, file: &FileConfig) -> Result<PivotSettings> {
        let tenth = Ratio::new(1, 10);
        let s = PivotSettings {
            min_docs: self.min_docs.or(file.min_docs).unwrap_or(DEFAULT_MIN_DOCS),
            theta_factor: ratio_or(self.theta_factor, file.theta_factor, tenth)?,
            theta: match self.theta {
                Some(t) => Some(t),
                None => file.theta.map(Ratio::from_f64).transpose()?,
            },
            degree_cut: ratio_or(self.degree_cut, file.degree_cut, tenth)?,
        };
        if s.degree_cut > Ratio::new(1, 1) {
            bail!("degree cut {} exceeds 1", s.degree_cut);
        }
        Ok(s)
    }
}

impl PivotSettings {
    fn record(&self, prov: Provenance) -> Provenance {
        let prov = prov
            .set("min_docs", self.min_docs)
            .set("degree_cut", self.degree_cut);
        match self.theta {
            Some(t) => prov.set("theta", t),
            None => prov.set("theta_factor", self.theta_factor),
        }
    }
}

fn pivot_selection(
    corpus: &Corpus,
    s: &PivotSettings,
    workers: usize,
) -> Result<(AdjacencyStats, Threshold, PivotSelection)> {
    let stats = build_adjacency(corpus, s.min_docs, workers)?;
    let theta = match s.theta {
        Some(t) => Threshold(t),
        None => threshold(&stats, s.theta_factor)?,
    };
    let selection = select_pivots(&stats, theta, s.degree_cut)?;
    Ok((stats, theta, selection))
}

#[derive(Args, Debug)]
pub struct AdjacencyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub pivots: PivotSetArgs,
    /// CSV output: token_id,surface,doc_count,degree,status.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn adjacency(args: &AdjacencyArgs, workers: usize) -> Result<String> {
    let file = FileConfig::load(args.pivots.config.as_deref())?;
    let settings = args.pivots.settings(&file)?;
    let corpus = args.corpus.load()?;
    let (stats, theta, sel) = pivot_selection(&corpus, &settings, workers)?;
    let high: BTreeSet<_> = sel.high_degree.iter().copied().collect();
    let prov = settings.record(Provenance::new("adjacency"));
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["token_id", "surface", "doc_count", "degree", "status"])?;
        for (&t, &deg) in &sel.degrees.degree {
            let status = if deg == 0 {
                "isolated"
            } else if high.contains(&t) {
                "high_degree"
            } else {
                "pivot"
            };
            csv.write_record([
                t.to_string(),
                corpus.vocab().surface(t).unwrap_or_default().to_owned(),
                stats.token_doc_count(t).to_string(),
                deg.to_string(),
                status.to_owned(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(format!(
        "adjacency: θ = {} ({}), {} tokens, {} isolated, {} high-degree, {} pivots -> {}",
        theta.0,
        theta.value(),
        sel.degrees.degree.len(),
        sel.isolated,
        sel.high_degree.len(),
        sel.pivots.len(),
        args.out.display()
    ))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Unit {
    Tokens,
    Chars,
}

#[derive(Args, Debug)]
pub struct LangArgs {
    /// Precomputed chunk labels (JSON lines) instead of the built-in classifier.
    #[arg(long)]
    pub chunk_labels: Option<PathBuf>,
    /// Chunk length [default: 256].
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Chunk step [default: 128].
    #[arg(long)]
    pub chunk_step: Option<usize>,
    #[arg(long, value_enum, default_value_t = Unit::Tokens)]
    pub chunk_unit: Unit,
}

enum LabelSource {
    Builtin(ProfileClassifier),
    External(ExternalLabels),
}

impl LangArgs {
    fn source(&self) -> Result<LabelSource> {
        Ok(match &self.chunk_labels {
            Some(path) => LabelSource::External(ExternalLabels::load(path)?),
            None => LabelSource::Builtin(ProfileClassifier::builtin()),
        })
    }

    fn record(&self, prov: Provenance, file: &FileConfig) -> Provenance {
        let (size, step) = self.size_step(file);
        prov.set("chunk_size", size)
            .set("chunk_step", step)
            .set(
                "chunk_unit",
                match self.chunk_unit {
                    Unit::Tokens => "tokens",
                    Unit::Chars => "chars",
                },
            )
            .set(
                "chunk_labels",
                if self.chunk_labels.is_some() {
                    "external"
                } else {
                    "builtin"
                },
            )
    }

    fn size_step(&self, file: &FileConfig) -> (usize, usize) {
        (
            self.chunk_size
                .or(file.chunk_size)
                .unwrap_or(DEFAULT_CHUNK_SIZE),
            self.chunk_step
                .or(file.chunk_step)
                .unwrap_or(DEFAULT_CHUNK_STEP),
        )
    }

    fn identifier<'a>(
        &self,
        source: &'a LabelSource,
        vocab: &'a Vocabulary,
        file: &FileConfig,
    ) -> DocumentLanguageId<'a> {
        let labeler = match source {
            LabelSource::Builtin(c) => Labeler::Classifier(c),
            LabelSource::External(e) => Labeler::External(e),
        };
        let mut id = DocumentLanguageId::new(labeler, vocab);
        (id.size, id.step) = self.size_step(file);
        id.unit = match self.chunk_unit {
            Unit::Tokens => ChunkUnit::Tokens,
            Unit::Chars => ChunkUnit::Chars,
        };
        id
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Key {
    Proportion,
    Count,
}

#[derive(Args, Debug)]
pub struct CurateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub pivots: PivotSetArgs,
    #[command(flatten)]
    pub lang: LangArgs,
    /// Number of documents to select.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Rank documents by pivot proportion or pivot count [default: proportion].
    #[arg(long, value_enum)]
    pub ranking_key: Option<Key>,
    /// Documents used, in file order, to fill the budget after the ranked ones.
    #[arg(long)]
    pub padding: Option<PathBuf>,
    /// Cap ranked documents at this share of the budget.
    #[arg(long, value_parser = parse_ratio)]
    pub target_multilingual_fraction: Option<Ratio>,
    /// Manifest output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn curate(args: &CurateArgs, workers: usize) -> Result<String> {
    let file = FileConfig::load(args.pivots.config.as_deref())?;
    let settings = args.pivots.settings(&file)?;
    let budget = args
        .budget
        .or(file.budget)
        .context("a budget is required (--budget or config)")?;
    let key = match args.ranking_key {
        Some(Key::Proportion) => RankingKey::Proportion,
        Some(Key::Count) => RankingKey::Count,
        None => file.ranking_key.unwrap_or_default(),
    };
    let fraction = match args.target_multilingual_fraction {
        Some(f) => Some(f),
        None => file
            .target_multilingual_fraction
            .map(Ratio::from_f64)
            .transpose()?,
    };
    if fraction.is_some_and(|f| f > Ratio::new(1, 1)) {
        bail!("target multilingual fraction exceeds 1");
    }

    let corpus = args.corpus.load()?;
    let padding = args
        .padding
        .as_deref()
        .map(|p| args.corpus.load_with(p, Some(corpus.vocab().clone())))
        .transpose()?;
    let (_, theta, selection) = pivot_selection(&corpus, &settings, workers)?;
    let ranked = score_documents(&corpus, &selection.pivots, key);

    let source = args.lang.source()?;
    let vocab = padding.as_ref().map_or(corpus.vocab(), |p| p.vocab());
    let langid = args.lang.identifier(&source, vocab, &file);
    let options = AssembleOptions {
        budget,
        padding: padding.as_ref(),
        target_multilingual_fraction: fraction,
    };
    let manifest = assemble(&ranked, &corpus, &selection.pivots, &options, &langid)?;

    let mut prov = settings.record(Provenance::new("curate"));
    prov = prov
        .set("budget", budget)
        .set(
            "ranking_key",
            match key {
                RankingKey::Proportion => "proportion",
                RankingKey::Count => "count",
            },
        )
        .set("padding", padding.is_some());
    if let Some(f) = fraction {
        prov = prov.set("target_multilingual_fraction", f);
    }
    prov = args.lang.record(prov, &file);
    let header = manifest.header(theta, selection.pivots.len(), &prov.hash());
    write_atomic(&args.out, |w| Ok(manifest.write_jsonl(w, &header)?))?;

    let short = if manifest.short {
        " (short of budget)"
    } else {
        ""
    };
    Ok(format!(
        "curate: θ = {}, {} pivot tokens, {} of {} documents selected{}, {} with non-English chunks -> {}",
        theta.0,
        selection.pivots.len(),
        manifest.entries.len(),
        budget,
        short,
        manifest.non_english_doc_count,
        args.out.display()
    ))
}

#[derive(Args, Debug)]
pub struct LangdistArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub lang: LangArgs,
    /// Only the documents listed in this manifest (or id list).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Padding corpus the manifest may draw from.
    #[arg(long, requires = "manifest")]
    pub padding: Option<PathBuf>,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

fn manifest_ids(path: &std::path::Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for line in read_lines(path)? {
        if line.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(&line)?;
            if let Some(id) = v.get("doc_id").and_then(|d| d.as_str()) {
                ids.push(id.to_owned());
            }
        } else {
            ids.push(line);
        }
    }
    Ok(ids)
}

pub fn langdist(args: &LangdistArgs) -> Result<String> {
    let file = FileConfig::default();
    let corpus = args.corpus.load()?;
    let padding = args
        .padding
        .as_deref()
        .map(|p| args.corpus.load_with(p, Some(corpus.vocab().clone())))
        .transpose()?;
    let source = args.lang.source()?;
    let vocab = padding.as_ref().map_or(corpus.vocab(), |p| p.vocab());
    let langid = args.lang.identifier(&source, vocab, &file);

    let mut dist = LanguageDistribution::default();
    match &args.manifest {
        Some(path) => {
            for id in manifest_ids(path)? {
                let doc = corpus
                    .get(&id)
                    .or_else(|| padding.as_ref().and_then(|p| p.get(&id)))
                    .ok_or_else(|| pivotscope::Error::UnknownDocId(id.clone()))?;
                dist.add(&langid.languages(doc)?);
            }
        }
        None => {
            for doc in corpus.iter() {
                dist.add(&langid.languages(doc)?);
            }
        }
    }
    let prov = args
        .lang
        .record(Provenance::new("langdist"), &file)
        .set("subset", args.manifest.is_some());
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        dist.write_csv(w)?;
        Ok(())
    })?;
    Ok(format!(
        "langdist: {} documents, {} chunks, {} with non-English chunks -> {}",
        dist.docs,
        dist.total_chunks(),
        dist.non_english_docs,
        args.out.display()
    ))
}
