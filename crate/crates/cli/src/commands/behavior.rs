use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pivotscope::behavior::{
    self, behavior_report, classify as classify_trace, LabelVariant, LayerTrace,
};
use pivotscope::cooccur_index::CooccurStats;
use pivotscope::pivot_discovery::{layer_curves, PivotSet, Provenance as SetProvenance};
use pivotscope::TokenId;
use rayon::prelude::*;

use super::common::{load_tasks, load_vocab, parse_languages, read_labels, task_terms};
use crate::output::{f6, open, write_atomic, Provenance};

fn load_traces(path: &std::path::Path) -> Result<Vec<LayerTrace>> {
    behavior::read_traces(open(path)?)
        .with_context(|| format!("reading traces from {}", path.display()))
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Logit-lens traces, one JSON trace per line.
    #[arg(long)]
    pub traces: PathBuf,
    /// Behavior labels output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn classify(args: &ClassifyArgs, workers: usize) -> Result<String> {
    let traces = load_traces(&args.traces)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let labels = pool.install(|| {
        traces
            .par_iter()
            .map(classify_trace)
            .collect::<pivotscope::Result<Vec<_>>>()
    })?;
    let prov = Provenance::new("classify");
    write_atomic(&args.out, |w| {
        w.write_all(prov.jsonl_record().as_bytes())?;
        for l in &labels {
            serde_json::to_writer(&mut *w, l)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    let pivots = labels
        .iter()
        .filter(|l| l.label == behavior::Behavior::SemanticPivot)
        .count();
    Ok(format!(
        "classify: {} traces, {} co-occurrence, {} semantic pivot -> {}",
        labels.len(),
        labels.len() - pivots,
        pivots,
        args.out.display()
    ))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Variant {
    /// The whole prompt counts as input.
    Full,
    /// Only the source word counts as input.
    SourceOnly,
}

#[derive(Args, Debug)]
pub struct AucArgs {
    /// Behavior labels from `classify`.
    #[arg(long)]
    pub labels: PathBuf,
    /// Co-occurrence stats from `cooccur`.
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    /// Vocabulary for tasks without exported token ids.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Only these ordered pairs, e.g. `en-fr,en-zh`.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Row and column order, e.g. `en,fr,zh,ja`.
    #[arg(long)]
    pub languages: Option<String>,
    #[arg(long, value_enum, default_value_t = Variant::Full)]
    pub variant: Variant,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn auc(args: &AucArgs) -> Result<String> {
    let vocab = load_vocab(args.vocab.as_deref())?;
    let mut terms = task_terms(&load_tasks(&args.tasks)?, vocab.as_ref())?;
    let stats = CooccurStats::read_from(open(&args.stats)?)
        .with_context(|| format!("reading stats {}", args.stats.display()))?;
    let mut labels = read_labels(&args.labels)?;
    let mut prov = Provenance::new("auc").set(
        "variant",
        match args.variant {
            Variant::Full => "full",
            Variant::SourceOnly => "source-only",
        },
    );
    if let Some(pairs) = &args.pairs {
        let mut wanted = BTreeSet::new();
        for p in pairs.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (s, t) = p
                .split_once('-')
                .with_context(|| format!("bad pair `{p}`, expected src-tgt"))?;
            wanted.insert((s.to_owned(), t.to_owned()));
        }
        terms.retain(|t| wanted.contains(&(t.source_lang.clone(), t.target_lang.clone())));
        let kept: BTreeSet<&str> = terms.iter().map(|t| t.task_id.as_str()).collect();
        labels.retain(|l| kept.contains(l.task_id.as_str()));
        prov = prov.set("pairs", pairs);
    }
    let variant = match args.variant {
        Variant::Full => LabelVariant::FullPrompt,
        Variant::SourceOnly => LabelVariant::SourceOnly,
    };
    let mut report = behavior_report(&labels, &stats, &terms, variant)?;
    if let Some(order) = &args.languages {
        let order = parse_languages(order);
        prov = prov.set("languages", order.join(","));
        report = report.with_language_order(&order);
    }
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        report.write_csv(w)?;
        Ok(())
    })?;
    let defined = report.cells.values().filter(|c| c.auc.is_some()).count();
    Ok(format!(
        "auc: {} language pairs ({} with both behaviors) -> {}",
        report.cells.len(),
        defined,
        args.out.display()
    ))
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// Logit-lens traces.
    #[arg(long)]
    pub traces: PathBuf,
    /// Pivot candidates from `pivots`; each trace uses its task's rows.
    #[arg(long, conflicts_with = "pivot_tokens")]
    pub pivots: Option<PathBuf>,
    /// One pivot set for every trace, as comma-separated token ids.
    #[arg(long)]
    pub pivot_tokens: Option<String>,
    /// CSV output: layer_index,mean_pivot_prob,mean_target_prob.
    #[arg(long)]
    pub out: PathBuf,
}

fn read_pivot_sets(path: &std::path::Path) -> Result<BTreeMap<String, BTreeSet<TokenId>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (task_col, token_col) = (col("task_id")?, col("token_id")?);
    let mut sets: BTreeMap<String, BTreeSet<TokenId>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let token: u32 = rec[token_col]
            .parse()
            .with_context(|| format!("bad token id `{}`", &rec[token_col]))?;
        sets.entry(rec[task_col].to_owned())
            .or_default()
            .insert(TokenId(token));
    }
    Ok(sets)
}

pub fn curve(args: &CurveArgs) -> Result<String> {
    let traces = load_traces(&args.traces)?;
    let prov;
    let sets: Vec<(&LayerTrace, PivotSet)> = match (&args.pivots, &args.pivot_tokens) {
        (Some(path), None) => {
            prov = Provenance::new("curve").set("pivots", "per-task");
            let by_task = read_pivot_sets(path)?;
            traces
                .iter()
                .filter_map(|t| {
                    by_task.get(&t.task_id).map(|tokens| {
                        let set = PivotSet {
                            pair_id: t.task_id.clone(),
                            tokens: tokens.clone(),
                            provenance: SetProvenance::Filtered,
                        };
                        (t, set)
                    })
                })
                .collect()
        }
        (None, Some(list)) => {
            let tokens: BTreeSet<TokenId> = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<u32>()
                        .map(TokenId)
                        .with_context(|| format!("bad token id `{s}`"))
                })
                .collect::<Result<_>>()?;
            let ids: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            prov = Provenance::new("curve").set("pivots", ids.join(","));
            let set = PivotSet {
                pair_id: "shared".into(),
                tokens,
                provenance: SetProvenance::Filtered,
            };
            traces.iter().map(|t| (t, set.clone())).collect()
        }
        _ => bail!("pass exactly one of --pivots or --pivot-tokens"),
    };
    if sets.is_empty() {
        bail!("no trace has a pivot set");
    }
    let items: Vec<(&LayerTrace, &PivotSet)> = sets.iter().map(|(t, s)| (*t, s)).collect();
    let points = layer_curves(&items)?;
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        writeln!(w, "layer_index,mean_pivot_prob,mean_target_prob")?;
        for p in &points {
            writeln!(
                w,
                "{},{},{}",
                p.layer_index,
                f6(p.mean_pivot_prob),
                f6(p.mean_target_prob)
            )?;
        }
        Ok(())
    })?;
    let peak = points
        .iter()
        .max_by(|a, b| a.mean_pivot_prob.total_cmp(&b.mean_pivot_prob))
        .map_or(0, |p| p.layer_index);
    Ok(format!(
        "curve: {} traces, {} layers, pivot mass peaks at layer {} -> {}",
        items.len(),
        points.len(),
        peak,
        args.out.display()
    ))
}
