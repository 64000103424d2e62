//! Logit-lens behavior classification and co-occurrence AUC.
//!
//! A trace records, for every layer, the logit-lens distribution at the first
//! generated position. The global peak (highest top-1 probability over all
//! layers) decides the behavior: a peak token taken from the prompt or the
//! target word is co-occurrence behavior, anything else is semantic-pivot
//! behavior.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::cooccur_index::{CooccurStats, Term};
use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::scoring::WordPairTask;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDistribution {
    /// `(token, probability)` by descending probability.
    pub top_k: Vec<(TokenId, f64)>,
    #[serde(default)]
    pub tracked: BTreeMap<TokenId, f64>,
}

impl LayerDistribution {
    /// Probability of `token` from the tracked map, falling back to top-k.
    pub fn prob(&self, token: TokenId) -> Option<f64> {
        self.tracked.get(&token).copied().or_else(|| {
            self.top_k
                .iter()
                .find(|(t, _)| *t == token)
                .map(|(_, p)| *p)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub v: u32,
    pub task_id: String,
    pub n_layers: usize,
    pub vocab_size: usize,
    /// The full tokenized prompt.
    pub input_token_ids: BTreeSet<TokenId>,
    /// The tokenized target word.
    pub output_token_ids: BTreeSet<TokenId>,
    /// The tokenized source word alone, for the source-only variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_token_ids: Option<BTreeSet<TokenId>>,
    pub layers: Vec<LayerDistribution>,
}

impl LayerTrace {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidTrace {
            task_id: self.task_id.clone(),
            message,
        };
        if self.v != TRACE_SCHEMA_VERSION {
            return Err(bad(format!(
                "schema version {} (expected {TRACE_SCHEMA_VERSION})",
                self.v
            )));
        }
        if self.layers.is_empty() {
            return Err(bad("no layers".into()));
        }
        if self.layers.len() != self.n_layers {
            return Err(bad(format!(
                "n_layers is {} but {} layers present",
                self.n_layers,
                self.layers.len()
            )));
        }
        let ids = self
            .input_token_ids
            .iter()
            .chain(&self.output_token_ids)
            .chain(self.source_token_ids.iter().flatten());
        for t in ids {
            if t.index() >= self.vocab_size {
                return Err(bad(format!(
                    "token {t} outside vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.top_k.is_empty() {
                return Err(bad(format!("layer {li} has an empty top_k")));
            }
            let probs = layer
                .top_k
                .iter()
                .map(|(t, p)| (t, p))
                .chain(layer.tracked.iter());
            for (t, &p) in probs {
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad(format!("layer {li} token {t} has probability {p}")));
                }
                if t.index() >= self.vocab_size {
                    return Err(bad(format!("layer {li} token {t} outside vocabulary")));
                }
            }
            if layer.top_k.windows(2).any(|w| w[0].1 < w[1].1) {
                return Err(bad(format!(
                    "layer {li} top_k is not sorted by probability"
                )));
            }
        }
        Ok(())
    }
}

pub fn read_traces(reader: impl Read) -> Result<Vec<LayerTrace>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse("traces", i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: LayerTrace =
            serde_json::from_str(&line).map_err(|e| Error::parse("traces", i + 1, e))?;
        trace.validate()?;
        out.push(trace);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Cooccurrence,
    SemanticPivot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorLabel {
    pub task_id: String,
    pub label: Behavior,
    pub peak_token: TokenId,
    pub peak_layer: usize,
    pub peak_prob: f64,
    /// Label when only the source word counts as input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_only_label: Option<Behavior>,
}

/// Highest top-1 probability over all layers. Ties go to the deeper layer,
/// then to the lower token id.
pub fn peak(trace: &LayerTrace) -> Result<(TokenId, usize, f64)> {
    let mut best: Option<(TokenId, usize, f64)> = None;
    for (li, layer) in trace.layers.iter().enumerate() {
        let Some(&(_, top)) = layer.top_k.first() else {
            return Err(Error::InvalidTrace {
                task_id: trace.task_id.clone(),
                message: format!("layer {li} has an empty top_k"),
            });
        };
        // every entry sharing the layer maximum competes for top-1
        for &(token, p) in layer.top_k.iter().take_while(|(_, p)| *p == top) {
            let better = match best {
                None => true,
                Some((bt, bl, bp)) => p > bp || (p == bp && (li > bl || (li == bl && token < bt))),
            };
            if better {
                best = Some((token, li, p));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidTrace {
        task_id: trace.task_id.clone(),
        message: "no layers".into(),
    })
}

fn label_for(peak: TokenId, inputs: &BTreeSet<TokenId>, outputs: &BTreeSet<TokenId>) -> Behavior {
    if inputs.contains(&peak) || outputs.contains(&peak) {
        Behavior::Cooccurrence
    } else {
        Behavior::SemanticPivot
    }
}

pub fn classify(trace: &LayerTrace) -> Result<BehaviorLabel> {
    let (peak_token, peak_layer, peak_prob) = peak(trace)?;
    Ok(BehaviorLabel {
        task_id: trace.task_id.clone(),
        label: label_for(peak_token, &trace.input_token_ids, &trace.output_token_ids),
        peak_token,
        peak_layer,
        peak_prob,
        source_only_label: trace
            .source_token_ids
            .as_ref()
            .map(|src| label_for(peak_token, src, &trace.output_token_ids)),
    })
}

/// Mann-Whitney AUC of `positives` against `negatives` with average ranks
/// for ties: the probability that a random positive outranks a random
/// negative, ties counting one half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidInput(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if positives.iter().chain(negatives).any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("AUC input contains NaN".into()));
    }
    let mut pooled: Vec<(f64, bool)> = positives
        .iter()
        .map(|&x| (x, true))
        .chain(negatives.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // ranks are 1-based; a tie group spanning positions i..j gets (i+1+j)/2
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let n_pos = pooled[i..j].iter().filter(|(_, pos)| *pos).count();
        rank_sum += avg_rank * n_pos as f64;
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// A task's language pair and its source/target words in token space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTerms {
    pub task_id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub source_word: String,
    pub target_word: String,
    pub source_term: Term,
    pub target_term: Term,
}

impl TaskTerms {
    /// Uses the task's exported token ids when present, otherwise tokenizes
    /// the words against the frozen vocabulary.
    pub fn from_task(task: &WordPairTask, vocab: &Vocabulary) -> Result<Self> {
        let term = |tokens: &Option<Vec<u32>>, word: &str| -> Result<Term> {
            let term: Term = match tokens {
                Some(ids) => ids.iter().map(|&i| TokenId(i)).collect(),
                None => vocab.tokenize(word)?,
            };
            if term.is_empty() {
                return Err(Error::InvalidTask {
                    task_id: task.task_id.clone(),
                    message: format!("`{word}` tokenizes to nothing"),
                });
            }
            for &t in &term {
                vocab.check(t)?;
            }
            Ok(term)
        };
        Ok(TaskTerms {
            task_id: task.task_id.clone(),
            source_lang: task.source_lang.clone(),
            target_lang: task.target_lang.clone(),
            source_word: task.source_word.clone(),
            target_word: task.target_word.clone(),
            source_term: term(&task.source_tokens, &task.source_word)?,
            target_term: term(&task.target_tokens, &task.target_word)?,
        })
    }

    /// Identical strings make the co-occurrence count meaningless.
    pub fn is_excluded(&self) -> bool {
        self.source_word == self.target_word || self.source_term == self.target_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelVariant {
    /// Inputs are the whole prompt.
    #[default]
    FullPrompt,
    /// Inputs are the source word only.
    SourceOnly,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairAuc {
    /// `None` when only one behavior class is present.
    pub auc: Option<f64>,
    pub n_cooccurrence: usize,
    pub n_pivot: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorReport {
    pub languages: Vec<String>,
    pub cells: BTreeMap<(String, String), PairAuc>,
}

/// Per ordered language pair, the AUC of co-document counts with
/// co-occurrence tasks as positives and semantic-pivot tasks as negatives.
pub fn behavior_report(
    labels: &[BehaviorLabel],
    stats: &CooccurStats,
    tasks: &[TaskTerms],
    variant: LabelVariant,
) -> Result<BehaviorReport> {
    let by_id: BTreeMap<&str, &TaskTerms> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    // per pair: co-occurrence counts, semantic-pivot counts, excluded tasks
    type Group = (Vec<f64>, Vec<f64>, usize);
    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    for label in labels {
        let task = by_id.get(label.task_id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("label for unknown task `{}`", label.task_id))
        })?;
        let group = groups
            .entry((task.source_lang.clone(), task.target_lang.clone()))
            .or_default();
        if task.is_excluded() {
            group.2 += 1;
            continue;
        }
        let behavior = match variant {
            LabelVariant::FullPrompt => label.label,
            LabelVariant::SourceOnly => label.source_only_label.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "label `{}` has no source-only variant",
                    label.task_id
                ))
            })?,
        };
        let count = stats.codf(&task.source_term, &task.target_term)? as f64;
        match behavior {
            Behavior::Cooccurrence => group.0.push(count),
            Behavior::SemanticPivot => group.1.push(count),
        }
    }
    let languages: BTreeSet<String> = groups
        .keys()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    let cells = groups
        .into_iter()
        .map(|(pair, (pos, neg, excluded))| {
            let auc = if pos.is_empty() || neg.is_empty() {
                None
            } else {
                Some(auc(&pos, &neg)?)
            };
            Ok((
                pair,
                PairAuc {
                    auc,
                    n_cooccurrence: pos.len(),
                    n_pivot: neg.len(),
                    excluded,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(BehaviorReport {
        languages: languages.into_iter().collect(),
        cells,
    })
}

impl BehaviorReport {
    pub fn cell(&self, source: &str, target: &str) -> Option<&PairAuc> {
        self.cells.get(&(source.to_owned(), target.to_owned()))
    }

    /// Reorders rows and columns; languages without cells are kept.
    pub fn with_language_order(mut self, order: &[String]) -> Self {
        let mut languages = order.to_vec();
        for l in &self.languages {
            if !languages.contains(l) {
                languages.push(l.clone());
            }
        }
        self.languages = languages;
        self
    }

    /// Sources down, targets across, then the row's excluded-task count.
    /// `NA` marks a pair with tasks but a single behavior class.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "source")?;
        for t in &self.languages {
            write!(w, ",{t}")?;
        }
        writeln!(w, ",excluded")?;
        for s in &self.languages {
            write!(w, "{s}")?;
            let mut excluded = 0;
            for t in &self.languages {
                match self.cell(s, t) {
                    Some(c) => {
                        excluded += c.excluded;
                        match c.auc {
                            Some(a) => write!(w, ",{a:.6}")?,
                            None => write!(w, ",NA")?,
                        }
                    }
                    None => write!(w, ",")?,
                }
            }
            writeln!(w, ",{excluded}")?;
        }
        Ok(())
    }
}
