//! Semantic-pivot candidates for a word pair.
//!
//! Tokens are ranked by `F(x) = min(fre_s(x) - fre_bg(x), fre_t(x) - fre_bg(x))`
//! where the three rates are document presence rates over samples of
//! source-word documents, target-word documents, and the background corpus.
//! The top candidates pass through a pluggable filter, and the surviving set
//! is checked against logit-lens traces layer by layer.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, BehaviorLabel, LayerTrace, TaskTerms};
use crate::cooccur_index::FreqTable;
use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 50;
pub const DEFAULT_SAMPLE_SIZE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotCandidate {
    pub token: TokenId,
    pub f_score: f64,
    pub fre_s: f64,
    pub fre_t: f64,
    pub fre_bg: f64,
}

/// One candidate per token present in the source or target table, in token
/// order. Missing entries read as zero.
pub fn f_scores(
    fre_s: &FreqTable,
    fre_t: &FreqTable,
    fre_bg: &FreqTable,
) -> Result<Vec<PivotCandidate>> {
    for other in [fre_t, fre_bg] {
        if other.vocab_size() != fre_s.vocab_size() {
            return Err(Error::VocabularyMismatch(
                fre_s.vocab_size(),
                other.vocab_size(),
            ));
        }
    }
    let tokens: BTreeSet<TokenId> = fre_s.tokens().chain(fre_t.tokens()).collect();
    Ok(tokens
        .into_iter()
        .map(|token| {
            let (s, t, bg) = (fre_s.freq(token), fre_t.freq(token), fre_bg.freq(token));
            PivotCandidate {
                token,
                f_score: (s - bg).min(t - bg),
                fre_s: s,
                fre_t: t,
                fre_bg: bg,
            }
        })
        .collect())
}

/// The `k` best candidates by descending F, ties to the lower token id.
pub fn top_candidates(candidates: &[PivotCandidate], k: usize) -> Vec<PivotCandidate> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| b.f_score.total_cmp(&a.f_score).then(a.token.cmp(&b.token)));
    sorted.truncate(k);
    sorted
}

pub trait CandidateFilter {
    fn keep(&self, candidate: &PivotCandidate) -> Result<bool>;
}

pub struct Passthrough;

impl CandidateFilter for Passthrough {
    fn keep(&self, _: &PivotCandidate) -> Result<bool> {
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StopClass {
    /// Surfaces made only of non-alphanumeric, non-space characters.
    Punctuation,
    /// Empty surfaces or surfaces made only of whitespace.
    Whitespace,
    /// Surfaces encoded in a single byte.
    SingleByte,
}

/// Drops tokens by surface class or explicit stop word.
pub struct Stoplist<'a> {
    vocab: &'a Vocabulary,
    classes: BTreeSet<StopClass>,
    words: BTreeSet<String>,
}

impl<'a> Stoplist<'a> {
    pub fn new(vocab: &'a Vocabulary, classes: impl IntoIterator<Item = StopClass>) -> Self {
        Stoplist {
            vocab,
            classes: classes.into_iter().collect(),
            words: BTreeSet::new(),
        }
    }

    /// Punctuation, whitespace and single-byte tokens.
    pub fn standard(vocab: &'a Vocabulary) -> Self {
        Self::new(
            vocab,
            [
                StopClass::Punctuation,
                StopClass::Whitespace,
                StopClass::SingleByte,
            ],
        )
    }

    pub fn with_words(mut self, words: impl IntoIterator<Item = String>) -> Self {
        self.words.extend(words);
        self
    }

    fn stops(&self, surface: &str) -> bool {
        let trimmed = surface.trim();
        self.words.contains(surface)
            || (self.classes.contains(&StopClass::Whitespace) && trimmed.is_empty())
            || (self.classes.contains(&StopClass::SingleByte) && surface.len() == 1)
            || (self.classes.contains(&StopClass::Punctuation)
                && !trimmed.is_empty()
                && trimmed
                    .chars()
                    .all(|c| !c.is_alphanumeric() && !c.is_whitespace()))
    }
}

impl CandidateFilter for Stoplist<'_> {
    fn keep(&self, candidate: &PivotCandidate) -> Result<bool> {
        let surface = self
            .vocab
            .surface(candidate.token)
            .ok_or(Error::TokenOutOfRange {
                id: candidate.token.0,
                vocab_size: self.vocab.len(),
            })?;
        Ok(!self.stops(surface))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub token_id: TokenId,
    pub surface: String,
    pub context_pair: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub token_id: TokenId,
    pub keep: bool,
}

/// Keep/reject decisions replayed from an external judge's response file.
#[derive(Debug, Clone, Default)]
pub struct JudgeDecisions {
    decisions: BTreeMap<TokenId, bool>,
}

impl JudgeDecisions {
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut decisions = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::parse("judge response", i + 1, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: JudgeResponse = serde_json::from_str(&line)
                .map_err(|e| Error::parse("judge response", i + 1, e))?;
            decisions.insert(r.token_id, r.keep);
        }
        Ok(JudgeDecisions { decisions })
    }
}

impl FromIterator<(TokenId, bool)> for JudgeDecisions {
    fn from_iter<I: IntoIterator<Item = (TokenId, bool)>>(iter: I) -> Self {
        JudgeDecisions {
            decisions: iter.into_iter().collect(),
        }
    }
}

impl CandidateFilter for JudgeDecisions {
    fn keep(&self, candidate: &PivotCandidate) -> Result<bool> {
        self.decisions
            .get(&candidate.token)
            .copied()
            .ok_or(Error::MissingJudgement(candidate.token.0))
    }
}

pub fn write_judge_requests(
    mut w: impl Write,
    candidates: &[PivotCandidate],
    vocab: &Vocabulary,
    context_pair: [&str; 2],
) -> Result<()> {
    for c in candidates {
        let req = JudgeRequest {
            token_id: c.token,
            surface: vocab.surface(c.token).unwrap_or_default().to_owned(),
            context_pair: context_pair.map(str::to_owned),
        };
        let line = serde_json::to_string(&req).map_err(|e| Error::InvalidInput(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("judge request", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Candidate,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotSet {
    pub pair_id: String,
    pub tokens: BTreeSet<TokenId>,
    pub provenance: Provenance,
}

impl PivotSet {
    pub fn candidates(pair_id: impl Into<String>, candidates: &[PivotCandidate]) -> Self {
        PivotSet {
            pair_id: pair_id.into(),
            tokens: candidates.iter().map(|c| c.token).collect(),
            provenance: Provenance::Candidate,
        }
    }
}

/// Candidates the filter keeps, rank order preserved.
pub fn retain_candidates(
    candidates: &[PivotCandidate],
    filter: &dyn CandidateFilter,
) -> Result<Vec<PivotCandidate>> {
    let mut kept = Vec::with_capacity(candidates.len());
    for c in candidates {
        if filter.keep(c)? {
            kept.push(*c);
        }
    }
    Ok(kept)
}

pub fn filter_candidates(
    pair_id: impl Into<String>,
    candidates: &[PivotCandidate],
    filter: &dyn CandidateFilter,
) -> Result<PivotSet> {
    let kept = retain_candidates(candidates, filter)?;
    Ok(PivotSet {
        pair_id: pair_id.into(),
        tokens: kept.iter().map(|c| c.token).collect(),
        provenance: Provenance::Filtered,
    })
}

/// Pivot search is only meaningful for semantic-pivot tasks whose source and
/// target words share no token.
pub fn is_eligible(task: &TaskTerms, label: &BehaviorLabel) -> bool {
    label.label == Behavior::SemanticPivot
        && !task
            .source_term
            .iter()
            .any(|t| task.target_term.contains(t))
}

fn check_layers(traces: &[&LayerTrace]) -> Result<usize> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidInput("layer curve over no traces".into()))?;
    if let Some(t) = traces
        .iter()
        .find(|t| t.n_layers != first.n_layers || t.layers.len() != first.n_layers)
    {
        return Err(Error::InvalidTrace {
            task_id: t.task_id.clone(),
            message: format!("has {} layers, expected {}", t.layers.len(), first.n_layers),
        });
    }
    Ok(first.n_layers)
}

fn pivot_mass(trace: &LayerTrace, layer: usize, pivots: &PivotSet) -> Result<f64> {
    let dist = &trace.layers[layer];
    pivots.tokens.iter().try_fold(0.0, |acc, t| {
        dist.tracked
            .get(t)
            .map(|p| acc + p)
            .ok_or_else(|| Error::MissingTrackedToken {
                task_id: trace.task_id.clone(),
                token: t.0,
            })
    })
}

fn target_mass(trace: &LayerTrace, layer: usize) -> Result<f64> {
    let dist = &trace.layers[layer];
    trace.output_token_ids.iter().try_fold(0.0, |acc, &t| {
        dist.prob(t)
            .map(|p| acc + p)
            .ok_or_else(|| Error::MissingTrackedToken {
                task_id: trace.task_id.clone(),
                token: t.0,
            })
    })
}

/// Per layer, the mean over traces of the total pivot-set probability.
pub fn pivot_layer_curve(traces: &[LayerTrace], pivots: &PivotSet) -> Result<Vec<f64>> {
    let pairs: Vec<_> = traces.iter().map(|t| (t, pivots)).collect();
    Ok(layer_curves(&pairs)?
        .into_iter()
        .map(|p| p.mean_pivot_prob)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub layer_index: usize,
    pub mean_pivot_prob: f64,
    pub mean_target_prob: f64,
}

/// Pivot and target-word curves where every trace brings its own pivot set.
pub fn layer_curves(items: &[(&LayerTrace, &PivotSet)]) -> Result<Vec<CurvePoint>> {
    let traces: Vec<&LayerTrace> = items.iter().map(|(t, _)| *t).collect();
    let n_layers = check_layers(&traces)?;
    let n = items.len() as f64;
    (0..n_layers)
        .map(|layer| {
            let (mut pivot, mut target) = (0.0, 0.0);
            for (trace, pivots) in items {
                pivot += pivot_mass(trace, layer, pivots)?;
                target += target_mass(trace, layer)?;
            }
            Ok(CurvePoint {
                layer_index: layer,
                mean_pivot_prob: pivot / n,
                mean_target_prob: target / n,
            })
        })
        .collect()
}
