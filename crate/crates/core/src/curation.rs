//! Semantic-pivot-aware dataset construction.
//!
//! 1. Count, per token pair, the documents containing both tokens.
//! 2. A pair co-occurs "highly" when its document rate reaches θ, a fraction
//!    (default 10%) of the mean per-token document-presence rate.
//! 3. A token's degree is its number of highly co-occurring partners.
//!    Degree-0 tokens are dropped, then the top 10% of the survivors by
//!    degree; the rest is the pivot set.
//! 4. Documents are ranked by the share of their token positions that are
//!    pivots and the top of the ranking fills the budget.
//!
//! All threshold arithmetic is done on exact fractions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, TokenId};
use crate::error::{Error, Result};
use crate::langid::{DocLanguages, DocumentLanguageId, LanguageTag};
use crate::ratio::Ratio;

pub const DEFAULT_MIN_DOCS: u64 = 2;

fn pair_key(a: TokenId, b: TokenId) -> u64 {
    debug_assert!(a < b);
    ((a.0 as u64) << 32) | b.0 as u64
}

fn unpack(key: u64) -> (TokenId, TokenId) {
    (TokenId((key >> 32) as u32), TokenId(key as u32))
}

/// Document-level token and token-pair counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjacencyStats {
    pair_doc_counts: HashMap<u64, u64>,
    token_doc_counts: BTreeMap<TokenId, u64>,
    total_docs: u64,
    /// Pairs below this count were dropped; 1 means nothing was dropped.
    min_docs: u64,
}

impl AdjacencyStats {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut stats = AdjacencyStats {
            min_docs: 1,
            ..Default::default()
        };
        let mut distinct = Vec::new();
        for doc in docs {
            stats.total_docs += 1;
            distinct.clear();
            distinct.extend(doc.tokens.iter().copied());
            distinct.sort_unstable();
            distinct.dedup();
            for (i, &a) in distinct.iter().enumerate() {
                *stats.token_doc_counts.entry(a).or_default() += 1;
                for &b in &distinct[i + 1..] {
                    *stats.pair_doc_counts.entry(pair_key(a, b)).or_default() += 1;
                }
            }
        }
        stats
    }

    /// Sums counts over disjoint document sets. Both sides must be unpruned.
    pub fn merge(mut self, other: AdjacencyStats) -> Self {
        assert!(
            self.min_docs <= 1 && other.min_docs <= 1,
            "cannot merge pruned stats"
        );
        let (mut big, small) = if self.pair_doc_counts.len() >= other.pair_doc_counts.len() {
            (
                std::mem::take(&mut self.pair_doc_counts),
                other.pair_doc_counts,
            )
        } else {
            (
                other.pair_doc_counts,
                std::mem::take(&mut self.pair_doc_counts),
            )
        };
        for (k, v) in small {
            *big.entry(k).or_default() += v;
        }
        for (t, c) in other.token_doc_counts {
            *self.token_doc_counts.entry(t).or_default() += c;
        }
        AdjacencyStats {
            pair_doc_counts: big,
            token_doc_counts: self.token_doc_counts,
            total_docs: self.total_docs + other.total_docs,
            min_docs: 1,
        }
    }

    /// Drops pairs seen in fewer than `min_docs` documents.
    pub fn prune(mut self, min_docs: u64) -> Self {
        if min_docs > 1 {
            self.pair_doc_counts.retain(|_, c| *c >= min_docs);
        }
        self.min_docs = self.min_docs.max(min_docs.max(1));
        self
    }

    pub fn total_docs(&self) -> u64 {
        self.total_docs
    }

    pub fn min_docs(&self) -> u64 {
        self.min_docs
    }

    pub fn token_doc_count(&self, t: TokenId) -> u64 {
        self.token_doc_counts.get(&t).copied().unwrap_or(0)
    }

    pub fn token_doc_counts(&self) -> &BTreeMap<TokenId, u64> {
        &self.token_doc_counts
    }

    /// Documents containing both tokens; 0 for self-pairs and pruned pairs.
    pub fn pair_doc_count(&self, a: TokenId, b: TokenId) -> u64 {
        match a.cmp(&b) {
            Ordering::Less => self
                .pair_doc_counts
                .get(&pair_key(a, b))
                .copied()
                .unwrap_or(0),
            Ordering::Greater => self
                .pair_doc_counts
                .get(&pair_key(b, a))
                .copied()
                .unwrap_or(0),
            Ordering::Equal => 0,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_doc_counts.len()
    }

    /// Stored pairs `(a, b, count)` with `a < b`, sorted.
    pub fn pairs(&self) -> Vec<(TokenId, TokenId, u64)> {
        let mut out: Vec<_> = self
            .pair_doc_counts
            .iter()
            .map(|(&k, &c)| {
                let (a, b) = unpack(k);
                (a, b, c)
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Counts over the whole corpus, shard-parallel, then prunes.
pub fn build_adjacency(corpus: &Corpus, min_docs: u64, workers: usize) -> Result<AdjacencyStats> {
    if corpus.total_docs() == 0 {
        return Err(Error::InvalidInput("adjacency over an empty corpus".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let stats = pool.install(|| {
        corpus
            .shards()
            .par_iter()
            .map(|s| AdjacencyStats::from_documents(&s.docs))
            .reduce(AdjacencyStats::default, AdjacencyStats::merge)
    });
    Ok(stats.prune(min_docs))
}

/// High-co-occurrence cutoff as an exact document rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub Ratio);

impl Threshold {
    pub fn value(&self) -> f64 {
        self.0.to_f64()
    }

    /// `count / total_docs >= θ`.
    pub fn admits(&self, count: u64, total_docs: u64) -> bool {
        count as u128 * self.0.denom() >= self.0.numer() * total_docs as u128
    }
}

/// `θ = factor × mean over tokens of (token_doc_count / total_docs)`.
pub fn threshold(stats: &AdjacencyStats, factor: Ratio) -> Result<Threshold> {
    let n_tokens = stats.token_doc_counts.len() as u128;
    if n_tokens == 0 || stats.total_docs == 0 {
        return Err(Error::InvalidInput("threshold over zero tokens".into()));
    }
    let presence: u128 = stats.token_doc_counts.values().map(|&c| c as u128).sum();
    let mean_rate = Ratio::new(presence, n_tokens * stats.total_docs as u128);
    Ok(Threshold(factor.mul(&mean_rate)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeTable {
    pub degree: BTreeMap<TokenId, u64>,
    pub theta: Threshold,
}

fn check_pruning(stats: &AdjacencyStats, theta: Threshold) -> Result<()> {
    // a dropped pair has count <= min_docs - 1; that must stay below θ
    let ceiling = stats.min_docs.saturating_sub(1);
    if ceiling > 0 && theta.admits(ceiling, stats.total_docs) {
        return Err(Error::LossyPruning {
            min_docs: stats.min_docs,
            theta: theta.value(),
            total_docs: stats.total_docs,
        });
    }
    Ok(())
}

/// Number of highly co-occurring partners for every token seen.
pub fn degree_table(stats: &AdjacencyStats, theta: Threshold) -> Result<DegreeTable> {
    check_pruning(stats, theta)?;
    let mut degree: BTreeMap<TokenId, u64> =
        stats.token_doc_counts.keys().map(|&t| (t, 0)).collect();
    for (&key, &count) in &stats.pair_doc_counts {
        if theta.admits(count, stats.total_docs) {
            let (a, b) = unpack(key);
            *degree.get_mut(&a).expect("token counted") += 1;
            *degree.get_mut(&b).expect("token counted") += 1;
        }
    }
    Ok(DegreeTable { degree, theta })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotSelection {
    pub pivots: BTreeSet<TokenId>,
    pub isolated: usize,
    /// Survivors removed as the highest-degree tokens, in removal order.
    pub high_degree: Vec<TokenId>,
    pub degrees: DegreeTable,
}

/// Drops degree-0 tokens, then the `ceil(degree_cut × survivors)` tokens with
/// the highest degree (ties: lower token id removed first).
pub fn select_pivots(
    stats: &AdjacencyStats,
    theta: Threshold,
    degree_cut: Ratio,
) -> Result<PivotSelection> {
    let degrees = degree_table(stats, theta)?;
    let mut survivors: Vec<(TokenId, u64)> = degrees
        .degree
        .iter()
        .filter(|(_, &d)| d > 0)
        .map(|(&t, &d)| (t, d))
        .collect();
    let isolated = degrees.degree.len() - survivors.len();
    survivors.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let cut = degree_cut
        .ceil_mul(survivors.len() as u128)
        .min(survivors.len() as u128) as usize;
    let high_degree = survivors[..cut].iter().map(|(t, _)| *t).collect();
    let pivots = survivors[cut..].iter().map(|(t, _)| *t).collect();
    Ok(PivotSelection {
        pivots,
        isolated,
        high_degree,
        degrees,
    })
}

pub fn pivot_token_set(
    stats: &AdjacencyStats,
    theta: Threshold,
    degree_cut: Ratio,
) -> Result<BTreeSet<TokenId>> {
    Ok(select_pivots(stats, theta, degree_cut)?.pivots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingKey {
    #[default]
    Proportion,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub pivot_count: u64,
    pub length: u64,
}

impl ScoredDoc {
    pub fn score(doc: &Document, pivots: &BTreeSet<TokenId>) -> Self {
        ScoredDoc {
            doc_id: doc.doc_id.clone(),
            pivot_count: doc.tokens.iter().filter(|t| pivots.contains(t)).count() as u64,
            length: doc.tokens.len() as u64,
        }
    }

    pub fn proportion(&self) -> f64 {
        self.pivot_count as f64 / self.length as f64
    }

    fn cmp_proportion(&self, other: &Self) -> Ordering {
        (self.pivot_count as u128 * other.length as u128)
            .cmp(&(other.pivot_count as u128 * self.length as u128))
    }

    /// Rank order: best first.
    pub fn rank_cmp(&self, other: &Self, key: RankingKey) -> Ordering {
        let by_count = other.pivot_count.cmp(&self.pivot_count);
        let by_prop = other.cmp_proportion(self);
        let primary = match key {
            RankingKey::Proportion => by_prop.then(by_count),
            RankingKey::Count => by_count.then(by_prop),
        };
        primary.then_with(|| self.doc_id.cmp(&other.doc_id))
    }
}

/// Every document of the corpus with its pivot count, in rank order.
pub fn score_documents(
    corpus: &Corpus,
    pivots: &BTreeSet<TokenId>,
    key: RankingKey,
) -> Vec<ScoredDoc> {
    let mut scored: Vec<ScoredDoc> = corpus.iter().map(|d| ScoredDoc::score(d, pivots)).collect();
    scored.sort_by(|a, b| a.rank_cmp(b, key));
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Ranked,
    Padding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub rank: usize,
    pub pivot_count: u64,
    pub pivot_proportion: f64,
    pub language: LanguageTag,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationManifest {
    pub entries: Vec<ManifestEntry>,
    pub budget: usize,
    /// Fraction of chunks per language over the selected documents.
    pub language_distribution: BTreeMap<LanguageTag, f64>,
    pub non_english_doc_count: usize,
    /// Set when fewer documents than the budget were available.
    pub short: bool,
}

pub struct AssembleOptions<'a> {
    pub budget: usize,
    pub padding: Option<&'a Corpus>,
    /// Caps ranked documents at `floor(fraction × budget)`; padding fills
    /// the rest.
    pub target_multilingual_fraction: Option<Ratio>,
}

/// Takes ranked documents up to the budget, then padding documents in
/// their original order, and tallies chunk languages over the selection.
pub fn assemble(
    ranked: &[ScoredDoc],
    corpus: &Corpus,
    pivots: &BTreeSet<TokenId>,
    options: &AssembleOptions<'_>,
    langid: &DocumentLanguageId<'_>,
) -> Result<CurationManifest> {
    if options.budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let quota = match options.target_multilingual_fraction {
        Some(f) => {
            (f.numer() * options.budget as u128 / f.denom()).min(options.budget as u128) as usize
        }
        None => options.budget,
    };

    let mut entries = Vec::with_capacity(options.budget);
    let mut chunk_counts: BTreeMap<LanguageTag, u64> = BTreeMap::new();
    let mut non_english = 0;
    let mut taken: HashSet<&str> = HashSet::new();
    let mut push = |doc: &Document,
                    scored: ScoredDoc,
                    origin: Origin,
                    entries: &mut Vec<ManifestEntry>|
     -> Result<()> {
        let langs: DocLanguages = langid.languages(doc)?;
        for (tag, _) in &langs.chunk_labels {
            *chunk_counts.entry(*tag).or_default() += 1;
        }
        non_english += langs.non_english as usize;
        entries.push(ManifestEntry {
            doc_id: scored.doc_id.clone(),
            rank: entries.len() + 1,
            pivot_count: scored.pivot_count,
            pivot_proportion: scored.proportion(),
            language: langs.majority(),
            origin,
        });
        Ok(())
    };

    for s in ranked.iter().take(quota) {
        let doc = corpus
            .get(&s.doc_id)
            .ok_or_else(|| Error::UnknownDocId(s.doc_id.clone()))?;
        taken.insert(&s.doc_id);
        push(doc, s.clone(), Origin::Ranked, &mut entries)?;
    }
    if let Some(padding) = options.padding {
        for doc in padding.iter() {
            if entries.len() >= options.budget {
                break;
            }
            if taken.contains(doc.doc_id.as_str()) {
                continue;
            }
            push(
                doc,
                ScoredDoc::score(doc, pivots),
                Origin::Padding,
                &mut entries,
            )?;
        }
    }

    let total_chunks: u64 = chunk_counts.values().sum();
    let language_distribution = chunk_counts
        .into_iter()
        .map(|(tag, c)| (tag, c as f64 / total_chunks as f64))
        .collect();
    let short = entries.len() < options.budget;
    if short {
        log::warn!(
            "selected {} documents for a budget of {}",
            entries.len(),
            options.budget
        );
    }
    Ok(CurationManifest {
        entries,
        budget: options.budget,
        language_distribution,
        non_english_doc_count: non_english,
        short,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub kind: String,
    pub theta: f64,
    pub theta_exact: String,
    pub pivot_set_size: usize,
    pub budget: usize,
    pub selected: usize,
    pub short: bool,
    pub non_english_doc_count: usize,
    pub language_distribution: BTreeMap<LanguageTag, f64>,
    pub config_hash: String,
}

impl CurationManifest {
    pub fn header(
        &self,
        theta: Threshold,
        pivot_set_size: usize,
        config_hash: &str,
    ) -> ManifestHeader {
        ManifestHeader {
            kind: "header".into(),
            theta: theta.value(),
            theta_exact: theta.0.to_string(),
            pivot_set_size,
            budget: self.budget,
            selected: self.entries.len(),
            short: self.short,
            non_english_doc_count: self.non_english_doc_count,
            language_distribution: self.language_distribution.clone(),
            config_hash: config_hash.to_owned(),
        }
    }

    pub fn write_jsonl(&self, mut w: impl Write, header: &ManifestHeader) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, header)?;
        writeln!(w)?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}
