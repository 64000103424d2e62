//! Document-frequency and co-document-frequency counting over tracked terms.
//!
//! A term is a contiguous token-id sequence. The index keeps, for every term
//! tracked at build time, the sorted list of documents containing it. Partial
//! indices built over disjoint shards merge into the single-pass index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::seq::index;
use rayon::prelude::*;

use crate::corpus::{Corpus, Document, TokenId};
use crate::error::{Error, Result};
use crate::seed;

pub type Term = Vec<TokenId>;

const MAGIC: &[u8; 8] = b"PVSIDX\0\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    vocab_size: usize,
    /// Every indexed document, sorted. Postings index into this table, so
    /// ascending postings are sorted by doc_id.
    doc_ids: Vec<String>,
    postings: BTreeMap<Term, Vec<u32>>,
}

fn validate_terms(terms: &BTreeSet<Term>, vocab_size: usize) -> Result<()> {
    for term in terms {
        if term.is_empty() {
            return Err(Error::InvalidInput("empty term".into()));
        }
        if let Some(t) = term.iter().find(|t| t.index() >= vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: t.0,
                vocab_size,
            });
        }
    }
    Ok(())
}

impl InvertedIndex {
    /// Indexes an arbitrary set of documents. Used per shard; see
    /// [`build_index`] for the whole-corpus entry point.
    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = &'a Document>,
        terms: &BTreeSet<Term>,
        vocab_size: usize,
    ) -> Result<Self> {
        validate_terms(terms, vocab_size)?;
        let mut docs: Vec<&Document> = docs.into_iter().collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::DuplicateDocId(w[0].doc_id.clone()));
        }

        let mut by_first: HashMap<TokenId, Vec<&Term>> = HashMap::new();
        for term in terms {
            by_first.entry(term[0]).or_default().push(term);
        }
        let mut postings: BTreeMap<Term, Vec<u32>> =
            terms.iter().map(|t| (t.clone(), Vec::new())).collect();
        let mut hits: BTreeSet<&Term> = BTreeSet::new();
        for (di, doc) in docs.iter().enumerate() {
            hits.clear();
            for (pos, tok) in doc.tokens.iter().enumerate() {
                let Some(candidates) = by_first.get(tok) else {
                    continue;
                };
                for term in candidates {
                    if doc.tokens[pos..].starts_with(term) {
                        hits.insert(term);
                    }
                }
            }
            for term in &hits {
                postings.get_mut(*term).expect("tracked").push(di as u32);
            }
        }
        Ok(InvertedIndex {
            vocab_size,
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            postings,
        })
    }

    /// Combines indices over disjoint document sets tracking the same terms.
    pub fn merge(self, other: InvertedIndex) -> Result<Self> {
        if self.vocab_size != other.vocab_size {
            return Err(Error::VocabularyMismatch(self.vocab_size, other.vocab_size));
        }
        if !self.postings.keys().eq(other.postings.keys()) {
            return Err(Error::InvalidInput(
                "cannot merge indices tracking different terms".into(),
            ));
        }
        let (mut remap_a, mut remap_b) = (Vec::new(), Vec::new());
        let mut doc_ids = Vec::with_capacity(self.doc_ids.len() + other.doc_ids.len());
        let (mut i, mut j) = (0, 0);
        while i < self.doc_ids.len() || j < other.doc_ids.len() {
            let take_a = match (self.doc_ids.get(i), other.doc_ids.get(j)) {
                (Some(a), Some(b)) if a == b => return Err(Error::DuplicateDocId(a.clone())),
                (Some(a), Some(b)) => a < b,
                (Some(_), None) => true,
                _ => false,
            };
            if take_a {
                remap_a.push(doc_ids.len() as u32);
                doc_ids.push(self.doc_ids[i].clone());
                i += 1;
            } else {
                remap_b.push(doc_ids.len() as u32);
                doc_ids.push(other.doc_ids[j].clone());
                j += 1;
            }
        }
        let mut postings = BTreeMap::new();
        for ((term, pa), pb) in self.postings.into_iter().zip(other.postings.into_values()) {
            let mut merged: Vec<u32> = pa
                .iter()
                .map(|&d| remap_a[d as usize])
                .chain(pb.iter().map(|&d| remap_b[d as usize]))
                .collect();
            merged.sort_unstable();
            postings.insert(term, merged);
        }
        Ok(InvertedIndex {
            vocab_size: self.vocab_size,
            doc_ids,
            postings,
        })
    }

    pub fn total_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.postings.keys()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn posting(&self, term: &[TokenId]) -> Result<&[u32]> {
        self.postings
            .get(term)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UntrackedTerm(term.iter().map(|t| t.0).collect()))
    }

    /// Doc ids containing `term`, sorted.
    pub fn postings(&self, term: &[TokenId]) -> Result<Vec<&str>> {
        Ok(self
            .posting(term)?
            .iter()
            .map(|&d| self.doc_ids[d as usize].as_str())
            .collect())
    }

    pub fn doc_freq(&self, term: &[TokenId]) -> Result<usize> {
        Ok(self.posting(term)?.len())
    }

    /// Number of documents containing both terms. Identical terms are
    /// rejected: their co-occurrence is not a meaningful count.
    pub fn co_doc_freq(&self, a: &[TokenId], b: &[TokenId]) -> Result<usize> {
        let pa = self.posting(a)?;
        let pb = self.posting(b)?;
        if a == b {
            return Err(Error::ExcludedPair(a.iter().map(|t| t.0).collect()));
        }
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < pa.len() && j < pb.len() {
            match pa[i].cmp(&pb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(n)
    }

    /// Uniform sample of `n` documents containing `term`, without
    /// replacement. Returns the full posting list when it has at most `n`
    /// entries.
    pub fn sample_docs(&self, term: &[TokenId], n: usize, seed: u64) -> Result<Vec<&str>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be at least 1".into()));
        }
        let posting = self.posting(term)?;
        Ok(sample_without_replacement(posting, n, seed)
            .into_iter()
            .map(|d| self.doc_ids[d as usize].as_str())
            .collect())
    }

    pub fn stats(&self, pairs: &[(Term, Term)]) -> Result<CooccurStats> {
        let mut stats = CooccurStats {
            total_docs: self.total_docs() as u64,
            ..Default::default()
        };
        for (a, b) in pairs {
            stats.df.insert(a.clone(), self.doc_freq(a)? as u64);
            stats.df.insert(b.clone(), self.doc_freq(b)? as u64);
            if a != b {
                let key = if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                stats.codf.insert(key, self.co_doc_freq(a, b)? as u64);
            }
        }
        Ok(stats)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.vocab_size as u64).to_le_bytes())?;
        w.write_all(&(self.doc_ids.len() as u64).to_le_bytes())?;
        for id in &self.doc_ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, posting) in &self.postings {
            w.write_all(&(term.len() as u32).to_le_bytes())?;
            for t in term {
                w.write_all(&t.0.to_le_bytes())?;
            }
            w.write_all(&(posting.len() as u64).to_le_bytes())?;
            for d in posting {
                w.write_all(&d.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::IndexFormat(e.to_string()))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::IndexFormat("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let vocab_size = cur.u64()? as usize;
        let n_docs = cur.u64()? as usize;
        let mut doc_ids = Vec::with_capacity(n_docs.min(1 << 20));
        for _ in 0..n_docs {
            let len = cur.u32()? as usize;
            let bytes = cur.take(len)?;
            let id = std::str::from_utf8(bytes)
                .map_err(|_| Error::IndexFormat("doc_id is not UTF-8".into()))?;
            doc_ids.push(id.to_owned());
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IndexFormat("doc ids not strictly sorted".into()));
        }
        let n_terms = cur.u64()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let len = cur.u32()? as usize;
            let term: Term = (0..len)
                .map(|_| cur.u32().map(TokenId))
                .collect::<Result<_>>()?;
            let n = cur.u64()? as usize;
            let posting: Vec<u32> = (0..n).map(|_| cur.u32()).collect::<Result<_>>()?;
            if posting.windows(2).any(|w| w[0] >= w[1])
                || posting.last().is_some_and(|&d| d as usize >= doc_ids.len())
            {
                return Err(Error::IndexFormat("corrupt posting list".into()));
            }
            if postings.insert(term, posting).is_some() {
                return Err(Error::IndexFormat("duplicate term".into()));
            }
        }
        if cur.pos != buf.len() {
            return Err(Error::IndexFormat("trailing bytes".into()));
        }
        let terms: BTreeSet<Term> = postings.keys().cloned().collect();
        validate_terms(&terms, vocab_size).map_err(|e| Error::IndexFormat(e.to_string()))?;
        Ok(InvertedIndex {
            vocab_size,
            doc_ids,
            postings,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::IndexFormat("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Builds the index over every shard of `corpus`, fanning out over at most
/// `workers` threads. The result does not depend on `workers`.
pub fn build_index(
    corpus: &Corpus,
    terms: &BTreeSet<Term>,
    workers: usize,
) -> Result<InvertedIndex> {
    let vocab_size = corpus.vocab().len();
    validate_terms(terms, vocab_size)?;
    let empty = || InvertedIndex::from_documents([], terms, vocab_size);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    pool.install(|| {
        corpus
            .shards()
            .par_iter()
            .map(|s| InvertedIndex::from_documents(&s.docs, terms, vocab_size))
            .try_reduce(|| empty().expect("validated"), InvertedIndex::merge)
    })
}

/// Uniform sample of `n` items without replacement, returned in input order.
pub fn sample_without_replacement<T: Copy>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, items.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i]).collect()
}

/// Uniform sample of `n` documents from the whole corpus.
pub fn sample_corpus(corpus: &Corpus, n: usize, seed: u64) -> Vec<&str> {
    let mut ids: Vec<&str> = corpus.iter().map(|d| d.doc_id.as_str()).collect();
    ids.sort_unstable();
    sample_without_replacement(&ids, n, seed)
}

/// Document and co-document frequencies for a set of term pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurStats {
    pub df: BTreeMap<Term, u64>,
    /// Keyed by the pair in ascending term order.
    pub codf: BTreeMap<(Term, Term), u64>,
    pub total_docs: u64,
}

impl CooccurStats {
    pub fn codf(&self, a: &[TokenId], b: &[TokenId]) -> Result<u64> {
        if a == b {
            return Err(Error::ExcludedPair(a.iter().map(|t| t.0).collect()));
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.codf
            .get(&(lo.to_vec(), hi.to_vec()))
            .copied()
            .ok_or_else(|| Error::UntrackedTerm(a.iter().map(|t| t.0).collect()))
    }
}

const STATS_MAGIC: &[u8; 8] = b"PVSCOO\0\0";

fn write_term(w: &mut impl Write, term: &[TokenId]) -> std::io::Result<()> {
    w.write_all(&(term.len() as u32).to_le_bytes())?;
    for t in term {
        w.write_all(&t.0.to_le_bytes())?;
    }
    Ok(())
}

fn read_term(cur: &mut Cursor<'_>) -> Result<Term> {
    let len = cur.u32()? as usize;
    (0..len).map(|_| cur.u32().map(TokenId)).collect()
}

impl CooccurStats {
    /// Binary sidecar: magic, version, total docs, df entries, codf entries,
    /// all little-endian and in key order.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(STATS_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.total_docs.to_le_bytes())?;
        w.write_all(&(self.df.len() as u64).to_le_bytes())?;
        for (term, n) in &self.df {
            write_term(&mut w, term)?;
            w.write_all(&n.to_le_bytes())?;
        }
        w.write_all(&(self.codf.len() as u64).to_le_bytes())?;
        for ((a, b), n) in &self.codf {
            write_term(&mut w, a)?;
            write_term(&mut w, b)?;
            w.write_all(&n.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::IndexFormat(e.to_string()))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(8)? != STATS_MAGIC {
            return Err(Error::IndexFormat(
                "bad magic for co-occurrence stats".into(),
            ));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut stats = CooccurStats {
            total_docs: cur.u64()?,
            ..Default::default()
        };
        for _ in 0..cur.u64()? {
            let term = read_term(&mut cur)?;
            stats.df.insert(term, cur.u64()?);
        }
        for _ in 0..cur.u64()? {
            let a = read_term(&mut cur)?;
            let b = read_term(&mut cur)?;
            if a >= b {
                return Err(Error::IndexFormat("co-occurrence key out of order".into()));
            }
            stats.codf.insert((a, b), cur.u64()?);
        }
        if cur.pos != buf.len() {
            return Err(Error::IndexFormat("trailing bytes".into()));
        }
        Ok(stats)
    }
}

/// Per-token document presence rates over a document sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    counts: BTreeMap<TokenId, u64>,
    sample_size: usize,
    vocab_size: usize,
}

impl FreqTable {
    pub fn from_counts(
        counts: BTreeMap<TokenId, u64>,
        sample_size: usize,
        vocab_size: usize,
    ) -> Result<Self> {
        if sample_size == 0 {
            return Err(Error::InvalidInput(
                "frequency table over zero documents".into(),
            ));
        }
        if let Some((t, c)) = counts.iter().find(|(_, &c)| c as usize > sample_size) {
            return Err(Error::InvalidInput(format!(
                "token {t} counted in {c} of {sample_size} documents"
            )));
        }
        Ok(FreqTable {
            counts,
            sample_size,
            vocab_size,
        })
    }

    /// Fraction of sampled documents containing `token`; 0 when absent.
    pub fn freq(&self, token: TokenId) -> f64 {
        self.count(token) as f64 / self.sample_size as f64
    }

    pub fn count(&self, token: TokenId) -> u64 {
        self.counts.get(&token).copied().unwrap_or(0)
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Tokens with a non-zero count, ascending.
    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.counts.keys().copied()
    }
}

/// Document presence rate of every token over the listed documents.
pub fn token_freq<S: AsRef<str>>(corpus: &Corpus, doc_ids: &[S]) -> Result<FreqTable> {
    if doc_ids.is_empty() {
        return Err(Error::InvalidInput(
            "token_freq over an empty document list".into(),
        ));
    }
    let mut counts: BTreeMap<TokenId, u64> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for id in doc_ids {
        let doc = corpus
            .get(id.as_ref())
            .ok_or_else(|| Error::UnknownDocId(id.as_ref().to_owned()))?;
        seen.clear();
        seen.extend(doc.tokens.iter().copied());
        for &t in &seen {
            *counts.entry(t).or_default() += 1;
        }
    }
    FreqTable::from_counts(counts, doc_ids.len(), corpus.vocab().len())
}
