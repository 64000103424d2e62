//! Chunked language identification for curation reports.
//!
//! Documents are cut into overlapping windows (256 positions, step 128) and
//! each window gets one label. The built-in classifier compares ranked
//! character n-gram profiles (out-of-place distance); labels can also be
//! read from a precomputed sidecar.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const DEFAULT_CHUNK_STEP: usize = 128;
pub const PROFILE_LIMIT: usize = 300;
const MAX_NGRAM: usize = 3;
/// Softmax temperature over normalized distances.
const TEMPERATURE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkSpan {
    pub start: usize,
    pub end: usize,
}

impl ChunkSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Windows `[0, size), [step, step + size), ...`, the last one ending at
/// `length`.
pub fn chunks(length: usize, size: usize, step: usize) -> Result<Vec<ChunkSpan>> {
    if length == 0 {
        return Err(Error::InvalidInput("cannot chunk an empty sequence".into()));
    }
    if step == 0 || step > size {
        return Err(Error::InvalidInput(format!(
            "chunk step {step} must be in 1..={size}"
        )));
    }
    if length <= size {
        return Ok(vec![ChunkSpan {
            start: 0,
            end: length,
        }]);
    }
    let count = (length - size).div_ceil(step) + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * step;
            ChunkSpan {
                start,
                end: (start + size).min(length),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    En,
    Fr,
    Zh,
    Ja,
    Other,
}

impl LanguageTag {
    pub const ALL: [LanguageTag; 5] = [Self::En, Self::Fr, Self::Zh, Self::Ja, Self::Other];
    pub const PROFILED: [LanguageTag; 4] = [Self::En, Self::Fr, Self::Zh, Self::Ja];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::En => "en",
            Self::Fr => "fr",
            Self::Zh => "zh",
            Self::Ja => "ja",
            Self::Other => "other",
        }
    }

    pub fn is_non_english(self) -> bool {
        matches!(self, Self::Fr | Self::Zh | Self::Ja)
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown language tag {s:?}")))
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x31F0..=0x31FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF |
        0xF900..=0xFAFF | 0xFF66..=0xFF9F | 0x20000..=0x2FA1F)
}

/// Lowercased letter runs. Whitespace between two CJK characters does not
/// break a run, so space-joined single-character tokens read as text.
fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphabetic() {
            cur.push(c);
            i += 1;
            continue;
        }
        if c.is_whitespace() && cur.chars().last().is_some_and(is_cjk) {
            let mut j = i;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() && is_cjk(chars[j]) {
                i = j;
                continue;
            }
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        i += 1;
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngram_counts(text: &str) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for w in words(text) {
        let padded: Vec<char> = std::iter::once('_')
            .chain(w.chars())
            .chain(std::iter::once('_'))
            .collect();
        for n in 1..=MAX_NGRAM {
            for gram in padded.windows(n) {
                if n == 1 && gram[0] == '_' {
                    continue;
                }
                *counts.entry(gram.iter().collect()).or_default() += 1;
            }
        }
    }
    counts
}

/// Character n-grams (1 to 3, words padded with `_`) ranked by frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile {
    ranked: Vec<(String, u64)>,
}

impl NgramProfile {
    /// Ties in frequency are ranked by the n-gram itself.
    pub fn from_text(text: &str, limit: usize) -> Self {
        let mut ranked: Vec<(String, u64)> = ngram_counts(text).into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(limit);
        NgramProfile { ranked }
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn grams(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(g, _)| g.as_str())
    }

    /// One `ngram<TAB>count` line per entry, best first.
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut ranked = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::parse("profile", i + 1, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (gram, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("profile", i + 1, "expected ngram<TAB>count"))?;
            let count = count
                .parse()
                .map_err(|_| Error::parse("profile", i + 1, format!("bad count {count:?}")))?;
            ranked.push((gram.to_owned(), count));
        }
        Ok(NgramProfile { ranked })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for (g, c) in &self.ranked {
            writeln!(w, "{g}\t{c}")?;
        }
        Ok(())
    }
}

pub trait LanguageClassifier: Sync {
    /// Top label and its probability.
    fn classify(&self, text: &str) -> Result<(LanguageTag, f64)>;
}

/// Rank-order n-gram classifier over a closed set of language profiles.
#[derive(Debug, Clone)]
pub struct ProfileClassifier {
    profiles: Vec<(LanguageTag, HashMap<String, usize>)>,
}

impl ProfileClassifier {
    pub fn new(profiles: impl IntoIterator<Item = (LanguageTag, NgramProfile)>) -> Self {
        let mut profiles: Vec<_> = profiles
            .into_iter()
            .map(|(tag, p)| {
                let ranks = p
                    .ranked
                    .into_iter()
                    .enumerate()
                    .map(|(i, (g, _))| (g, i))
                    .collect();
                (tag, ranks)
            })
            .collect();
        profiles.sort_by_key(|(tag, _)| *tag);
        ProfileClassifier { profiles }
    }

    /// Profiles for en, fr, zh and ja compiled into the library.
    pub fn builtin() -> Self {
        let parse =
            |s: &str| NgramProfile::read_from(s.as_bytes()).expect("shipped profile parses");
        Self::new([
            (LanguageTag::En, parse(include_str!("../profiles/en.txt"))),
            (LanguageTag::Fr, parse(include_str!("../profiles/fr.txt"))),
            (LanguageTag::Zh, parse(include_str!("../profiles/zh.txt"))),
            (LanguageTag::Ja, parse(include_str!("../profiles/ja.txt"))),
        ])
    }

    /// Out-of-place distance to each profile, scaled to `[0, 1]`.
    pub fn distances(&self, text: &str) -> Vec<(LanguageTag, f64)> {
        let doc = NgramProfile::from_text(text, PROFILE_LIMIT);
        self.profiles
            .iter()
            .map(|(tag, ranks)| {
                let max = ranks.len().max(1);
                let total: usize = doc
                    .grams()
                    .enumerate()
                    .map(|(i, g)| ranks.get(g).map_or(max, |&r| r.abs_diff(i).min(max)))
                    .sum();
                (*tag, total as f64 / (doc.len().max(1) * max) as f64)
            })
            .collect()
    }

    /// Softmax over negated distances, in closed-set order.
    pub fn probabilities(&self, text: &str) -> Vec<(LanguageTag, f64)> {
        let d = self.distances(text);
        let best = d.iter().map(|(_, x)| *x).fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = d
            .iter()
            .map(|(_, x)| (-(x - best) / TEMPERATURE).exp())
            .collect();
        let z: f64 = w.iter().sum();
        d.iter().zip(w).map(|((t, _), w)| (*t, w / z)).collect()
    }
}

impl LanguageClassifier for ProfileClassifier {
    fn classify(&self, text: &str) -> Result<(LanguageTag, f64)> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("empty chunk".into()));
        }
        if words(text).is_empty() || self.profiles.is_empty() {
            return Ok((LanguageTag::Other, 1.0));
        }
        let probs = self.probabilities(text);
        // first maximum wins, so ties resolve in closed-set order
        let mut best = probs[0];
        for &p in &probs[1..] {
            if p.1 > best.1 {
                best = p;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalLabel {
    pub doc_id: String,
    pub chunk_index: usize,
    pub label: LanguageTag,
    pub prob: f64,
}

/// Precomputed chunk labels keyed by `(doc_id, chunk_index)`.
#[derive(Debug, Clone, Default)]
pub struct ExternalLabels {
    labels: HashMap<(String, usize), (LanguageTag, f64)>,
}

impl ExternalLabels {
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut labels = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::parse("chunk labels", i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: ExternalLabel = serde_json::from_str(&line)
                .map_err(|e| Error::parse("chunk labels", i + 1, e.to_string()))?;
            labels.insert((l.doc_id, l.chunk_index), (l.label, l.prob));
        }
        Ok(ExternalLabels { labels })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_from(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn get(&self, doc_id: &str, chunk: usize) -> Result<(LanguageTag, f64)> {
        self.labels
            .get(&(doc_id.to_owned(), chunk))
            .copied()
            .ok_or_else(|| Error::MissingChunkLabel {
                doc_id: doc_id.to_owned(),
                chunk,
            })
    }
}

impl FromIterator<ExternalLabel> for ExternalLabels {
    fn from_iter<I: IntoIterator<Item = ExternalLabel>>(iter: I) -> Self {
        ExternalLabels {
            labels: iter
                .into_iter()
                .map(|l| ((l.doc_id, l.chunk_index), (l.label, l.prob)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChunkUnit {
    /// Token positions; chunk text is the token surfaces joined by spaces.
    #[default]
    Tokens,
    /// Character positions of the raw document text.
    Chars,
}

#[derive(Clone, Copy)]
pub enum Labeler<'a> {
    Classifier(&'a dyn LanguageClassifier),
    External(&'a ExternalLabels),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocLanguages {
    pub chunk_labels: Vec<(LanguageTag, f64)>,
    pub non_english: bool,
}

impl DocLanguages {
    /// Most frequent chunk label; ties resolve in closed-set order.
    pub fn majority(&self) -> LanguageTag {
        let mut counts: BTreeMap<LanguageTag, usize> = BTreeMap::new();
        for (t, _) in &self.chunk_labels {
            *counts.entry(*t).or_default() += 1;
        }
        let mut best = (LanguageTag::Other, 0);
        for (t, c) in counts {
            if c > best.1 {
                best = (t, c);
            }
        }
        best.0
    }
}

/// Chunking and labeling settings for whole documents.
#[derive(Clone, Copy)]
pub struct DocumentLanguageId<'a> {
    pub labeler: Labeler<'a>,
    pub vocab: &'a Vocabulary,
    pub size: usize,
    pub step: usize,
    pub unit: ChunkUnit,
}

impl<'a> DocumentLanguageId<'a> {
    pub fn new(labeler: Labeler<'a>, vocab: &'a Vocabulary) -> Self {
        DocumentLanguageId {
            labeler,
            vocab,
            size: DEFAULT_CHUNK_SIZE,
            step: DEFAULT_CHUNK_STEP,
            unit: ChunkUnit::Tokens,
        }
    }

    pub fn chunk_texts(&self, doc: &Document) -> Result<Vec<String>> {
        match self.unit {
            ChunkUnit::Tokens => {
                let spans = chunks(doc.tokens.len(), self.size, self.step)?;
                spans
                    .iter()
                    .map(|s| {
                        let mut text = String::new();
                        for (i, t) in doc.tokens[s.start..s.end].iter().enumerate() {
                            if i > 0 {
                                text.push(' ');
                            }
                            text.push_str(self.vocab.surface(*t).ok_or(
                                Error::TokenOutOfRange {
                                    id: t.0,
                                    vocab_size: self.vocab.len(),
                                },
                            )?);
                        }
                        Ok(text)
                    })
                    .collect()
            }
            ChunkUnit::Chars => {
                let text = doc.text.as_deref().ok_or_else(|| {
                    Error::InvalidInput(format!("document {} has no raw text", doc.doc_id))
                })?;
                let chars: Vec<char> = text.chars().collect();
                let spans = chunks(chars.len(), self.size, self.step)?;
                Ok(spans
                    .iter()
                    .map(|s| chars[s.start..s.end].iter().collect())
                    .collect())
            }
        }
    }

    pub fn languages(&self, doc: &Document) -> Result<DocLanguages> {
        let chunk_labels = match self.labeler {
            Labeler::Classifier(c) => self
                .chunk_texts(doc)?
                .iter()
                .map(|t| {
                    if t.trim().is_empty() {
                        Ok((LanguageTag::Other, 1.0))
                    } else {
                        c.classify(t)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            Labeler::External(ext) => {
                let len = match self.unit {
                    ChunkUnit::Tokens => doc.tokens.len(),
                    ChunkUnit::Chars => doc.text.as_deref().map_or(0, |t| t.chars().count()),
                };
                let n = chunks(len, self.size, self.step)?.len();
                (0..n)
                    .map(|i| ext.get(&doc.doc_id, i))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let non_english = chunk_labels.iter().any(|(t, _)| t.is_non_english());
        Ok(DocLanguages {
            chunk_labels,
            non_english,
        })
    }
}

/// Chunk-weighted language shares plus the count of documents containing
/// any non-English chunk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanguageDistribution {
    pub chunk_counts: BTreeMap<LanguageTag, u64>,
    pub docs: usize,
    pub non_english_docs: usize,
}

impl LanguageDistribution {
    pub fn add(&mut self, langs: &DocLanguages) {
        self.docs += 1;
        self.non_english_docs += langs.non_english as usize;
        for (t, _) in &langs.chunk_labels {
            *self.chunk_counts.entry(*t).or_default() += 1;
        }
    }

    pub fn total_chunks(&self) -> u64 {
        self.chunk_counts.values().sum()
    }

    pub fn fraction(&self, tag: LanguageTag) -> f64 {
        let total = self.total_chunks();
        if total == 0 {
            return 0.0;
        }
        self.chunk_counts.get(&tag).copied().unwrap_or(0) as f64 / total as f64
    }

    /// Percentages of fr, zh and ja chunks (plus en and other), then
    /// document counts.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "fr,zh,ja,en,other,non_english_docs,docs")?;
        let pct = |t| format!("{:.6}", 100.0 * self.fraction(t));
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            pct(LanguageTag::Fr),
            pct(LanguageTag::Zh),
            pct(LanguageTag::Ja),
            pct(LanguageTag::En),
            pct(LanguageTag::Other),
            self.non_english_docs,
            self.docs
        )
    }
}
