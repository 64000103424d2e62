//! Document corpora, the shared vocabulary, and the fallback tokenizer.
//!
//! Corpora are JSON-lines files with one document per line. The canonical
//! input is pretokenized (`tokens` holds ids in some model's vocabulary);
//! raw `text` is tokenized by [`fallback_tokenize`], which grows the
//! vocabulary as it goes.
//!
//! A loaded [`Corpus`] is immutable and split into fixed-size shards so that
//! counting passes can fan out over shards and merge their partial results.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SHARD_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for TokenId {
    fn from(id: u32) -> Self {
        TokenId(id)
    }
}

/// Bijective map between surface strings and dense token ids `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_surfaces<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        for (line, surface) in surfaces.into_iter().enumerate() {
            let surface = surface.into();
            if vocab.ids.contains_key(&surface) {
                return Err(Error::DuplicateSurface {
                    surface,
                    line: line + 1,
                });
            }
            vocab.push(surface);
        }
        Ok(vocab)
    }

    /// Placeholder vocabulary `#0 .. #{size-1}` for pretokenized corpora
    /// shipped without a vocabulary file.
    pub fn synthetic(size: usize) -> Self {
        let mut vocab = Vocabulary::new();
        for i in 0..size {
            vocab.push(format!("#{i}"));
        }
        vocab
    }

    fn push(&mut self, surface: String) -> TokenId {
        let id = TokenId(self.surfaces.len() as u32);
        self.ids.insert(surface.clone(), id);
        self.surfaces.push(surface);
        id
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.ids.get(surface).copied()
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                id: id.0,
                vocab_size: self.len(),
            })
        }
    }

    /// Returns the id for `surface`, adding it if unseen.
    pub fn intern(&mut self, surface: &str) -> TokenId {
        match self.ids.get(surface) {
            Some(&id) => id,
            None => self.push(surface.to_owned()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (TokenId(i as u32), s.as_str()))
    }

    /// Frozen-mode tokenization: every surface form must already be known.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        segment(text)
            .into_iter()
            .map(|s| self.id(&s).ok_or(Error::UnknownSurface(s)))
            .collect()
    }

    /// Reads the sidecar format: one escaped surface form per line, line
    /// number (0-based) is the id.
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut surfaces = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::parse("vocabulary", i + 1, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            surfaces.push(unescape(line).map_err(|m| Error::parse("vocabulary", i + 1, m))?);
        }
        Self::from_surfaces(surfaces)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        for surface in &self.surfaces {
            writeln!(writer, "{}", escape(surface))?;
        }
        Ok(())
    }
}

// Surface forms may contain newlines (byte-level BPE vocabularies do), so the
// line-oriented sidecar escapes backslash, LF and CR.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape sequence `\\{}`", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

fn is_combining(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF)
}

/// Splits text into lowercased surface forms.
///
/// Words are maximal runs of alphanumeric characters. Every other
/// non-whitespace character (punctuation, symbols) is its own form, as is
/// every CJK ideograph or kana.
pub fn segment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(word.to_lowercase());
            word.clear();
        }
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut out);
        } else if is_cjk(c) {
            flush(&mut word, &mut out);
            out.push(c.to_string());
        } else if c.is_alphanumeric() || (is_combining(c) && !word.is_empty()) {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c.to_string());
        }
    }
    flush(&mut word, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    /// Unseen surface forms are appended to the vocabulary.
    Building,
    /// Unseen surface forms are an error.
    Frozen,
}

/// Deterministic self-contained tokenizer used when no model tokenizer is
/// available. Ids are assigned in first-seen order in building mode.
pub fn fallback_tokenize(
    text: &str,
    vocab: &mut Vocabulary,
    mode: VocabMode,
) -> Result<Vec<TokenId>> {
    match mode {
        VocabMode::Frozen => vocab.tokenize(text),
        VocabMode::Building => Ok(segment(text).iter().map(|s| vocab.intern(s)).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, tokens: impl IntoIterator<Item = u32>) -> Self {
        Document {
            doc_id: doc_id.into(),
            tokens: tokens.into_iter().map(TokenId).collect(),
            text: None,
            source_tag: None,
        }
    }

    /// Contiguous-subsequence containment over token ids.
    pub fn contains_term(&self, term: &[TokenId]) -> bool {
        !term.is_empty() && self.tokens.windows(term.len()).any(|w| w == term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    Pretokenized,
    Raw,
}

#[derive(Debug, Clone)]
pub struct Shard {
    pub name: String,
    pub docs: Vec<Document>,
}

/// An ingested, immutable corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    shards: Vec<Shard>,
    vocab: Vocabulary,
    total_docs: usize,
    dropped_empty: usize,
    lookup: HashMap<String, (usize, usize)>,
}

#[derive(Deserialize)]
struct Line {
    doc_id: Option<String>,
    tokens: Option<Vec<i64>>,
    text: Option<String>,
    source_tag: Option<String>,
}

impl Corpus {
    /// Builds a corpus from in-memory documents. Empty documents are dropped
    /// and counted in [`Corpus::dropped_empty`].
    pub fn from_documents(
        docs: impl IntoIterator<Item = Document>,
        vocab: Vocabulary,
        shard_size: usize,
    ) -> Result<Self> {
        let shard_size = shard_size.max(1);
        let mut corpus = Corpus {
            shards: Vec::new(),
            vocab,
            total_docs: 0,
            dropped_empty: 0,
            lookup: HashMap::new(),
        };
        let mut seen = std::collections::HashSet::new();
        for doc in docs {
            if !seen.insert(doc.doc_id.clone()) {
                return Err(Error::DuplicateDocId(doc.doc_id));
            }
            for &t in &doc.tokens {
                corpus.vocab.check(t)?;
            }
            corpus.admit(doc, shard_size);
        }
        Ok(corpus)
    }

    fn admit(&mut self, doc: Document, shard_size: usize) {
        if doc.tokens.is_empty() {
            self.dropped_empty += 1;
            return;
        }
        if self
            .shards
            .last()
            .is_none_or(|s| s.docs.len() >= shard_size)
        {
            let name = format!("shard-{:05}", self.shards.len());
            self.shards.push(Shard {
                name,
                docs: Vec::new(),
            });
        }
        let si = self.shards.len() - 1;
        let shard = &mut self.shards[si];
        self.lookup
            .insert(doc.doc_id.clone(), (si, shard.docs.len()));
        shard.docs.push(doc);
        self.total_docs += 1;
    }

    /// Parses a JSON-lines corpus.
    ///
    /// In pretokenized mode `vocab` bounds the token ids; without one a
    /// synthetic vocabulary covering the largest id is created. In raw mode
    /// `vocab` (or an empty vocabulary) is extended by the fallback tokenizer.
    pub fn ingest_reader(
        reader: impl Read,
        mode: IngestMode,
        vocab: Option<Vocabulary>,
        shard_size: usize,
    ) -> Result<Self> {
        let ctx = "corpus";
        let had_vocab = vocab.is_some();
        let mut vocab = vocab.unwrap_or_default();
        let mut docs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut max_id: Option<u32> = None;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(ctx, lineno, e))?;
            if line.trim().is_empty() || crate::header::is_header_line(&line) {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(&line).map_err(|e| Error::parse(ctx, lineno, e))?;
            let doc_id = parsed
                .doc_id
                .ok_or_else(|| Error::parse(ctx, lineno, "missing `doc_id`"))?;
            if !seen.insert(doc_id.clone()) {
                return Err(Error::DuplicateDocId(doc_id));
            }
            let tokens = match mode {
                IngestMode::Pretokenized => {
                    let raw = parsed
                        .tokens
                        .ok_or_else(|| Error::parse(ctx, lineno, "missing `tokens`"))?;
                    let mut tokens = Vec::with_capacity(raw.len());
                    for t in raw {
                        let t = u32::try_from(t).map_err(|_| {
                            Error::parse(ctx, lineno, format!("token id {t} is not a u32"))
                        })?;
                        if had_vocab {
                            vocab.check(TokenId(t))?;
                        }
                        max_id = max_id.max(Some(t));
                        tokens.push(TokenId(t));
                    }
                    tokens
                }
                IngestMode::Raw => {
                    let text = parsed
                        .text
                        .as_deref()
                        .ok_or_else(|| Error::parse(ctx, lineno, "missing `text`"))?;
                    fallback_tokenize(text, &mut vocab, VocabMode::Building)?
                }
            };
            docs.push(Document {
                doc_id,
                tokens,
                text: parsed.text,
                source_tag: parsed.source_tag,
            });
        }
        if mode == IngestMode::Pretokenized && !had_vocab {
            vocab = Vocabulary::synthetic(max_id.map_or(0, |m| m as usize + 1));
        }
        let corpus = Corpus::from_documents(docs, vocab, shard_size)?;
        if corpus.dropped_empty > 0 {
            log::warn!("dropped {} empty documents", corpus.dropped_empty);
        }
        Ok(corpus)
    }

    pub fn ingest_jsonl(
        path: impl AsRef<Path>,
        mode: IngestMode,
        vocab: Option<Vocabulary>,
        shard_size: usize,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::ingest_reader(file, mode, vocab, shard_size).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                context: path.display().to_string(),
                line,
                message,
            },
            e => e,
        })
    }

    /// Writes the corpus back out in pretokenized form, in iteration order.
    pub fn write_jsonl(&self, mut writer: impl Write) -> std::io::Result<()> {
        for doc in self.iter() {
            serde_json::to_writer(&mut writer, doc)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    pub fn dropped_empty(&self) -> usize {
        self.dropped_empty
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.lookup
            .get(doc_id)
            .map(|&(s, i)| &self.shards[s].docs[i])
    }

    /// Every document exactly once, shard by shard.
    pub fn iter(&self) -> impl Iterator<Item = &Document> + Clone {
        self.shards.iter().flat_map(|s| s.docs.iter())
    }
}

/// Alias matching the shard-iteration vocabulary used by the CLI.
pub fn shard_iter(corpus: &Corpus) -> impl Iterator<Item = &Document> {
    corpus.iter()
}
