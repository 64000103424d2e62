use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pivotscope::behavior::{BehaviorLabel, TaskTerms};
use pivotscope::corpus::{Corpus, IngestMode, DEFAULT_SHARD_SIZE};
use pivotscope::header::is_header_line;
use pivotscope::scoring::{self, WordPairTask};
use pivotscope::{Ratio, Vocabulary};

use crate::output::open;

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus file, one JSON document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary sidecar, one token surface per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Documents carry raw `text` to be tokenized instead of `tokens`.
    #[arg(long)]
    pub raw: bool,
    /// Documents per shard.
    #[arg(long, default_value_t = DEFAULT_SHARD_SIZE)]
    pub shard_size: usize,
}

impl CorpusArgs {
    pub fn mode(&self) -> IngestMode {
        if self.raw {
            IngestMode::Raw
        } else {
            IngestMode::Pretokenized
        }
    }

    pub fn load(&self) -> Result<Corpus> {
        let vocab = load_vocab(self.vocab.as_deref())?;
        self.load_with(&self.corpus, vocab)
    }

    /// Loads another corpus file in the same mode and token space.
    pub fn load_with(&self, path: &Path, vocab: Option<Vocabulary>) -> Result<Corpus> {
        if self.shard_size == 0 {
            bail!("--shard-size must be at least 1");
        }
        Ok(Corpus::ingest_jsonl(
            path,
            self.mode(),
            vocab,
            self.shard_size,
        )?)
    }
}

pub fn load_vocab(path: Option<&Path>) -> Result<Option<Vocabulary>> {
    path.map(|p| Vocabulary::load(p).map_err(Into::into))
        .transpose()
}

pub fn load_tasks(path: &Path) -> Result<Vec<WordPairTask>> {
    scoring::read_tasks(open(path)?)
        .with_context(|| format!("reading tasks from {}", path.display()))
}

/// Task terms against `vocab`, or against a placeholder vocabulary wide
/// enough for the token ids the tasks carry.
pub fn task_terms(tasks: &[WordPairTask], vocab: Option<&Vocabulary>) -> Result<Vec<TaskTerms>> {
    let fallback;
    let vocab = match vocab {
        Some(v) => v,
        None => {
            let max = tasks
                .iter()
                .flat_map(|t| {
                    t.source_tokens
                        .iter()
                        .chain(t.target_tokens.iter())
                        .flatten()
                })
                .max()
                .map_or(0, |&m| m as usize + 1);
            fallback = Vocabulary::synthetic(max);
            &fallback
        }
    };
    Ok(tasks
        .iter()
        .map(|t| TaskTerms::from_task(t, vocab))
        .collect::<pivotscope::Result<_>>()?)
}

pub fn read_labels(path: &Path) -> Result<Vec<BehaviorLabel>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || is_header_line(&line) {
            continue;
        }
        let label: BehaviorLabel = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed behavior label", path.display(), i + 1))?;
        out.push(label);
    }
    Ok(out)
}

pub fn labels_by_task(labels: Vec<BehaviorLabel>) -> Result<BTreeMap<String, BehaviorLabel>> {
    let mut map = BTreeMap::new();
    for l in labels {
        let id = l.task_id.clone();
        if map.insert(id.clone(), l).is_some() {
            bail!("two behavior labels for task `{id}`");
        }
    }
    Ok(map)
}

/// Non-empty, non-comment lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_owned());
        }
    }
    Ok(out)
}

pub fn parse_ratio(s: &str) -> std::result::Result<Ratio, String> {
    s.parse::<Ratio>().map_err(|e| e.to_string())
}

pub fn parse_languages(s: &str) -> Vec<String> {
    s.split(',')
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect()
}
