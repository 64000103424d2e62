//! Word-level cross-lingual translation scoring.
//!
//! A translation probability is the geometric mean of the target word's
//! per-token probabilities. Each measurement is calibrated by subtracting the
//! mean probability obtained when the source word is replaced by each of nine
//! distractors; a task's score is the mean calibrated score over five
//! few-shot trials, and a language pair's ability is the mean over its tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_TRIALS: u32 = 5;
pub const DEFAULT_DISTRACTORS: usize = 9;

/// Measurement protocol: trials per task and distractors per measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub trials: u32,
    pub distractors: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            trials: DEFAULT_TRIALS,
            distractors: DEFAULT_DISTRACTORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordPairTask {
    pub task_id: String,
    pub source_word: String,
    pub target_word: String,
    pub source_lang: String,
    pub target_lang: String,
    pub distractors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    /// Source word in the model's token space, when the runner exported it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_tokens: Option<Vec<u32>>,
}

impl WordPairTask {
    pub fn validate(&self, protocol: &Protocol) -> Result<()> {
        let bad = |message: String| Error::InvalidTask {
            task_id: self.task_id.clone(),
            message,
        };
        if self.distractors.len() != protocol.distractors {
            return Err(bad(format!(
                "expected {} distractors, found {}",
                protocol.distractors,
                self.distractors.len()
            )));
        }
        if self.source_lang == self.target_lang {
            return Err(bad(format!(
                "source and target language are both `{}`",
                self.source_lang
            )));
        }
        if self.distractors.iter().any(|d| d == &self.source_word) {
            return Err(bad(format!(
                "distractor equals source word `{}`",
                self.source_word
            )));
        }
        Ok(())
    }

    pub fn pair(&self) -> (&str, &str) {
        (&self.source_lang, &self.target_lang)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Source,
    Distractor(u8),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Source => f.write_str("source"),
            Subject::Distractor(k) => write!(f, "distractor:{k}"),
        }
    }
}

impl FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "source" {
            return Ok(Subject::Source);
        }
        s.strip_prefix("distractor:")
            .and_then(|k| k.parse().ok())
            .map(Subject::Distractor)
            .ok_or_else(|| format!("invalid subject `{s}`"))
    }
}

impl Serialize for Subject {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subject {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub task_id: String,
    pub trial: u32,
    pub subject: Subject,
    pub shot_seed: u64,
    /// Natural-log probabilities of the target word's tokens.
    pub token_logprobs: Vec<f64>,
}

/// `exp(mean(token_logprobs))`, the geometric mean of the token
/// probabilities.
///
/// The log-probabilities are summed in sorted order, so the result does not
/// depend on their order. Underflow is clamped to the smallest positive
/// normal so the result stays in `(0, 1]`.
pub fn prob_from_record(record: &LossRecord) -> Result<f64> {
    let bad = |message: &str| Error::InvalidRecord {
        task_id: record.task_id.clone(),
        message: format!("{} trial {}: {message}", record.subject, record.trial),
    };
    if record.token_logprobs.is_empty() {
        return Err(bad("no token log-probabilities"));
    }
    if record
        .token_logprobs
        .iter()
        .any(|lp| lp.is_nan() || *lp > 0.0)
    {
        return Err(bad("log-probabilities must be <= 0"));
    }
    let n = record.token_logprobs.len() as f64;
    let mut sorted = record.token_logprobs.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    Ok(mean.exp().clamp(f64::MIN_POSITIVE, 1.0))
}

/// Source probability minus the mean distractor probability.
pub fn calibrated_score(p_source: f64, p_distractors: &[f64], protocol: &Protocol) -> Result<f64> {
    if p_distractors.len() != protocol.distractors {
        return Err(Error::InvalidInput(format!(
            "calibration needs {} distractor probabilities, got {}",
            protocol.distractors,
            p_distractors.len()
        )));
    }
    let in_range = |p: f64| p > 0.0 && p <= 1.0;
    if !in_range(p_source) || !p_distractors.iter().all(|&p| in_range(p)) {
        return Err(Error::InvalidInput(
            "probabilities must lie in (0, 1]".into(),
        ));
    }
    let mean = p_distractors.iter().sum::<f64>() / p_distractors.len() as f64;
    Ok(p_source - mean)
}

/// Mean over trials of the per-trial calibrated score. `records` must hold,
/// for every trial, one source record and one record per distractor slot.
pub fn task_score(records: &[LossRecord], protocol: &Protocol) -> Result<f64> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidInput("task_score over no records".into()));
    };
    let task_id = &first.task_id;
    let mut slots: BTreeMap<(u32, Subject), &LossRecord> = BTreeMap::new();
    for r in records {
        if &r.task_id != task_id {
            return Err(Error::InvalidInput(format!(
                "records from tasks `{task_id}` and `{}` mixed",
                r.task_id
            )));
        }
        let out_of_range = r.trial >= protocol.trials
            || matches!(r.subject, Subject::Distractor(k) if k as usize >= protocol.distractors);
        if out_of_range {
            return Err(Error::InvalidRecord {
                task_id: task_id.clone(),
                message: format!("unexpected slot trial {} {}", r.trial, r.subject),
            });
        }
        if slots.insert((r.trial, r.subject), r).is_some() {
            return Err(Error::InvalidRecord {
                task_id: task_id.clone(),
                message: format!("duplicate record for trial {} {}", r.trial, r.subject),
            });
        }
    }

    let mut gaps = Vec::new();
    for trial in 0..protocol.trials {
        let subjects = std::iter::once(Subject::Source)
            .chain((0..protocol.distractors as u8).map(Subject::Distractor));
        for subject in subjects {
            if !slots.contains_key(&(trial, subject)) {
                gaps.push(format!("trial {trial} {subject}"));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::IncompleteTask {
            task_id: task_id.clone(),
            gaps: gaps.join(", "),
        });
    }

    let mut total = 0.0;
    for trial in 0..protocol.trials {
        let p_source = prob_from_record(slots[&(trial, Subject::Source)])?;
        let p_distractors = (0..protocol.distractors as u8)
            .map(|k| prob_from_record(slots[&(trial, Subject::Distractor(k))]))
            .collect::<Result<Vec<_>>>()?;
        total += calibrated_score(p_source, &p_distractors, protocol)?;
    }
    Ok(total / protocol.trials as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    pub task_id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub score: f64,
}

/// Scores every task from its loss records.
pub fn score_tasks(
    tasks: &[WordPairTask],
    records: &[LossRecord],
    protocol: &Protocol,
) -> Result<Vec<TaskScore>> {
    let mut by_task: BTreeMap<&str, Vec<LossRecord>> = BTreeMap::new();
    for r in records {
        by_task
            .entry(r.task_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let known: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    if let Some(stray) = by_task.keys().find(|id| !known.contains(*id)) {
        return Err(Error::InvalidInput(format!(
            "loss records for unknown task `{stray}`"
        )));
    }
    tasks
        .iter()
        .map(|task| {
            task.validate(protocol)?;
            let recs = by_task
                .get(task.task_id.as_str())
                .ok_or_else(|| Error::IncompleteTask {
                    task_id: task.task_id.clone(),
                    gaps: "no loss records".into(),
                })?;
            Ok(TaskScore {
                task_id: task.task_id.clone(),
                source_lang: task.source_lang.clone(),
                target_lang: task.target_lang.clone(),
                score: task_score(recs, protocol)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub languages: Vec<String>,
    /// Keyed by (source, target); never holds a diagonal entry.
    pub cells: BTreeMap<(String, String), f64>,
    pub mean: f64,
}

/// Averages task scores per ordered language pair.
///
/// With `languages`, every off-diagonal pair among them must have at least
/// one score and they fix the row/column order. Without, the order is the
/// sorted set of languages seen and only observed pairs get cells.
pub fn ability_matrix(scores: &[TaskScore], languages: Option<&[String]>) -> Result<ScoreMatrix> {
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for s in scores {
        if s.source_lang == s.target_lang {
            return Err(Error::InvalidInput(format!(
                "task `{}` has source == target language",
                s.task_id
            )));
        }
        let e = sums
            .entry((s.source_lang.clone(), s.target_lang.clone()))
            .or_default();
        e.0 += s.score;
        e.1 += 1;
    }
    let languages: Vec<String> = match languages {
        Some(order) => {
            let listed: BTreeSet<&String> = order.iter().collect();
            if let Some((a, b)) = sums
                .keys()
                .find(|(a, b)| !listed.contains(a) || !listed.contains(b))
            {
                return Err(Error::InvalidInput(format!(
                    "pair {a}->{b} uses an unlisted language"
                )));
            }
            for a in order {
                for b in order {
                    if a != b && !sums.contains_key(&(a.clone(), b.clone())) {
                        return Err(Error::InvalidInput(format!(
                            "no task scores for pair {a}->{b}"
                        )));
                    }
                }
            }
            order.to_vec()
        }
        None => {
            let seen: BTreeSet<&String> = sums.keys().flat_map(|(a, b)| [a, b]).collect();
            seen.into_iter().cloned().collect()
        }
    };
    if sums.is_empty() {
        return Err(Error::InvalidInput("no task scores".into()));
    }
    let cells: BTreeMap<(String, String), f64> = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    let mean = cells.values().sum::<f64>() / cells.len() as f64;
    Ok(ScoreMatrix {
        languages,
        cells,
        mean,
    })
}

impl ScoreMatrix {
    pub fn cell(&self, source: &str, target: &str) -> Option<f64> {
        self.cells
            .get(&(source.to_owned(), target.to_owned()))
            .copied()
    }

    /// Source languages down, target languages across, then an `avg` line.
    /// Values use six decimals; absent cells are empty.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "source")?;
        for t in &self.languages {
            write!(w, ",{t}")?;
        }
        writeln!(w)?;
        for s in &self.languages {
            write!(w, "{s}")?;
            for t in &self.languages {
                match self.cell(s, t) {
                    Some(v) => write!(w, ",{v:.6}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        writeln!(w, "avg,{:.6}", self.mean)
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl Read, context: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(context, i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(context, i + 1, e))?);
    }
    Ok(out)
}

pub fn read_tasks(reader: impl Read) -> Result<Vec<WordPairTask>> {
    let tasks: Vec<WordPairTask> = read_jsonl(reader, "tasks")?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate task_id `{}`",
                t.task_id
            )));
        }
    }
    Ok(tasks)
}

pub fn read_loss_records(reader: impl Read) -> Result<Vec<LossRecord>> {
    read_jsonl(reader, "losses")
}
