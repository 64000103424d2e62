use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use pivotscope::scoring::{
    ability_matrix, read_loss_records, score_tasks, Protocol, DEFAULT_DISTRACTORS, DEFAULT_TRIALS,
};

use super::common::{load_tasks, parse_languages};
use crate::output::{open, write_atomic, Provenance};

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Loss records, one JSON record per line.
    #[arg(long)]
    pub losses: PathBuf,
    /// Row and column order, e.g. `en,fr,zh,ja`.
    #[arg(long)]
    pub languages: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u32,
    #[arg(long, default_value_t = DEFAULT_DISTRACTORS)]
    pub distractors: usize,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn score(args: &ScoreArgs) -> Result<String> {
    let protocol = Protocol {
        trials: args.trials,
        distractors: args.distractors,
    };
    let tasks = load_tasks(&args.tasks)?;
    let records = read_loss_records(open(&args.losses)?)
        .with_context(|| format!("reading loss records from {}", args.losses.display()))?;
    let scores = score_tasks(&tasks, &records, &protocol)?;
    let languages = args.languages.as_deref().map(parse_languages);
    let matrix = ability_matrix(&scores, languages.as_deref())?;
    let mut prov = Provenance::new("score")
        .set("trials", args.trials)
        .set("distractors", args.distractors);
    if let Some(l) = &languages {
        prov = prov.set("languages", l.join(","));
    }
    write_atomic(&args.out, |w| {
        w.write_all(prov.csv_comment().as_bytes())?;
        matrix.write_csv(w)?;
        Ok(())
    })?;
    Ok(format!(
        "score: {} tasks, {} languages, mean {:.6} -> {}",
        scores.len(),
        matrix.languages.len(),
        matrix.mean,
        args.out.display()
    ))
}
