mod behavior;
mod common;
mod corpus;
mod curate;
mod pivots;
mod score;

use anyhow::Result;
use clap::Subcommand;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a corpus and write it back in normalized form.
    Ingest(corpus::IngestArgs),
    /// Build a document index for the tasks' words or listed terms.
    Index(corpus::IndexArgs),
    /// Document and co-document frequencies for every task pair.
    Cooccur(corpus::CooccurArgs),
    /// Seeded uniform sample of documents containing a term.
    Sample(corpus::SampleArgs),
    /// Token document-presence rates over listed documents.
    Freq(corpus::FreqArgs),
    /// Semantic-pivot candidates per task.
    Pivots(pivots::PivotsArgs),
    /// Label traces as co-occurrence or semantic-pivot behavior.
    Classify(behavior::ClassifyArgs),
    /// Per language pair AUC of co-document counts by behavior.
    Auc(behavior::AucArgs),
    /// Translation ability matrix from loss records.
    Score(score::ScoreArgs),
    /// Pivot-set and target-word probability by layer.
    Curve(behavior::CurveArgs),
    /// Token co-occurrence degrees and the resulting pivot token set.
    Adjacency(curate::AdjacencyArgs),
    /// Rank documents by pivot share and assemble a dataset manifest.
    Curate(curate::CurateArgs),
    /// Chunk-level language distribution of a corpus or manifest.
    Langdist(curate::LangdistArgs),
}

pub fn run(command: &Command, workers: usize) -> Result<String> {
    match command {
        Command::Ingest(a) => corpus::ingest(a),
        Command::Index(a) => corpus::index(a, workers),
        Command::Cooccur(a) => corpus::cooccur(a),
        Command::Sample(a) => corpus::sample(a),
        Command::Freq(a) => corpus::freq(a),
        Command::Pivots(a) => pivots::pivots(a, workers),
        Command::Classify(a) => behavior::classify(a, workers),
        Command::Auc(a) => behavior::auc(a),
        Command::Score(a) => score::score(a),
        Command::Curve(a) => behavior::curve(a),
        Command::Adjacency(a) => curate::adjacency(a, workers),
        Command::Curate(a) => curate::curate(a, workers),
        Command::Langdist(a) => curate::langdist(a),
    }
}
