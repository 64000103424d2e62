//! Corpus statistics, translation scoring, logit-lens behavior analysis and
//! semantic-pivot dataset curation.

pub mod behavior;
pub mod cooccur_index;
pub mod corpus;
pub mod curation;
pub mod error;
pub mod header;
pub mod langid;
pub mod pivot_discovery;
pub mod ratio;
pub mod scoring;
pub mod seed;

pub use corpus::{Corpus, Document, TokenId, Vocabulary};
pub use error::{Error, Result};
pub use ratio::Ratio;
