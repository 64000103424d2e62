use std::path::Path;

use anyhow::{Context, Result};
use pivotscope::curation::RankingKey;
use serde::Deserialize;

use crate::output::open;

/// Curation settings file (TOML). Command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub budget: Option<usize>,
    pub ranking_key: Option<RankingKey>,
    pub min_docs: Option<u64>,
    pub degree_cut: Option<f64>,
    pub theta_factor: Option<f64>,
    /// Fixed threshold rate; replaces the factor-derived one.
    pub theta: Option<f64>,
    pub target_multilingual_fraction: Option<f64>,
    pub chunk_size: Option<usize>,
    pub chunk_step: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let mut text = String::new();
        std::io::Read::read_to_string(&mut open(path)?, &mut text)?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
