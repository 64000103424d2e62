use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use sha2::{Digest, Sha256};

/// The effective parameters of one invocation. Paths, worker counts and
/// shard sizes are left out so the hash only changes with the results.
pub struct Provenance {
    command: &'static str,
    params: BTreeMap<&'static str, String>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Provenance {
            command,
            params: BTreeMap::new(),
        }
    }

    pub fn set(mut self, key: &'static str, value: impl Display) -> Self {
        self.params.insert(key, value.to_string());
        self
    }

    /// `command=<name>` then `key=value` lines in key order, one per line.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        format!("{digest:x}")[..16].to_owned()
    }

    pub fn csv_comment(&self) -> String {
        format!("# pivotscope {} config={}\n", self.command, self.hash())
    }

    pub fn jsonl_record(&self) -> String {
        let record = serde_json::json!({
            "pivotscope": { "command": self.command, "config": self.hash() }
        });
        format!("{record}\n")
    }
}

/// Writes through a temporary file in the target directory, renamed into
/// place only once `fill` succeeds.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

pub fn f6(x: f64) -> String {
    format!("{x:.6}")
}
