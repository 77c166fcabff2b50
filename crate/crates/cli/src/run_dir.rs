//! Output layout of a run directory and its file manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const POOL_FILE: &str = "generated_evidence.jsonl";
pub const CACHE_FILE: &str = "embeddings.emb";
pub const GENERATION_LOG: &str = "generation_log.jsonl";
pub const POLLUTED_DIR: &str = "polluted";
pub const STATS_CSV: &str = "stats.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const RERANK_CSV: &str = "rerank.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const EMBED_FAILURES: &str = "embed_failures.jsonl";
pub const MANIFEST: &str = "run_manifest.json";

/// Files produced per command, relative to the run directory when inside it.
#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    files: BTreeMap<String, Vec<String>>,
}

pub struct RunDir {
    root: PathBuf,
    produced: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("cannot create run directory {}", root.display()))?;
        Ok(RunDir { root: root.to_path_buf(), produced: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(name);
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir)
    }

    pub fn record(&mut self, path: impl Into<PathBuf>) {
        self.produced.push(path.into());
    }

    /// Writes `contents` under the run directory and records it.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(path.clone());
        Ok(path)
    }

    /// Merges this command's files into `run_manifest.json`.
    pub fn finish(self, command: &str) -> Result<()> {
        let path = self.path(MANIFEST);
        let mut manifest: Manifest = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).with_context(|| format!("corrupt {}", path.display()))?,
            Err(_) => Manifest::default(),
        };
        let mut files: Vec<String> = self
            .produced
            .iter()
            .map(|p| p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().into_owned())
            .collect();
        files.sort();
        files.dedup();
        manifest.files.insert(command.to_string(), files);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
