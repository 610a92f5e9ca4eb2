//! Run directories.
//!
//! A run directory holds a `.partial` marker from creation until
//! [`RunDir::finish`] writes `run.txt`:
//!
//! ```text
//! # glomseg-run v1
//! command <name>
//! seed <u64>
//! [config]
//! <key = value, every schema key>
//! [artifacts]
//! <name>\t<path>
//! [metrics]
//! <name>\t<value>
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::io::atomic_write;

pub const PARTIAL_MARKER: &str = ".partial";
pub const RUN_MANIFEST: &str = "run.txt";

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    command: String,
    artifacts: Vec<(String, PathBuf)>,
    metrics: Vec<(String, String)>,
}

impl RunDir {
    /// `<run.out>/<run.name or command>`, created with its marker.
    pub fn create(config: &RunConfig, command: &str) -> Result<Self> {
        let name = match config.get("run.name") {
            "" => command,
            n => n,
        };
        let path = config.path("run.out").unwrap_or_default().join(name);
        fs::create_dir_all(&path).map_err(|e| PipelineError::io(&path, e))?;
        let _ = fs::remove_file(path.join(RUN_MANIFEST));
        atomic_write(&path.join(PARTIAL_MARKER), format!("{command}\n").as_bytes())?;
        Ok(RunDir { path, command: command.to_string(), artifacts: Vec::new(), metrics: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    /// Write `bytes` to `rel` inside the run and record it as an artifact.
    pub fn write(&mut self, name: &str, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.join(rel);
        atomic_write(&path, bytes)?;
        self.record(name, path.clone());
        Ok(path)
    }

    /// Record a file written elsewhere.
    pub fn record(&mut self, name: &str, path: PathBuf) {
        self.artifacts.retain(|(n, _)| n != name);
        self.artifacts.push((name.to_string(), path));
    }

    pub fn metric(&mut self, name: &str, value: impl ToString) {
        self.metrics.push((name.to_string(), value.to_string()));
    }

    pub fn artifacts(&self) -> &[(String, PathBuf)] {
        &self.artifacts
    }

    /// Write the run manifest and drop the marker. Returns every artifact
    /// path, the manifest last.
    pub fn finish(mut self, config: &RunConfig) -> Result<Vec<PathBuf>> {
        let mut text = format!("# glomseg-run v1\ncommand {}\nseed {}\n[config]\n", self.command, config.get("run.seed"));
        text.push_str(&config.echo());
        text.push_str("[artifacts]\n");
        for (n, p) in &self.artifacts {
            text.push_str(&format!("{n}\t{}\n", p.display()));
        }
        text.push_str("[metrics]\n");
        for (n, v) in &self.metrics {
            text.push_str(&format!("{n}\t{v}\n"));
        }
        let manifest = self.join(RUN_MANIFEST);
        atomic_write(&manifest, text.as_bytes())?;
        let marker = self.join(PARTIAL_MARKER);
        fs::remove_file(&marker).map_err(|e| PipelineError::io(&marker, e))?;
        let mut paths: Vec<PathBuf> = self.artifacts.drain(..).map(|(_, p)| p).collect();
        paths.push(manifest);
        Ok(paths)
    }
}

/// `[metrics]` section of a run manifest.
pub fn read_metrics(text: &str) -> Vec<(String, String)> {
    section(text, "[metrics]")
}

/// `[artifacts]` section of a run manifest.
pub fn read_artifacts(text: &str) -> Vec<(String, String)> {
    section(text, "[artifacts]")
}

fn section(text: &str, header: &str) -> Vec<(String, String)> {
    text.lines()
        .skip_while(|l| *l != header)
        .skip(1)
        .take_while(|l| !l.starts_with('['))
        .filter_map(|l| l.split_once('\t'))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}
