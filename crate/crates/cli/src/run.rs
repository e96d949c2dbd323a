//! Output directory bookkeeping: every artifact goes through [`Run`], which
//! records its checksum for the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lqg_core::gmc::AtomicMeasure;
use lqg_core::io::{self, CsvTable};
use lqg_core::RngStream;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

/// Headline result of an experiment, written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// The quantity under test.
    pub anchor: &'static str,
    pub estimator: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n_replicas: usize,
    /// Verdict of the built-in check, when the experiment has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    pub diagnostics: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub workers: usize,
    pub files: Vec<FileEntry>,
    pub wall_clock_seconds: f64,
    pub summary: Summary,
}

pub struct Run {
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    out: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl Run {
    pub fn new(command: &'static str, seed: u64, workers: usize, out: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&out)?;
        Ok(Self {
            command,
            seed,
            workers,
            out,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn stream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, id)
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> CliResult<()> {
        table.write(self.out.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        io::write_json(self.out.join(name), value)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// `<stem>.csv` with its `<stem>.json` sidecar.
    pub fn measure(&mut self, stem: &str, m: &AtomicMeasure) -> CliResult<()> {
        m.write(self.out.join(format!("{stem}.csv")))?;
        self.files.push(format!("{stem}.csv"));
        self.files.push(format!("{stem}.json"));
        Ok(())
    }

    /// Writes `summary.json` and `manifest.json`.
    pub fn finish(mut self, config: Value, summary: Summary) -> CliResult<Manifest> {
        self.json("summary.json", &summary)?;
        let canonical = serde_json::to_string(&serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "config": config,
        }))?;
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.out.join(name))?;
            files.push(FileEntry {
                name: name.clone(),
                sha256: hex(&Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            command: self.command.to_string(),
            config_hash: hex(&Sha256::digest(canonical.as_bytes())),
            config,
            seed: self.seed,
            workers: self.workers,
            files,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            summary,
        };
        io::write_json(self.out.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
