//! Output files: atomic writes, CSV tables and run metadata.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use synprob::io::{write_atomic, write_json};
use synprob::{Error, Result};

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Serializes rows under a single header and writes the table atomically.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::InvalidParameter(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    write_atomic(path, &bytes)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Provenance record written next to a command's outputs.
#[derive(Serialize)]
pub struct RunMetadata<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    /// SHA-256 of the config plus every input file it names.
    pub config_sha256: String,
    pub inputs: Vec<(PathBuf, String)>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

pub struct Run<C: Serialize> {
    command: &'static str,
    config: C,
    inputs: Vec<(PathBuf, String)>,
    started_at: String,
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl<C: Serialize> Run<C> {
    /// Hashes the inputs up front so a missing file fails before any work.
    pub fn start(command: &'static str, config: C, inputs: &[&Path], out_dir: &Path) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.to_path_buf(), sha256_file(p)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Run {
            command,
            config,
            inputs,
            started_at: now(),
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.outputs.push(rel.to_path_buf());
    }

    pub fn finish(self) -> Result<()> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for (p, digest) in &self.inputs {
            h.update(p.to_string_lossy().as_bytes());
            h.update(digest.as_bytes());
        }
        let meta = RunMetadata {
            tool: "synprob",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_sha256: hex::encode(h.finalize()),
            config: self.config,
            inputs: self.inputs,
            started_at: self.started_at,
            finished_at: now(),
            outputs: self.outputs,
        };
        write_json(&self.out_dir.join("run_metadata.json"), &meta)
    }
}
