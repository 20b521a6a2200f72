//! Output files: CSV and JSON stamped with format_version and the config hash,
//! plus manifest.json. Wall-clock data goes to run.log only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv row {row} has {got} columns, header has {want}")]
    Ragged { row: usize, got: usize, want: usize },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Hash of the canonical TOML form with the output directory cleared, so equivalent
/// configs hash alike wherever they write.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output.dir = Default::default();
    sha256_hex(c.to_toml().as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub command: String,
    pub files: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    format_version: u32,
    config_hash: &'a str,
    data: &'a T,
}

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    command: String,
    files: Vec<ManifestEntry>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path, cfg: &RunConfig, command: &str) -> Result<Self, IoError> {
        fs::create_dir_all(dir).map_err(|source| IoError::Fs { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), hash: config_hash(cfg), command: command.to_string(), files: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| IoError::Fs { path, source })?;
        self.files.retain(|f| f.name != name);
        self.files.push(ManifestEntry { name: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), IoError> {
        let mut text = serde_json::to_string_pretty(&Stamped { format_version: FORMAT_VERSION, config_hash: &self.hash, data })?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
        let mut text = format!("# format_version={FORMAT_VERSION} config_hash={}\n{}\n", self.hash, header.join(","));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(IoError::Ragged { row: i, got: row.len(), want: header.len() });
            }
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        self.put(name, text.as_bytes())
    }

    /// Writes manifest.json and the run log; returns the manifest.
    pub fn finish(self) -> Result<Manifest, IoError> {
        let mut files = self.files;
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest { format_version: FORMAT_VERSION, config_hash: self.hash, command: self.command, files };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|source| IoError::Fs { path, source })?;
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let log = format!("command={}\nfinished_unix={unix}\nelapsed_s={:.3}\n", manifest.command, self.started.elapsed().as_secs_f64());
        let path = self.dir.join("run.log");
        fs::write(&path, log).map_err(|source| IoError::Fs { path, source })?;
        Ok(manifest)
    }
}
