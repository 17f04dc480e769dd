//! Output directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nodewise_loreg::io::{write_masked_matrix_file, write_matrix_file};
use nodewise_loreg::rng::StreamKey;
use nodewise_loreg::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| {
        Error::InvalidConfig(format!("{} line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, `/` separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance of a run directory: inputs, seeds and a checksum for every file written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Checksums of the input files, keyed by role.
    pub inputs: Vec<(String, String)>,
    /// Streams that generated each replication's data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub streams: Vec<StreamKey>,
    pub details: serde_json::Value,
    pub files: Vec<FileEntry>,
}

/// A directory that collects outputs and finishes with a manifest.
pub struct RunDir {
    root: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                started_unix: now_unix(),
                finished_unix: 0,
                inputs: Vec::new(),
                streams: Vec::new(),
                details: serde_json::Value::Null,
                files: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        self.manifest.inputs.push((role.into(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn set_streams(&mut self, streams: Vec<StreamKey>) {
        self.manifest.streams = streams;
    }

    pub fn set_details(&mut self, details: serde_json::Value) {
        self.manifest.details = details;
    }

    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        path_in(&self.root, rel)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.path(rel)?, value)
    }

    pub fn write_matrix(&self, rel: &str, m: &Matrix) -> Result<()> {
        write_matrix_file(&self.path(rel)?, m)
    }

    pub fn write_masked(&self, rel: &str, m: &Matrix, defined: &[bool]) -> Result<()> {
        write_masked_matrix_file(&self.path(rel)?, m, defined)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel)?;
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    /// Checksums every file under the directory and writes the manifest.
    pub fn finish(mut self) -> Result<Manifest> {
        let mut files = Vec::new();
        collect_files(&self.root, &self.root, &mut files)?;
        files.retain(|f| f.path != MANIFEST);
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.manifest.files = files;
        self.manifest.finished_unix = now_unix();
        write_json(&self.root.join(MANIFEST), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// `root/rel`, creating parent directories.
pub fn path_in(root: &Path, rel: &str) -> Result<PathBuf> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let rel = path.strip_prefix(root).expect("walked from root");
            let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(FileEntry {
                path: rel.join("/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
    }
    Ok(())
}

/// Rows of `header` followed by data rows, comma separated.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
