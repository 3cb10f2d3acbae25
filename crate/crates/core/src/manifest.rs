//! Run manifests: what a stage read, wrote and was configured with.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    /// Digest of a file, or of every file below a directory in sorted path
    /// order (each path and content hashed together).
    pub fn of(path: &Path) -> Result<FileDigest, ManifestError> {
        let meta = std::fs::metadata(path).map_err(io_err(path))?;
        if meta.is_dir() {
            let mut files = Vec::new();
            collect_files(path, &mut files)?;
            files.sort();
            let mut buf = Vec::new();
            let mut bytes = 0;
            for f in &files {
                let data = std::fs::read(f).map_err(io_err(f))?;
                bytes += data.len() as u64;
                let rel = f.strip_prefix(path).unwrap_or(f).to_string_lossy().replace('\\', "/");
                buf.extend_from_slice(rel.as_bytes());
                buf.push(0);
                buf.extend_from_slice(sha256_hex(&data).as_bytes());
                buf.push(b'\n');
            }
            return Ok(FileDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&buf),
                bytes,
            });
        }
        let data = std::fs::read(path).map_err(io_err(path))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ManifestError> {
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Endpoints, model ids and similar facts for stages that are not
    /// bit-reproducible.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| ManifestError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, json + "\n").map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<RunManifest, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ManifestError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Output digests with paths, for comparing reruns.
    pub fn output_digests(&self) -> Vec<(&str, &str)> {
        self.outputs.iter().map(|d| (d.path.as_str(), d.sha256.as_str())).collect()
    }
}
