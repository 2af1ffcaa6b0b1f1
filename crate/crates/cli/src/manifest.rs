//! Run manifests, file digests and atomic output writes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    #[serde(rename = "in")]
    pub input: usize,
    pub out: usize,
    pub dropped: usize,
    pub parked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: Uuid,
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: Value,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub counts: Counts,
    /// True when the stage was skipped because an identical run had already completed.
    pub noop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<String>,
}

fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 of a file, or of the sorted `(relative path, file digest)` list of a directory.
pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let io = |e: std::io::Error| CliError::io(path.display(), e);
    let sha256 = if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files).map_err(io)?;
        let mut entries: Vec<(String, String)> = files
            .iter()
            .map(|f| {
                let rel = f.strip_prefix(path).unwrap_or(f);
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                Ok((rel, hash_file(f)?))
            })
            .collect::<std::io::Result<_>>()
            .map_err(io)?;
        entries.sort();
        let mut h = Sha256::new();
        for (rel, d) in entries {
            h.update(rel.as_bytes());
            h.update([0]);
            h.update(d.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    } else {
        hash_file(path).map_err(io)?
    };
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256,
    })
}

/// Write `bytes` to a temporary file beside `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(parent).map_err(|e| CliError::io(parent.display(), e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(path.display(), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(path.display(), e.error))?;
    Ok(())
}

/// Append-only JSONL log of manifests.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub path: PathBuf,
}

impl RunLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    /// The default log beside an output file.
    pub fn beside(output: &Path) -> Self {
        let parent = output
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::new(parent.join("run_log.jsonl"))
    }

    pub fn append(&self, m: &RunManifest) -> Result<(), CliError> {
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
        }
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CliError::io(self.path.display(), e))?;
        let line = serde_json::to_string(m).expect("manifest serializes");
        writeln!(f, "{line}").map_err(|e| CliError::io(self.path.display(), e))
    }

    pub fn read(&self) -> Result<Vec<RunManifest>, CliError> {
        let f = match fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(CliError::io(self.path.display(), e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| CliError::io(self.path.display(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let m = serde_json::from_str(&line)
                .map_err(|e| CliError::io(format!("{}:{}", self.path.display(), i + 1), e))?;
            out.push(m);
        }
        Ok(out)
    }

    /// The latest completed run of `stage` with the same inputs and config
    /// whose outputs are still on disk unchanged.
    pub fn completed(
        &self,
        stage: &str,
        inputs: &[FileDigest],
        config: &Value,
        outputs: &[PathBuf],
    ) -> Result<Option<RunManifest>, CliError> {
        let wanted: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
        for m in self.read()?.into_iter().rev() {
            if m.stage != stage || m.inputs != inputs || &m.config != config {
                continue;
            }
            if m.outputs.iter().map(|o| o.path.clone()).collect::<Vec<_>>() != wanted {
                continue;
            }
            let intact = m.outputs.iter().all(|o| {
                let p = Path::new(&o.path);
                p.exists() && digest(p).is_ok_and(|d| d.sha256 == o.sha256)
            });
            if intact {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }
}
