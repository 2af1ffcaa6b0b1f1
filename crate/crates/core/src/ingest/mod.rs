//! Load extracted text files, normalize their structure and drop unusable documents.

mod filter;
mod normalize;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

pub use filter::{
    alnum_ratio, filter_content, printable_ratio, ContentFilter, FilterDecision, FilterPolicy,
    PolicyError, EMAIL_PATTERN, ID_PATTERN, PHONE_PATTERN,
};
pub use normalize::{
    normalize_markdown, normalize_markdown_with, BibEntry, Bibliography, DropReason,
    NormalizationReport,
};

use crate::model::{Corpus, Document, Source, Tokenizer, WhitespaceTokenizer};

pub const SIDECAR_SUFFIX: &str = ".meta.json";
pub const EXTENSIONS: [&str; 2] = ["md", "txt"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read `{path}`: {source}")]
    Root {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("walking `{path}`: {source}")]
    Walk {
        path: PathBuf,
        source: walkdir::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loaded {
    pub corpus: Corpus,
    pub skipped: Vec<SkippedFile>,
}

fn is_text_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    !name.ends_with(SIDECAR_SUFFIX)
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Sidecar values as strings; non-string JSON values keep their JSON text.
fn read_sidecar(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(SIDECAR_SUFFIX);
    let sidecar = PathBuf::from(sidecar);
    if !sidecar.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(&sidecar).map_err(|e| format!("sidecar: {e}"))?;
    let value: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| format!("sidecar: {e}"))?;
    Ok(value
        .into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => (k, s),
            other => (k, other.to_string()),
        })
        .collect())
}

/// One document per `.md`/`.txt` file under `root`, ordered by relative
/// path. Files that are not UTF-8, or whose sidecar is unreadable, are
/// skipped and logged.
pub fn ingest_directory(
    root: &Path,
    source: Source,
    subdomain: &str,
) -> Result<Loaded, IngestError> {
    ingest_directory_with(root, source, subdomain, &WhitespaceTokenizer)
}

pub fn ingest_directory_with(
    root: &Path,
    source: Source,
    subdomain: &str,
    tokenizer: &dyn Tokenizer,
) -> Result<Loaded, IngestError> {
    std::fs::read_dir(root).map_err(|source| IngestError::Root {
        path: root.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|source| IngestError::Walk {
            path: root.to_path_buf(),
            source,
        })?;
        if entry.file_type().is_file() && is_text_file(entry.path()) {
            paths.push(entry.into_path());
        }
    }
    paths.sort_by_key(|p| relative_id(root, p));
    let mut documents = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let id = relative_id(root, &path);
        let loaded = std::fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|bytes| String::from_utf8(bytes).map_err(|_| "not valid UTF-8".to_string()))
            .and_then(|text| read_sidecar(&path).map(|meta| (text, meta)));
        match loaded {
            Ok((text, meta)) => {
                let mut doc = Document::new(id, source, subdomain, text, tokenizer);
                doc.meta = meta;
                documents.push(doc);
            }
            Err(reason) => {
                log::warn!("skipping {id}: {reason}");
                skipped.push(SkippedFile { path: id, reason });
            }
        }
    }
    Ok(Loaded {
        corpus: Corpus::new(documents),
        skipped,
    })
}

/// Per-document outcome of [`prepare`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub doc_id: String,
    #[serde(flatten)]
    pub report: NormalizationReport,
}

/// Bibliography stored in a document's `bibliography` sidecar entry.
pub fn document_bibliography(doc: &Document) -> Option<Bibliography> {
    serde_json::from_str(doc.meta.get("bibliography")?).ok()
}

/// Normalize and filter every document in parallel, keeping input order.
/// Returns the kept documents and one report row per input document.
pub fn prepare(
    corpus: &Corpus,
    filter: &ContentFilter,
    tokenizer: &dyn Tokenizer,
) -> (Corpus, Vec<ReportRow>) {
    let results: Vec<(Option<Document>, ReportRow)> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let bib = document_bibliography(doc);
            let (text, mut report) = normalize_markdown_with(&doc.text, bib.as_ref());
            let decision = filter.check(&text);
            let row = |report| ReportRow {
                doc_id: doc.id.clone(),
                report,
            };
            match decision {
                FilterDecision::Drop(reason) => {
                    report.dropped_reason = Some(reason);
                    (None, row(report))
                }
                FilterDecision::Keep => {
                    let mut kept = doc.clone();
                    kept.text = text;
                    kept.recount_tokens(tokenizer);
                    (Some(kept), row(report))
                }
            }
        })
        .collect();
    let (docs, rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    (Corpus::new(docs.into_iter().flatten().collect()), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = ingest_directory(dir.path(), Source::Oap, "grid").unwrap();
        assert!(loaded.corpus.is_empty());
    }

    #[test]
    fn ordered_by_path_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.md"), "second").unwrap();
        std::fs::write(dir.path().join("a.md"), "first").unwrap();
        std::fs::write(
            dir.path().join("a.md.meta.json"),
            r#"{"title": "A", "year": 2021}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("skip.pdf"), "x").unwrap();
        let loaded = ingest_directory(dir.path(), Source::Oap, "grid").unwrap();
        let ids: Vec<&str> = loaded
            .corpus
            .documents
            .iter()
            .map(|d| d.id.as_str())
            .collect();
        assert_eq!(ids, ["a.md", "b.md"]);
        assert_eq!(loaded.corpus.documents[0].meta["year"], "2021");
    }

    #[test]
    fn binary_file_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ok.txt"), "fine").unwrap();
        std::fs::write(dir.path().join("bad.txt"), [0xff, 0xfe, 0x00, 0x80]).unwrap();
        let loaded = ingest_directory(dir.path(), Source::Sp, "grid").unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.skipped[0].path, "bad.txt");
    }

    #[test]
    fn missing_root_is_fatal() {
        assert!(ingest_directory(Path::new("/nonexistent/xyz"), Source::Sp, "grid").is_err());
    }
}
