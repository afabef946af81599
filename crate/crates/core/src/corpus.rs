//! Streaming, length filtering and sampling of web-corpus documents.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::MultiGzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gateway::Gateway;

/// One candidate response document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: String,
    pub token_estimate: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub read_count: usize,
    pub kept_count: usize,
    pub dropped_too_long: usize,
    pub dropped_empty: usize,
    /// Lines that were not parseable records; not part of `read_count`.
    pub malformed: usize,
}

impl IngestStats {
    pub fn is_balanced(&self) -> bool {
        self.read_count == self.kept_count + self.dropped_too_long + self.dropped_empty
    }
}

/// Token counting strategy.
#[derive(Clone)]
pub enum Estimator {
    /// Number of maximal non-whitespace runs.
    Whitespace,
    /// `ceil(bytes / 4)`.
    Bytes4,
    /// Exact counts from a tokenization endpoint.
    Remote(Arc<Gateway>),
}

impl std::fmt::Debug for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl Estimator {
    pub const IDS: [&'static str; 3] = ["whitespace", "bytes4", "remote"];

    /// Resolves a configured estimator id; `remote` needs a tokenizer gateway.
    pub fn from_id(id: &str, remote: Option<Arc<Gateway>>) -> Result<Self> {
        match id {
            "whitespace" => Ok(Estimator::Whitespace),
            "bytes4" => Ok(Estimator::Bytes4),
            "remote" => remote.map(Estimator::Remote).ok_or_else(|| {
                Error::Config("estimator `remote` requires a `tokenizer` endpoint".into())
            }),
            other => Err(Error::Config(format!(
                "unknown token estimator `{other}` (expected one of {})",
                Self::IDS.join(", ")
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::Whitespace => "whitespace",
            Estimator::Bytes4 => "bytes4",
            Estimator::Remote(_) => "remote",
        }
    }

    pub fn estimate(&self, text: &str) -> Result<usize> {
        match self {
            Estimator::Whitespace => Ok(text.split_whitespace().count()),
            Estimator::Bytes4 => Ok(text.len().div_ceil(4)),
            Estimator::Remote(gateway) => gateway.count_tokens(text),
        }
    }
}

pub fn estimate_tokens(text: &str, estimator: &Estimator) -> Result<usize> {
    estimator.estimate(text)
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub text_field: String,
    pub id_field: String,
    /// Promote malformed lines to fatal errors.
    pub strict: bool,
    pub estimator: Estimator,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            text_field: "text".into(),
            id_field: "id".into(),
            strict: false,
            estimator: Estimator::Bytes4,
        }
    }
}

/// Lazily yields the documents of one line-delimited record file.
pub struct DocumentStream {
    lines: std::io::Lines<Box<dyn BufRead>>,
    path: PathBuf,
    file_name: String,
    source: String,
    line_no: usize,
    options: StreamOptions,
    stats: IngestStats,
}

impl DocumentStream {
    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    fn parse_line(&mut self, line: &str) -> std::result::Result<Option<Document>, String> {
        let record: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let object = record.as_object().ok_or("record is not an object")?;
        let text = match object.get(&self.options.text_field) {
            Some(Value::String(text)) => text,
            Some(_) => return Err(format!("field `{}` is not a string", self.options.text_field)),
            None => return Err(format!("missing field `{}`", self.options.text_field)),
        };
        self.stats.read_count += 1;
        if text.trim().is_empty() {
            self.stats.dropped_empty += 1;
            return Ok(None);
        }
        let id = match object.get(&self.options.id_field) {
            Some(Value::String(id)) if !id.is_empty() => id.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("{}:{}", self.file_name, self.line_no),
        };
        Ok(Some(Document {
            id,
            text: text.clone(),
            source: self.source.clone(),
            token_estimate: 0,
        }))
    }
}

impl Iterator for DocumentStream {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Ok(Some(mut doc)) => {
                    return Some(self.options.estimator.estimate(&doc.text).map(|n| {
                        doc.token_estimate = n;
                        self.stats.kept_count += 1;
                        doc
                    }));
                }
                Ok(None) => continue,
                Err(reason) => {
                    if self.options.strict {
                        return Some(Err(Error::MalformedRecord {
                            path: self.path.clone(),
                            line: self.line_no,
                            reason,
                        }));
                    }
                    tracing::warn!(path = %self.path.display(), line = self.line_no, %reason, "skipping malformed record");
                    self.stats.malformed += 1;
                }
            }
        }
    }
}

/// Opens one corpus file (gzip when the name ends in `.gz`).
pub fn stream_documents(path: &Path, source_label: &str, options: StreamOptions) -> Result<DocumentStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn BufRead> = if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(DocumentStream {
        lines: reader.lines(),
        path: path.to_path_buf(),
        file_name,
        source: source_label.to_string(),
        line_no: 0,
        options,
        stats: IngestStats::default(),
    })
}

/// A corpus path is either one file or a directory of `.jsonl`/`.json`/`.gz`
/// files, visited in name order.
pub fn corpus_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        if p.is_file() && (name.ends_with(".jsonl") || name.ends_with(".json") || name.ends_with(".gz")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Keeps documents with `token_estimate <= max_tokens`, in order.
pub fn filter_by_length(docs: impl IntoIterator<Item = Document>, max_tokens: usize) -> (Vec<Document>, IngestStats) {
    let mut stats = IngestStats::default();
    let mut kept = Vec::new();
    for doc in docs {
        stats.read_count += 1;
        if doc.token_estimate <= max_tokens {
            stats.kept_count += 1;
            kept.push(doc);
        } else {
            stats.dropped_too_long += 1;
        }
    }
    (kept, stats)
}

/// Uniform sample of `n` documents without replacement (single-pass
/// reservoir), returned in ascending id order.
pub fn sample_documents(docs: impl IntoIterator<Item = Document>, n: usize, seed: u64) -> Vec<Document> {
    let mut sample = reservoir(docs, n, seed);
    sample.sort_by(|a, b| a.id.cmp(&b.id));
    sample
}

/// Algorithm R over any stream; output is in reservoir order.
pub(crate) fn reservoir<T>(items: impl IntoIterator<Item = T>, n: usize, seed: u64) -> Vec<T> {
    assert!(n >= 1, "sample size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir = Vec::with_capacity(n);
    for (seen, item) in items.into_iter().enumerate() {
        if seen < n {
            reservoir.push(item);
        } else {
            let slot = rng.gen_range(0..=seen);
            if slot < n {
                reservoir[slot] = item;
            }
        }
    }
    reservoir
}

/// Streams every corpus file, estimates tokens, and applies the length
/// filter. Stats cover every record read.
pub fn ingest_corpus(path: &Path, source_label: &str, options: &StreamOptions, max_tokens: usize) -> Result<(Vec<Document>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut docs = Vec::new();
    for file in corpus_files(path)? {
        let mut stream = stream_documents(&file, source_label, options.clone())?;
        for doc in stream.by_ref() {
            docs.push(doc?);
        }
        let s = stream.stats();
        stats.read_count += s.read_count;
        stats.dropped_empty += s.dropped_empty;
        stats.malformed += s.malformed;
    }
    let (kept, filtered) = filter_by_length(docs, max_tokens);
    stats.kept_count = filtered.kept_count;
    stats.dropped_too_long = filtered.dropped_too_long;
    Ok((kept, stats))
}
