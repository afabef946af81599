//! Seed preparation and assembly of tagged fine-tuning datasets.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{reservoir, Estimator};
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::stages::{CandidatePair, Status};

/// Appended to instructions generated from web documents.
pub const WEB_SEARCH_TAG: &str = "Answer with knowledge from web search.";
/// Appended to seed instructions.
pub const ASSISTANT_TAG: &str = "Answer in the style of an AI Assistant.";

pub const DEFAULT_SEED_LIMIT: usize = 3200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPair {
    pub instruction: String,
    pub response: String,
    pub language: String,
    pub rank: i64,
}

/// One message of a conversation tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub text: String,
    #[serde(alias = "language")]
    pub lang: String,
    #[serde(default)]
    pub rank: Option<i64>,
}

/// Root prompt plus its ranked first-turn replies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTree {
    pub prompt: Message,
    pub replies: Vec<Message>,
}

impl ConversationTree {
    /// Accepts the flat `{prompt, replies}` shape or the nested Open
    /// Assistant export shape, where replies hang off `prompt.replies`.
    pub fn from_json(value: Value) -> std::result::Result<Self, String> {
        if value.get("replies").is_some() {
            return serde_json::from_value(value).map_err(|e| e.to_string());
        }
        let prompt = value.get("prompt").ok_or("missing `prompt`")?;
        let replies = prompt
            .get("replies")
            .and_then(Value::as_array)
            .ok_or("missing `replies`")?
            .iter()
            .map(|reply| serde_json::from_value::<Message>(reply.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let prompt: Message = serde_json::from_value(prompt.clone()).map_err(|e| e.to_string())?;
        Ok(Self { prompt, replies })
    }

    /// The rank-0 English assistant reply, if the tree has one.
    fn seed_pair(&self) -> Option<SeedPair> {
        let best = self
            .replies
            .iter()
            .find(|m| m.rank == Some(0) && m.role == "assistant")?;
        if best.lang != "en" || best.text.trim().is_empty() || self.prompt.text.trim().is_empty() {
            return None;
        }
        Some(SeedPair {
            instruction: self.prompt.text.clone(),
            response: best.text.clone(),
            language: best.lang.clone(),
            rank: 0,
        })
    }
}

/// At most `limit` seed pairs, in input order.
pub fn prepare_seed_pairs(trees: impl IntoIterator<Item = ConversationTree>, limit: usize) -> Vec<SeedPair> {
    trees
        .into_iter()
        .filter_map(|tree| tree.seed_pair())
        .take(limit)
        .collect()
}

/// Reads line-delimited conversation trees; malformed lines are skipped.
pub fn load_seed_pairs(path: &Path, limit: usize) -> Result<Vec<SeedPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut trees = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(ConversationTree::from_json);
        match parsed {
            Ok(tree) => trees.push(tree),
            Err(reason) => {
                tracing::warn!(path = %path.display(), line = index + 1, %reason, "skipping malformed conversation tree")
            }
        }
    }
    Ok(prepare_seed_pairs(trees, limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// instruction → response
    Forward,
    /// response → instruction
    Backward,
}

#[derive(Serialize)]
struct DirectionRecord<'a> {
    input: &'a str,
    target: &'a str,
}

pub fn emit_direction_training(pairs: &[SeedPair], direction: Direction, path: &Path) -> Result<usize> {
    if pairs.is_empty() {
        return Err(Error::Precondition("no seed pairs to write".into()));
    }
    let records: Vec<_> = pairs
        .iter()
        .map(|p| match direction {
            Direction::Forward => DirectionRecord {
                input: &p.instruction,
                target: &p.response,
            },
            Direction::Backward => DirectionRecord {
                input: &p.response,
                target: &p.instruction,
            },
        })
        .collect();
    write_jsonl(path, &records)
}

/// Splits scored pairs into score-5 keepers and the rest, the latter marked
/// `filtered_out`.
pub fn partition_score5(pairs: impl IntoIterator<Item = CandidatePair>) -> (Vec<CandidatePair>, Vec<CandidatePair>) {
    let (kept, mut dropped): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.score == Some(5));
    for pair in &mut dropped {
        pair.status = Status::FilteredOut;
    }
    (kept, dropped)
}

pub fn filter_score5(pairs: impl IntoIterator<Item = CandidatePair>) -> Vec<CandidatePair> {
    partition_score5(pairs).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    SeedAssistant,
    WebSearch,
}

impl SourceTag {
    pub fn sentence(self) -> &'static str {
        match self {
            SourceTag::SeedAssistant => ASSISTANT_TAG,
            SourceTag::WebSearch => WEB_SEARCH_TAG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseField {
    Initial,
    Rewritten,
    Distilled,
}

impl ResponseField {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseField::Initial => "initial",
            ResponseField::Rewritten => "rewritten",
            ResponseField::Distilled => "distilled",
        }
    }

    pub fn of(self, pair: &CandidatePair) -> Option<&str> {
        match self {
            ResponseField::Initial => Some(pair.response_initial.as_str()),
            ResponseField::Rewritten => pair.response_rewritten.as_deref(),
            ResponseField::Distilled => pair.response_distilled.as_deref(),
        }
        .filter(|r| !r.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: Option<String>,
    pub variant: String,
    pub score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instruction: String,
    pub response: String,
    pub source_tag: SourceTag,
    pub provenance: Provenance,
}

impl DatasetRecord {
    pub fn has_valid_tag(&self) -> bool {
        self.instruction.ends_with(self.source_tag.sentence())
    }
}

pub fn tag_instruction(instruction: &str, tag: SourceTag) -> String {
    format!("{instruction}\n{}", tag.sentence())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    /// Recorded in each generated record's provenance, e.g. `filtering+rewriting`.
    pub variant: String,
    /// Missing response fields become fatal instead of skipped.
    pub strict: bool,
}

/// Seeds first in input order, then pairs by ascending `doc_id`.
pub fn build_finetune_dataset(
    pairs: &[CandidatePair],
    seeds: &[SeedPair],
    field: ResponseField,
    options: &BuildOptions,
) -> Result<Vec<DatasetRecord>> {
    let mut records: Vec<DatasetRecord> = seeds
        .iter()
        .map(|seed| DatasetRecord {
            instruction: tag_instruction(&seed.instruction, SourceTag::SeedAssistant),
            response: seed.response.clone(),
            source_tag: SourceTag::SeedAssistant,
            provenance: Provenance {
                doc_id: None,
                variant: "seed".into(),
                score: None,
            },
        })
        .collect();

    let mut ordered: Vec<&CandidatePair> = pairs.iter().collect();
    ordered.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for pair in ordered {
        let instruction = pair.instruction.as_deref().filter(|i| !i.trim().is_empty());
        let (Some(instruction), Some(response)) = (instruction, field.of(pair)) else {
            let reason = format!("{}: no instruction or {} response", pair.doc_id, field.as_str());
            if options.strict {
                return Err(Error::Precondition(reason));
            }
            tracing::warn!(%reason, "skipping pair");
            continue;
        };
        records.push(DatasetRecord {
            instruction: tag_instruction(instruction, SourceTag::WebSearch),
            response: response.to_string(),
            source_tag: SourceTag::WebSearch,
            provenance: Provenance {
                doc_id: Some(pair.doc_id.clone()),
                variant: options.variant.clone(),
                score: pair.score,
            },
        });
    }
    Ok(records)
}

/// Drops records whose instruction exceeds `max_tokens`, then samples `n`
/// of the survivors, keeping their relative order.
pub fn cap_instruction_length(
    records: Vec<DatasetRecord>,
    max_tokens: usize,
    n: usize,
    seed: u64,
    estimator: &Estimator,
) -> Result<Vec<DatasetRecord>> {
    let mut survivors = Vec::new();
    for record in records {
        if estimator.estimate(&record.instruction)? <= max_tokens {
            survivors.push(record);
        }
    }
    if survivors.len() < n {
        tracing::warn!(requested = n, available = survivors.len(), "fewer records than requested survive the length cap");
        return Ok(survivors);
    }
    let mut picked = reservoir(survivors.into_iter().enumerate(), n, seed);
    picked.sort_by_key(|(index, _)| *index);
    Ok(picked.into_iter().map(|(_, r)| r).collect())
}

pub fn export_jsonl(records: &[DatasetRecord], path: &Path) -> Result<usize> {
    write_jsonl(path, records)
}

pub fn import_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_jsonl(path)
}
