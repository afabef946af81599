//! The model-driven stages: backtranslate, score, rewrite, distill.
//!
//! Every stage function takes a [`CandidatePair`] and returns the updated
//! pair. Endpoint failures are recorded on the pair (`failure`) with its
//! status left unchanged, so the record is picked up again on resume.
//! Calling a stage on a pair that already carries the stage's result is a
//! no-op that issues no endpoint call.

mod extract;
mod prompts;

use serde::{Deserialize, Serialize};

pub use extract::{extract_rewrite, extract_score};
pub use prompts::{
    build_backtranslation_prompt, build_rewrite_prompt, build_scoring_prompt, PromptSet,
    PromptTemplate, BACKTRANSLATION_TEMPLATE, REWRITE_TEMPLATE, SCORING_TEMPLATE,
};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, LlmRequest, SamplingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ingested,
    Backtranslated,
    Scored,
    FilteredOut,
    Rewritten,
    RewriteFailed,
    Distilled,
}

impl Status {
    /// Position along the pipeline; transitions never decrease it.
    pub fn rank(self) -> u8 {
        match self {
            Status::Ingested => 0,
            Status::Backtranslated => 1,
            Status::Scored => 2,
            Status::FilteredOut => 3,
            Status::Rewritten | Status::RewriteFailed => 4,
            Status::Distilled => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ingested => "ingested",
            Status::Backtranslated => "backtranslated",
            Status::Scored => "scored",
            Status::FilteredOut => "filtered_out",
            Status::Rewritten => "rewritten",
            Status::RewriteFailed => "rewrite_failed",
            Status::Distilled => "distilled",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A (generated instruction, web response) pair as it moves through the stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub doc_id: String,
    pub instruction: Option<String>,
    pub response_initial: String,
    pub score: Option<u8>,
    pub score_raw: Option<String>,
    pub response_rewritten: Option<String>,
    pub response_distilled: Option<String>,
    pub status: Status,
    /// Last endpoint failure for the pending stage, cleared on success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl CandidatePair {
    pub fn from_document(doc: &Document) -> Self {
        Self::new(doc.id.clone(), doc.text.clone())
    }

    pub fn new(doc_id: impl Into<String>, response_initial: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            instruction: None,
            response_initial: response_initial.into(),
            score: None,
            score_raw: None,
            response_rewritten: None,
            response_distilled: None,
            status: Status::Ingested,
            failure: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    fn fail(mut self, reason: impl Into<String>) -> Self {
        self.failure = Some(reason.into());
        self
    }
}

/// Sampling parameters per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSampling {
    #[serde(default = "short_generation")]
    pub backtranslate: SamplingParams,
    #[serde(default = "short_generation")]
    pub score: SamplingParams,
    #[serde(default = "long_generation")]
    pub rewrite: SamplingParams,
    #[serde(default = "long_generation")]
    pub distill: SamplingParams,
}

fn short_generation() -> SamplingParams {
    SamplingParams::with_max_new_tokens(1024)
}

fn long_generation() -> SamplingParams {
    SamplingParams::with_max_new_tokens(2048)
}

impl Default for StageSampling {
    fn default() -> Self {
        Self {
            backtranslate: short_generation(),
            score: short_generation(),
            rewrite: long_generation(),
            distill: long_generation(),
        }
    }
}

/// Prompts and sampling shared by all stage calls of one run.
#[derive(Debug, Clone, Default)]
pub struct StageContext {
    pub prompts: PromptSet,
    pub sampling: StageSampling,
}

fn call(gateway: &Gateway, stage: &str, pair: &CandidatePair, prompt: String, params: SamplingParams) -> std::result::Result<String, String> {
    let request = LlmRequest::new(format!("{stage}:{}", pair.doc_id), prompt, params);
    let result = gateway.complete(&request);
    match (result.failed, result.completion) {
        (false, Some(text)) => Ok(text),
        _ => Err(result.failure_reason.unwrap_or_else(|| "endpoint failure".into())),
    }
}

impl StageContext {
    /// Creates the pair for `doc` and backtranslates it.
    pub fn generate_instruction(&self, doc: &Document, gateway: &Gateway) -> Result<CandidatePair> {
        self.backtranslate(CandidatePair::from_document(doc), gateway)
    }

    pub fn backtranslate(&self, pair: CandidatePair, gateway: &Gateway) -> Result<CandidatePair> {
        if pair.instruction.is_some() {
            return Ok(pair);
        }
        if pair.status != Status::Ingested {
            return Err(Error::Precondition(format!(
                "{}: backtranslation needs status ingested, found {}",
                pair.doc_id, pair.status
            )));
        }
        let prompt = self.prompts.backtranslation_prompt(&pair.response_initial)?;
        match call(gateway, "backtranslate", &pair, prompt, self.sampling.backtranslate) {
            Ok(text) => {
                let instruction = text.trim();
                if instruction.is_empty() {
                    return Ok(pair.fail("empty instruction"));
                }
                Ok(CandidatePair {
                    instruction: Some(instruction.to_string()),
                    status: Status::Backtranslated,
                    failure: None,
                    ..pair
                })
            }
            Err(reason) => Ok(pair.fail(reason)),
        }
    }

    pub fn score_pair(&self, pair: CandidatePair, gateway: &Gateway) -> Result<CandidatePair> {
        if pair.score_raw.is_some() {
            return Ok(pair);
        }
        if pair.status != Status::Backtranslated {
            return Err(Error::Precondition(format!(
                "{}: scoring needs status backtranslated, found {}",
                pair.doc_id, pair.status
            )));
        }
        let instruction = pair.instruction.as_deref().unwrap_or_default();
        let prompt = self.prompts.scoring_prompt(instruction, &pair.response_initial)?;
        match call(gateway, "score", &pair, prompt, self.sampling.score) {
            Ok(raw) => Ok(CandidatePair {
                score: extract_score(&raw),
                score_raw: Some(raw),
                status: Status::Scored,
                failure: None,
                ..pair
            }),
            Err(reason) => Ok(pair.fail(reason)),
        }
    }

    /// Rewrites the web response; a completion without a `[RES]` block is
    /// retried once before the pair is marked `rewrite_failed`.
    pub fn rewrite_response(&self, pair: CandidatePair, gateway: &Gateway) -> Result<CandidatePair> {
        if pair.response_rewritten.is_some() || pair.status == Status::RewriteFailed {
            return Ok(pair);
        }
        if !matches!(pair.status, Status::Scored | Status::Backtranslated) {
            return Err(Error::Precondition(format!(
                "{}: rewriting needs status scored or backtranslated, found {}",
                pair.doc_id, pair.status
            )));
        }
        let instruction = pair.instruction.as_deref().unwrap_or_default();
        let prompt = self.prompts.rewrite_prompt(instruction, &pair.response_initial)?;
        for _ in 0..2 {
            let completion = match call(gateway, "rewrite", &pair, prompt.clone(), self.sampling.rewrite) {
                Ok(text) => text,
                Err(reason) => return Ok(pair.fail(reason)),
            };
            if let Some(rewritten) = extract_rewrite(&completion).filter(|r| !r.is_empty()) {
                return Ok(CandidatePair {
                    response_rewritten: Some(rewritten),
                    status: Status::Rewritten,
                    failure: None,
                    ..pair
                });
            }
        }
        Ok(CandidatePair {
            status: Status::RewriteFailed,
            failure: None,
            ..pair
        })
    }

    /// Answers the bare instruction with no draft response.
    pub fn distill_response(&self, pair: CandidatePair, gateway: &Gateway) -> Result<CandidatePair> {
        if pair.response_distilled.is_some() {
            return Ok(pair);
        }
        if pair.status == Status::FilteredOut {
            return Err(Error::Precondition(format!("{}: pair was filtered out", pair.doc_id)));
        }
        let Some(instruction) = pair.instruction.clone().filter(|i| !i.trim().is_empty()) else {
            return Err(Error::Precondition(format!(
                "{}: distillation needs an instruction",
                pair.doc_id
            )));
        };
        match call(gateway, "distill", &pair, instruction, self.sampling.distill) {
            Ok(text) => {
                let answer = text.trim();
                if answer.is_empty() {
                    return Ok(pair.fail("empty distilled response"));
                }
                Ok(CandidatePair {
                    response_distilled: Some(answer.to_string()),
                    status: Status::Distilled,
                    failure: None,
                    ..pair
                })
            }
            Err(reason) => Ok(pair.fail(reason)),
        }
    }
}
