use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{reservoir, Estimator};
use crate::error::{Error, Result};

fn edge_punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{P}+|\p{P}+$").unwrap())
}

/// Lowercase, split on Unicode whitespace, strip leading/trailing
/// punctuation; tokens left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| edge_punctuation().replace_all(t, "").into_owned())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Distinct consecutive token triples across a seeded sample of
/// `min(sample_n, texts.len())` texts. Triples never span two texts.
pub fn unique_trigrams(texts: &[String], sample_n: usize, seed: u64) -> usize {
    if texts.is_empty() || sample_n == 0 {
        return 0;
    }
    let sample: Vec<&String> = if sample_n >= texts.len() {
        texts.iter().collect()
    } else {
        reservoir(texts.iter(), sample_n, seed)
    };
    let mut seen: HashSet<[String; 3]> = HashSet::new();
    for text in sample {
        let tokens = tokenize(text);
        for w in tokens.windows(3) {
            seen.insert([w[0].clone(), w[1].clone(), w[2].clone()]);
        }
    }
    seen.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_instruction_tokens: f64,
    pub mean_response_tokens: f64,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Mean token estimates of instructions and responses, to one decimal.
pub fn length_stats<S: AsRef<str>>(records: &[(S, S)], estimator: &Estimator) -> Result<LengthStats> {
    if records.is_empty() {
        return Err(Error::Precondition("length statistics need at least one record".into()));
    }
    let (mut instruction_total, mut response_total) = (0usize, 0usize);
    for (instruction, response) in records {
        instruction_total += estimator.estimate(instruction.as_ref())?;
        response_total += estimator.estimate(response.as_ref())?;
    }
    let n = records.len() as f64;
    Ok(LengthStats {
        mean_instruction_tokens: round1(instruction_total as f64 / n),
        mean_response_tokens: round1(response_total as f64 / n),
    })
}
