use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stages::CandidatePair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// `counts[i]` is the number of pairs scored `i + 1`.
    pub counts: [usize; 5],
    pub invalid: usize,
    pub total: usize,
    pub valid_fraction: f64,
    pub score5_fraction: f64,
}

pub fn histogram_of_scores(scores: impl IntoIterator<Item = Option<u8>>) -> Result<ScoreHistogram> {
    let mut counts = [0usize; 5];
    let mut invalid = 0;
    let mut total = 0;
    for score in scores {
        total += 1;
        match score {
            Some(s @ 1..=5) => counts[s as usize - 1] += 1,
            _ => invalid += 1,
        }
    }
    if total == 0 {
        return Err(Error::EmptyScoreSet);
    }
    Ok(ScoreHistogram {
        counts,
        invalid,
        total,
        valid_fraction: (total - invalid) as f64 / total as f64,
        score5_fraction: counts[4] as f64 / total as f64,
    })
}

pub fn score_histogram<'a>(pairs: impl IntoIterator<Item = &'a CandidatePair>) -> Result<ScoreHistogram> {
    histogram_of_scores(pairs.into_iter().map(|p| p.score))
}
