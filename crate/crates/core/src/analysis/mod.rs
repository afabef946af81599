//! Dataset quality metrics: MAUVE, unique-trigram diversity, token-length
//! statistics and score distributions.

mod embed;
mod kmeans;
mod mauve;
mod scores;
mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use embed::{hashed_bow, Embedder, HASHED_BOW_DIM};
pub use kmeans::{kmeans, KMeans};
pub use mauve::{
    compute_mauve, compute_mauve_over_seeds, divergence_frontier, mauve_auc, mauve_from_histograms,
    quantize_kmeans, ClusterCount, DivergenceCurve, Histogram, MauveConfig, MauveReport,
    MauveSummary,
};
pub use scores::{histogram_of_scores, score_histogram, ScoreHistogram};
pub use text::{length_stats, tokenize, unique_trigrams, LengthStats};

/// Settings of the `analyze` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub mauve: MauveConfig,
    /// Number of k-means seeds MAUVE is averaged over.
    #[serde(default = "default_mauve_seeds")]
    pub mauve_seeds: usize,
    #[serde(default = "default_trigram_sample")]
    pub trigram_sample: usize,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    /// Also write frontier points as CSV next to the report.
    #[serde(default)]
    pub frontier_csv: bool,
}

fn default_mauve_seeds() -> usize {
    3
}
fn default_trigram_sample() -> usize {
    10_000
}
fn default_estimator() -> String {
    "whitespace".into()
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mauve: MauveConfig::default(),
            mauve_seeds: default_mauve_seeds(),
            trigram_sample: default_trigram_sample(),
            estimator: default_estimator(),
            frontier_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub records: usize,
    pub lengths: Option<LengthStats>,
    pub unique_trigrams_instructions: usize,
    pub unique_trigrams_responses: usize,
}

/// The single JSON document written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub score_histogram: Option<ScoreHistogram>,
    pub datasets: BTreeMap<String, DatasetMetrics>,
    /// Keyed by comparison, e.g. `initial_vs_rewritten`.
    pub mauve: BTreeMap<String, MauveSummary>,
}
