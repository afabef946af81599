//! MAUVE: area under the divergence frontier of two quantized distributions.

use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::kmeans::{distinct_points, kmeans};
use crate::error::{Error, Result};

/// Cluster count: fixed, or `max(2, floor(n / 10))` for the smaller side's
/// sample count `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterCount {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl ClusterCount {
    pub const AUTO: ClusterCount = ClusterCount::Auto(AutoTag::Auto);

    pub fn resolve(self, n_p: usize, n_q: usize) -> usize {
        match self {
            ClusterCount::Fixed(k) => k,
            ClusterCount::Auto(_) => (n_p.min(n_q) / 10).max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MauveConfig {
    #[serde(default = "default_clusters")]
    pub num_clusters: ClusterCount,
    #[serde(default = "default_scaling")]
    pub scaling_constant: f64,
    /// Number of interior mixture weights `j / (m + 1)`.
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub kmeans_seed: u64,
    #[serde(default = "default_max_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default = "default_embedder")]
    pub embedder: String,
}

fn default_clusters() -> ClusterCount {
    ClusterCount::AUTO
}
fn default_scaling() -> f64 {
    5.0
}
fn default_grid() -> usize {
    25
}
fn default_max_iters() -> usize {
    300
}
fn default_embedder() -> String {
    "hashed-bow".into()
}

impl Default for MauveConfig {
    fn default() -> Self {
        Self {
            num_clusters: default_clusters(),
            scaling_constant: default_scaling(),
            grid_size: default_grid(),
            kmeans_seed: 0,
            kmeans_max_iters: default_max_iters(),
            embedder: default_embedder(),
        }
    }
}

impl MauveConfig {
    pub fn validate(&self) -> Result<()> {
        if let ClusterCount::Fixed(k) = self.num_clusters {
            if k < 2 {
                return Err(Error::Config("num_clusters must be >= 2".into()));
            }
        }
        if self.grid_size < 1 {
            return Err(Error::Config("grid_size must be >= 1".into()));
        }
        if self.scaling_constant.is_nan() || self.scaling_constant <= 0.0 {
            return Err(Error::Config("scaling_constant must be > 0".into()));
        }
        if self.kmeans_max_iters < 1 {
            return Err(Error::Config("kmeans_max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// A probability vector over clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    weights: Vec<f64>,
}

impl Histogram {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Precondition("histogram has no buckets".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Precondition("histogram weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("histogram sums to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Precondition("histogram has no mass".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// KL(a || b) over clusters, with 0·log(0/x) = 0.
fn kl_divergence(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(ai, _)| **ai > 0.0)
        .map(|(ai, bi)| ai * (ai / bi).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCurve {
    /// Ascending by x, including the endpoints (0, 1) and (1, 0).
    pub points: Vec<(f64, f64)>,
}

impl DivergenceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

pub fn divergence_frontier(p: &Histogram, q: &Histogram, c: f64, m: usize) -> Result<DivergenceCurve> {
    if p.len() != q.len() {
        return Err(Error::HistogramMismatch(p.len(), q.len()));
    }
    let (p, q) = (p.weights(), q.weights());
    let mut points = Vec::with_capacity(m + 2);
    points.push((0.0, 1.0));
    let mut mixture = vec![0.0; p.len()];
    for j in 1..=m {
        let lambda = j as f64 / (m + 1) as f64;
        for ((r, pi), qi) in mixture.iter_mut().zip(p).zip(q) {
            *r = lambda * pi + (1.0 - lambda) * qi;
        }
        let x = (-c * kl_divergence(q, &mixture)).exp().clamp(0.0, 1.0);
        let y = (-c * kl_divergence(p, &mixture)).exp().clamp(0.0, 1.0);
        points.push((x, y));
    }
    points.push((1.0, 0.0));
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(DivergenceCurve { points })
}

/// Trapezoidal area under the curve; points sharing an x collapse to their
/// largest y.
pub fn mauve_auc(curve: &DivergenceCurve) -> f64 {
    let mut envelope: Vec<(f64, f64)> = Vec::with_capacity(curve.points.len());
    for &(x, y) in &curve.points {
        match envelope.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(y),
            _ => envelope.push((x, y)),
        }
    }
    let area: f64 = envelope
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum();
    area.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MauveReport {
    pub score: f64,
    pub curve: DivergenceCurve,
    pub k_used: usize,
    pub sample_sizes: (usize, usize),
}

/// MAUVE of two pre-quantized histograms.
pub fn mauve_from_histograms(p: &Histogram, q: &Histogram, config: &MauveConfig) -> Result<MauveReport> {
    let curve = divergence_frontier(p, q, config.scaling_constant, config.grid_size)?;
    Ok(MauveReport {
        score: mauve_auc(&curve),
        curve,
        k_used: p.len(),
        sample_sizes: (0, 0),
    })
}

/// Joint k-means over both vector sets, then per-side cluster occupancy.
pub fn quantize_kmeans(vectors_p: &[Vec<f64>], vectors_q: &[Vec<f64>], config: &MauveConfig) -> Result<(Histogram, Histogram)> {
    if vectors_p.is_empty() || vectors_q.is_empty() {
        return Err(Error::Precondition("both vector sets must be non-empty".into()));
    }
    let dim = vectors_p[0].len();
    if let Some(bad) = vectors_p.iter().chain(vectors_q).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let union: Vec<Vec<f64>> = vectors_p.iter().chain(vectors_q).cloned().collect();
    let mut k = config.num_clusters.resolve(vectors_p.len(), vectors_q.len());
    let distinct = distinct_points(&union);
    if k > distinct {
        tracing::warn!(requested = k, distinct, "fewer distinct points than clusters; reducing k");
        k = distinct;
    }
    let clustering = kmeans(&union, k, config.kmeans_seed, config.kmeans_max_iters);
    let k_used = clustering.centroids.len();
    let mut counts_p = vec![0usize; k_used];
    let mut counts_q = vec![0usize; k_used];
    let (assign_p, assign_q) = clustering.assignments.split_at(vectors_p.len());
    assign_p.iter().for_each(|&a| counts_p[a] += 1);
    assign_q.iter().for_each(|&a| counts_q[a] += 1);
    Ok((Histogram::from_counts(&counts_p)?, Histogram::from_counts(&counts_q)?))
}

/// Embeds both text sets, quantizes them jointly and scores the frontier.
pub fn compute_mauve(texts_p: &[String], texts_q: &[String], config: &MauveConfig, embedder: &Embedder) -> Result<MauveReport> {
    config.validate()?;
    if texts_p.is_empty() || texts_q.is_empty() {
        return Err(Error::Precondition("MAUVE needs non-empty text sets".into()));
    }
    let vectors_p = embedder.embed_texts(texts_p)?;
    let vectors_q = embedder.embed_texts(texts_q)?;
    let (p, q) = quantize_kmeans(&vectors_p, &vectors_q, config)?;
    let mut report = mauve_from_histograms(&p, &q, config)?;
    report.sample_sizes = (texts_p.len(), texts_q.len());
    Ok(report)
}

/// Mean and sample standard deviation of MAUVE over several k-means seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MauveSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub scores: Vec<f64>,
    pub k_used: usize,
    pub sample_sizes: (usize, usize),
    /// Frontier of the first seed.
    pub curve: DivergenceCurve,
}

pub fn compute_mauve_over_seeds(
    texts_p: &[String],
    texts_q: &[String],
    config: &MauveConfig,
    embedder: &Embedder,
    seeds: &[u64],
) -> Result<MauveSummary> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Precondition("at least one seed is required".into()));
    }
    if texts_p.is_empty() || texts_q.is_empty() {
        return Err(Error::Precondition("MAUVE needs non-empty text sets".into()));
    }
    let vectors_p = embedder.embed_texts(texts_p)?;
    let vectors_q = embedder.embed_texts(texts_q)?;
    let mut scores = Vec::with_capacity(seeds.len());
    let mut k_used = 0;
    let mut first_curve = None;
    for &seed in seeds {
        let seeded = MauveConfig {
            kmeans_seed: seed,
            ..config.clone()
        };
        let (p, q) = quantize_kmeans(&vectors_p, &vectors_q, &seeded)?;
        let report = mauve_from_histograms(&p, &q, &seeded)?;
        k_used = report.k_used;
        scores.push(report.score);
        first_curve.get_or_insert(report.curve);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std_dev = if scores.len() > 1 {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MauveSummary {
        mean,
        std_dev,
        scores,
        k_used,
        sample_sizes: (texts_p.len(), texts_q.len()),
        curve: first_curve.expect("at least one seed"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(w: &[f64]) -> Histogram {
        Histogram::new(w.to_vec()).unwrap()
    }

    #[test]
    fn identical_histograms() {
        let p = hist(&[0.2, 0.3, 0.5]);
        let curve = divergence_frontier(&p, &p, 5.0, 4).unwrap();
        assert_eq!(curve.points.len(), 6);
        assert_eq!(curve.points[0], (0.0, 1.0));
        assert!(curve.points[1..5].iter().all(|&(x, y)| (x - 1.0).abs() < 1e-12 && (y - 1.0).abs() < 1e-12));
        assert!((mauve_auc(&curve) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_interior_points_follow_closed_form() {
        let p = hist(&[1.0, 0.0]);
        let q = hist(&[0.0, 1.0]);
        let c = 5.0;
        let m = 9;
        let curve = divergence_frontier(&p, &q, c, m).unwrap();
        for j in 1..=m {
            let lambda = j as f64 / (m + 1) as f64;
            let expected = ((1.0 - lambda).powf(c), lambda.powf(c));
            assert!(
                curve.points.iter().any(|&(x, y)| (x - expected.0).abs() < 1e-12 && (y - expected.1).abs() < 1e-12),
                "missing point for lambda {lambda}"
            );
        }
        assert!(curve.points.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn unit_square_and_triangle() {
        let square = DivergenceCurve {
            points: vec![(0.0, 1.0), (1.0, 1.0), (1.0, 0.0)],
        };
        assert_eq!(mauve_auc(&square), 1.0);
        let triangle = DivergenceCurve {
            points: vec![(0.0, 1.0), (1.0, 0.0)],
        };
        assert_eq!(mauve_auc(&triangle), 0.5);
    }

    #[test]
    fn mismatched_lengths() {
        let err = divergence_frontier(&hist(&[1.0]), &hist(&[0.5, 0.5]), 5.0, 3).unwrap_err();
        assert!(matches!(err, Error::HistogramMismatch(1, 2)));
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram::new(vec![0.5, 0.4]).is_err());
        assert!(Histogram::new(vec![-0.5, 1.5]).is_err());
        assert!(Histogram::new(vec![]).is_err());
        assert!(Histogram::from_counts(&[0, 0]).is_err());
        assert_eq!(Histogram::from_counts(&[1, 3]).unwrap().weights(), &[0.25, 0.75]);
    }

    #[test]
    fn quantize_separated_and_identical_sets() {
        let config = MauveConfig {
            num_clusters: ClusterCount::Fixed(2),
            ..MauveConfig::default()
        };
        let p = vec![vec![0.0, 0.0]; 10];
        let q = vec![vec![1.0, 1.0]; 10];
        let (hp, hq) = quantize_kmeans(&p, &q, &config).unwrap();
        let mut pair = [hp.weights().to_vec(), hq.weights().to_vec()];
        pair.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(pair, [vec![0.0, 1.0], vec![1.0, 0.0]]);

        let (hp, hq) = quantize_kmeans(&p, &p, &config).unwrap();
        assert_eq!(hp, hq);
    }

    #[test]
    fn k_is_reduced_to_distinct_points() {
        let config = MauveConfig {
            num_clusters: ClusterCount::Fixed(8),
            ..MauveConfig::default()
        };
        let p = vec![vec![0.0], vec![1.0]];
        let (hp, _) = quantize_kmeans(&p, &p, &config).unwrap();
        assert_eq!(hp.len(), 2);
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let config = MauveConfig::default();
        let err = quantize_kmeans(&[vec![0.0, 1.0]], &[vec![0.0]], &config).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn auto_cluster_count() {
        assert_eq!(ClusterCount::AUTO.resolve(5, 100), 2);
        assert_eq!(ClusterCount::AUTO.resolve(250, 300), 25);
        let parsed: MauveConfig = serde_json::from_str(r#"{"num_clusters": "auto"}"#).unwrap();
        assert_eq!(parsed.num_clusters, ClusterCount::AUTO);
        let parsed: MauveConfig = serde_json::from_str(r#"{"num_clusters": 12}"#).unwrap();
        assert_eq!(parsed.num_clusters, ClusterCount::Fixed(12));
        assert!(MauveConfig { grid_size: 0, ..MauveConfig::default() }.validate().is_err());
        assert!(MauveConfig { num_clusters: ClusterCount::Fixed(1), ..MauveConfig::default() }.validate().is_err());
    }

    #[test]
    fn identical_texts_score_one() {
        let texts: Vec<String> = (0..40).map(|i| format!("sample text number {} about topic {}", i, i % 7)).collect();
        let report = compute_mauve(&texts, &texts, &MauveConfig::default(), &Embedder::hashed_bow()).unwrap();
        assert!((report.score - 1.0).abs() < 1e-9);
        assert_eq!(report.sample_sizes, (40, 40));
        assert_eq!(report.k_used, 4);
    }

    #[test]
    fn seed_summary() {
        let p: Vec<String> = (0..30).map(|i| format!("alpha beta {i}")).collect();
        let q: Vec<String> = (0..30).map(|i| format!("gamma delta {}", i * 3)).collect();
        let summary = compute_mauve_over_seeds(&p, &q, &MauveConfig::default(), &Embedder::hashed_bow(), &[0, 1, 2]).unwrap();
        assert_eq!(summary.scores.len(), 3);
        assert!(summary.std_dev >= 0.0);
        assert!(summary.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
