use std::collections::BTreeMap;

use bft_core::corpus::{sample_documents, Document};

fn docs(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| Document {
            id: format!("{i:04}"),
            text: String::new(),
            source: "web".into(),
            token_estimate: 0,
        })
        .collect()
}

#[test]
fn inclusion_frequency_is_uniform() {
    let population = docs(1000);
    let mut hits = vec![0usize; population.len()];
    let seeds = 10_000;
    for seed in 0..seeds {
        for doc in sample_documents(population.clone(), 100, seed) {
            hits[doc.id.parse::<usize>().unwrap()] += 1;
        }
    }
    let freqs: Vec<f64> = hits.iter().map(|&h| h as f64 / seeds as f64).collect();
    // One binomial standard error is sqrt(0.1 * 0.9 / 10_000) = 0.003, so a
    // ±0.01 band is ~3.3 SE and about one document in a thousand is expected
    // to fall just outside it by chance.
    let outside = freqs.iter().filter(|f| (*f - 0.1).abs() > 0.01).count();
    assert!(outside <= 10, "{outside} documents outside 0.1 ± 0.01");
    let worst = freqs.iter().map(|f| (f - 0.1).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.015, "max deviation {worst} (5 SE)");
    let mean = freqs.iter().sum::<f64>() / freqs.len() as f64;
    assert!((mean - 0.1).abs() < 1e-12);
    // chi-square over documents, 999 degrees of freedom: mean 999, sd ~45
    let expected = seeds as f64 * 0.1;
    let chi2: f64 = hits
        .iter()
        .map(|&h| (h as f64 - expected).powi(2) / (expected * 0.9))
        .sum();
    assert!((999.0 - 5.0 * 45.0..999.0 + 5.0 * 45.0).contains(&chi2), "chi2 {chi2}");
}

#[test]
fn every_subset_is_equally_likely() {
    // 5 choose 2 = 10 subsets
    let population = docs(5);
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let trials = 20_000;
    for seed in 0..trials {
        let ids = sample_documents(population.clone(), 2, seed).into_iter().map(|d| d.id).collect();
        *counts.entry(ids).or_default() += 1;
    }
    assert_eq!(counts.len(), 10);
    for (subset, count) in counts {
        let freq = count as f64 / trials as f64;
        assert!((freq - 0.1).abs() < 0.01, "{subset:?}: {freq}");
    }
}
