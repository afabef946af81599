//! Seeded k-means (k-means++ seeding, Lloyd iterations).

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (index, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (index, d);
        }
    }
    best
}

pub fn distinct_points(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut closest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = closest.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (index, &d) in closest.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                chosen = index;
                break;
            }
            target -= d;
        }
        let centroid = points[chosen].clone();
        for (slot, p) in closest.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &centroid));
        }
        centroids.push(centroid);
    }
    centroids
}

/// Clusters `points` into at most `k` groups. Stops when assignments are
/// stable or after `max_iters` Lloyd iterations. Empty clusters keep their
/// previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> KMeans {
    assert!(!points.is_empty(), "k-means needs at least one point");
    assert!(k >= 1, "k must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let dim = points[0].len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((centroid, sum), &count) in centroids.iter_mut().zip(sums).zip(&counts) {
            if count > 0 {
                *centroid = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    KMeans {
        centroids,
        assignments,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut points = vec![vec![0.0, 0.0]; 10];
        points.extend(vec![vec![1.0, 1.0]; 10]);
        let result = kmeans(&points, 2, 0, 300);
        assert!(result.converged);
        let first = result.assignments[0];
        assert!(result.assignments[..10].iter().all(|&a| a == first));
        assert!(result.assignments[10..].iter().all(|&a| a != first));
    }

    #[test]
    fn same_seed_same_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.gen()).collect()).collect();
        let a = kmeans(&points, 7, 42, 300);
        let b = kmeans(&points, 7, 42, 300);
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_limit_initial_centroids() {
        let points = vec![vec![1.0]; 6];
        let result = kmeans(&points, 4, 3, 10);
        assert_eq!(result.centroids.len(), 1);
        assert_eq!(distinct_points(&points), 1);
    }
}
