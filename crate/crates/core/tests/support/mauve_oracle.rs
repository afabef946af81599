//! Brute-force frontier + area reference, written independently of the
//! library: no shared helpers, explicit loops, and the area computed as the
//! integral of the upper envelope over the distinct x breakpoints.

/// KL(a || b) in nats with 0·log(0/x) = 0.
pub fn kl(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        if a[i] > 0.0 {
            total += a[i] * (a[i] / b[i]).ln();
        }
    }
    total
}

pub fn frontier(p: &[f64], q: &[f64], c: f64, m: usize) -> Vec<(f64, f64)> {
    let mut points = vec![(0.0, 1.0), (1.0, 0.0)];
    for j in 1..=m {
        let lambda = j as f64 / (m as f64 + 1.0);
        let mut r = vec![0.0; p.len()];
        for i in 0..p.len() {
            r[i] = lambda * p[i] + (1.0 - lambda) * q[i];
        }
        let x = (-c * kl(q, &r)).exp();
        let y = (-c * kl(p, &r)).exp();
        points.push((x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)));
    }
    points
}

/// Area under the max-y envelope at each distinct x, linear in between.
pub fn area(points: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let envelope: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let y = points
                .iter()
                .filter(|p| p.0 == x)
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max);
            (x, y)
        })
        .collect();
    let mut total = 0.0;
    for w in envelope.windows(2) {
        total += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    total.clamp(0.0, 1.0)
}

pub fn mauve(p: &[f64], q: &[f64], c: f64, m: usize) -> f64 {
    area(&frontier(p, q, c, m))
}

/// Composite Simpson integration of f over [0, 1] with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut sum = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}
