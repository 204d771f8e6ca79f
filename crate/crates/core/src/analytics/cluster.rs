use std::ops::RangeInclusive;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pca::{pca, Pca};
use super::stats::{mean, sample_variance};
use super::AnalyticsError;

pub const MAX_ITERATIONS: usize = 100;
pub const RESTARTS: u64 = 10;

/// Column-wise z-scores with sample standard deviation. Constant columns
/// become all zeros.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let mut out = rows.to_vec();
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = mean(&col);
        let sd = sample_variance(&col).sqrt();
        for (i, r) in out.iter_mut().enumerate() {
            r[j] = if sd > 0.0 { (rows[i][j] - m) / sd } else { 0.0 };
        }
    }
    out
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each update step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, later centres with probability
/// proportional to squared distance from the nearest chosen centre.
fn seed_centroids(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = data.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = data.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        centroids.push(data[next].clone());
    }
    centroids
}

/// One Lloyd run from k-means++ seeds. Stops when assignments stop changing
/// or after [`MAX_ITERATIONS`] update steps.
pub fn kmeans_once(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansRun {
    let d = data[0].len();
    let mut centroids = seed_centroids(data, k, rng);
    let mut labels: Vec<usize> = data.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // An emptied cluster takes over the point farthest from its centre.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..data.len())
                    .max_by(|&i, &j| {
                        sq_dist(&data[i], &centroids[labels[i]]).total_cmp(&sq_dist(&data[j], &centroids[labels[j]]))
                    })
                    .expect("non-empty data");
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                centroids[c] = data[far].clone();
            }
        }
        history.push(data.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum());
        let next: Vec<usize> = data.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels || iterations >= MAX_ITERATIONS {
            labels = next;
            break;
        }
        labels = next;
    }
    let inertia = data.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    KMeansRun { k, labels, centroids, inertia, inertia_history: history, iterations }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one restart, fixed by (seed, k, restart) alone.
pub fn restart_seed(seed: u64, k: usize, restart: u64) -> u64 {
    splitmix64(splitmix64(seed ^ (k as u64).rotate_left(32)) ^ restart)
}

/// Best of [`RESTARTS`] runs by inertia; earlier restarts win ties.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansRun, AnalyticsError> {
    if k == 0 || data.len() < k {
        return Err(AnalyticsError::TooFewRows { rows: data.len(), needed: k.max(1) });
    }
    let mut best: Option<KMeansRun> = None;
    for r in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, k, r));
        let run = kmeans_once(data, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette with Euclidean distance; members of singleton clusters
/// score 0.
pub fn silhouette(data: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = data.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(&data[i], &data[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub silhouette: f64,
    pub inertia: f64,
}

/// Runs k-means for every k in range and keeps the k with the highest mean
/// silhouette; ties go to the smaller k.
pub fn select_k(
    data: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<(KMeansRun, f64, Vec<KScore>), AnalyticsError> {
    let n = data.len();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if n < 3 || hi > n - 1 {
        return Err(AnalyticsError::TooFewRows { rows: n, needed: (hi + 1).max(3) });
    }
    if lo < 2 || lo > hi {
        return Err(AnalyticsError::InvalidRange(format!("k range {lo}..={hi} must lie in 2..={}", n - 1)));
    }
    if data.iter().all(|r| r == &data[0]) {
        return Err(AnalyticsError::DegenerateData);
    }
    let mut scores = Vec::new();
    let mut best: Option<(KMeansRun, f64)> = None;
    for k in lo..=hi {
        let run = kmeans(data, k, seed)?;
        let s = silhouette(data, &run.labels, k);
        scores.push(KScore { k, silhouette: s, inertia: run.inertia });
        if best.as_ref().is_none_or(|(_, bs)| s > *bs) {
            best = Some((run, s));
        }
    }
    let (run, s) = best.expect("non-empty range");
    Ok((run, s, scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Centroids in standardized space.
    pub centroids: Vec<Vec<f64>>,
    pub mean_silhouette: f64,
    pub scores_by_k: Vec<KScore>,
    pub inertia_history: Vec<f64>,
    pub pca: Pca,
}

/// Standardizes the rows, selects k by silhouette, and projects onto the
/// top two principal components.
pub fn cluster(
    rows: &[Vec<f64>],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<ClusterAssignment, AnalyticsError> {
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(AnalyticsError::LengthMismatch {
            left: rows[0].len(),
            right: rows.iter().map(Vec::len).find(|l| *l != rows[0].len()).unwrap_or(0),
        });
    }
    let z = standardize(rows);
    let (run, s, scores) = select_k(&z, k_range, seed)?;
    let pca = pca(&z)?;
    Ok(ClusterAssignment {
        k: run.k,
        labels: run.labels,
        centroids: run.centroids,
        mean_silhouette: s,
        scores_by_k: scores,
        inertia_history: run.inertia_history,
        pca,
    })
}
