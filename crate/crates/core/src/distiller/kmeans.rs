use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::linalg::squared_distance;
use crate::scalar::Real;

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KMeansError {
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("points have inconsistent dimensions")]
    Ragged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    /// Cluster index per point.
    pub assignments: Vec<usize>,
    /// The centroids `assignments` were computed against.
    pub centroids: Vec<Vec<T>>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T> KMeansFit<T> {
    pub fn members(&self, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); k];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn nearest<T: Real>(p: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding. When every remaining point coincides with a chosen
/// centre, the lowest unchosen index is taken so `k` distinct points are used.
fn seed_centroids<T: Real>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .map(|(_, d)| *d)
            .sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if chosen[i] || *d <= 0.0 {
                    continue;
                }
                if target < *d {
                    pick = Some(i);
                    break;
                }
                target -= *d;
            }
            pick.unwrap_or_else(|| {
                (0..n)
                    .rev()
                    .find(|&i| !chosen[i] && d2[i] > 0.0)
                    .expect("positive mass")
            })
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, &points[pick]).to_f64_lossy();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding under Euclidean distance.
///
/// Stops when assignments repeat or after `max_iterations` assignment steps.
/// Identical inputs and seed give identical output. An emptied cluster keeps
/// its previous centroid.
pub fn kmeans<T: Real>(
    points: &[Vec<T>],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<KMeansFit<T>, KMeansError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(KMeansError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(KMeansError::Ragged);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        iterations += 1;
        let next: Vec<usize> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
        if iterations >= max_iterations.max(1) {
            break;
        }
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let m = T::from_usize_lossy(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / m).collect();
            }
        }
    }
    Ok(KMeansFit {
        assignments,
        centroids,
        iterations,
        converged,
    })
}
