//! k-means pseudo-labelling and silhouette-based cluster count estimation.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::matrix::FeatureMatrix;

/// Points above which the silhouette is computed on a seeded subsample.
pub const SILHOUETTE_CAP: usize = 2000;

/// Restarts per `k` during cluster count estimation.
const ESTIMATE_RESTARTS: usize = 4;

const ESTIMATE_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k × d`, row-major.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn centroid(&self, c: usize) -> &[f64] {
        let d = self.centroids.len() / self.k;
        &self.centroids[c * d..(c + 1) * d]
    }

    /// Number of points per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(data: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.rows();
    let d = data.dim();
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(data.row(first));
    let mut nearest: Vec<f64> = data.iter_rows().map(|r| sq_dist(r, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(data.row(pick));
        let new_c = &centroids[c * d..(c + 1) * d];
        for (i, r) in data.iter_rows().enumerate() {
            let dist = sq_dist(r, new_c);
            if dist < nearest[i] {
                nearest[i] = dist;
            }
        }
    }
    centroids
}

fn assign(data: &FeatureMatrix, centroids: &[f64], k: usize, out: &mut [usize]) -> (bool, f64) {
    let d = data.dim();
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, r) in data.iter_rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(r, &centroids[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        if out[i] != best {
            changed = true;
            out[i] = best;
        }
        inertia += best_d;
    }
    (changed, inertia)
}

fn update_centroids(data: &FeatureMatrix, assignments: &mut [usize], k: usize) -> Vec<f64> {
    let d = data.dim();
    loop {
        let mut sums = alloc::vec![0.0; k * d];
        let mut counts = alloc::vec![0usize; k];
        for (r, &a) in data.iter_rows().zip(assignments.iter()) {
            counts[a] += 1;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= n);
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums;
        };
        // Reseed the empty cluster with the point farthest from its centroid,
        // taken from a cluster that can spare it.
        let mut far = None;
        let mut far_d = -1.0;
        for (i, r) in data.iter_rows().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let dist = sq_dist(r, &sums[a * d..(a + 1) * d]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        match far {
            Some(i) => assignments[i] = empty,
            None => return sums,
        }
    }
}

fn inertia_of(data: &FeatureMatrix, centroids: &[f64], assignments: &[usize]) -> f64 {
    let d = data.dim();
    data.iter_rows()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, &centroids[a * d..(a + 1) * d]))
        .sum()
}

fn lloyd(data: &FeatureMatrix, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = data.rows();
    let mut centroids = plus_plus_init(data, k, rng);
    let mut assignments = alloc::vec![usize::MAX; n];
    assign(data, &centroids, k, &mut assignments);
    let mut history = Vec::new();
    let mut iterations_run = 0;
    while iterations_run < max_iters.max(1) {
        iterations_run += 1;
        centroids = update_centroids(data, &mut assignments, k);
        history.push(inertia_of(data, &centroids, &assignments));
        let (changed, _) = assign(data, &centroids, k, &mut assignments);
        if !changed {
            break;
        }
    }
    // Centroids must be the means of the final assignment.
    centroids = update_centroids(data, &mut assignments, k);
    let inertia = inertia_of(data, &centroids, &assignments);
    history.push(inertia);
    KMeansResult {
        centroids,
        k,
        assignments,
        inertia,
        iterations_run,
        inertia_history: history,
    }
}

/// k-means++ seeded Lloyd iterations until the assignment stops changing or
/// `max_iters` is reached. Every cluster is non-empty.
pub fn kmeans(data: &FeatureMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    kmeans_restarts(data, k, seed, max_iters, 1)
}

/// Best of `restarts` independent [`kmeans`] runs by inertia (first wins
/// ties).
pub fn kmeans_restarts(
    data: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    if k == 0 || data.rows() < k {
        return Err(Error::TooFewPoints {
            points: data.rows(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, k, max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette over all points, with Euclidean distances.
///
/// Points in singleton clusters contribute 0, as do points with `a = b = 0`.
pub fn silhouette_score(data: &FeatureMatrix, assignments: &[usize]) -> Result<f64> {
    let all: Vec<usize> = (0..data.rows()).collect();
    silhouette_over(data, assignments, &all)
}

/// [`silhouette_score`] on a seeded subsample of at most `cap` points
/// (exact when `n <= cap`).
pub fn silhouette_score_sampled(
    data: &FeatureMatrix,
    assignments: &[usize],
    cap: usize,
    seed: u64,
) -> Result<f64> {
    let n = data.rows();
    if n <= cap {
        return silhouette_score(data, assignments);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    silhouette_over(data, assignments, &idx)
}

fn silhouette_over(data: &FeatureMatrix, assignments: &[usize], points: &[usize]) -> Result<f64> {
    if assignments.len() != data.rows() {
        return Err(Error::LengthMismatch {
            left: data.rows(),
            right: assignments.len(),
        });
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = alloc::vec![0usize; k];
    for &i in points {
        sizes[assignments[i]] += 1;
    }
    if points.len() < 2 || sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::DegenerateClustering);
    }
    let mut total = 0.0;
    let mut sums = alloc::vec![0.0; k];
    for &i in points {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let xi = data.row(i);
        for &j in points {
            if j != i {
                sums[assignments[j]] += sqrt(sq_dist(xi, data.row(j)));
            }
        }
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Scans `k ∈ [k_min, k_max]` and returns the k with the highest silhouette
/// score; ties go to the smaller k.
pub fn estimate_num_classes(data: &FeatureMatrix, k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    let n = data.rows();
    if k_min < 2 || k_min > k_max || k_max + 1 > n {
        return Err(Error::InvalidKRange {
            k_min,
            k_max,
            points: n,
        });
    }
    if k_min == k_max {
        return Ok(k_min);
    }
    let mut best_k = k_min;
    let mut best_score = f64::NEG_INFINITY;
    for k in k_min..=k_max {
        let run = kmeans_restarts(data, k, seed.wrapping_add(k as u64), ESTIMATE_MAX_ITERS, ESTIMATE_RESTARTS)?;
        let score = silhouette_score_sampled(data, &run.assignments, SILHOUETTE_CAP, seed)?;
        if score > best_score {
            best_score = score;
            best_k = k;
        }
    }
    Ok(best_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pairs() -> FeatureMatrix {
        FeatureMatrix::from_rows(2, &[[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]], -1).unwrap()
    }

    #[test]
    fn two_pairs_split_exactly() {
        let r = kmeans(&pairs(), 2, 3, 100).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!((r.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_one_is_the_mean_and_k_n_is_exact() {
        let m = pairs();
        let r = kmeans(&m, 1, 0, 100).unwrap();
        assert_eq!(r.centroid(0), m.column_means().as_slice());
        let mean = m.column_means();
        let total: f64 = m.iter_rows().map(|x| sq_dist(x, &mean)).sum();
        assert!((r.inertia - total).abs() < 1e-9);
        let r = kmeans(&m, 4, 0, 100).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.cluster_sizes(), vec![1; 4]);
        assert_eq!(kmeans(&m, 5, 0, 10).unwrap_err(), Error::TooFewPoints { points: 4, k: 5 });
    }

    #[test]
    fn duplicates_never_leave_empty_clusters() {
        let m = FeatureMatrix::from_rows(1, &[[1.0], [1.0], [1.0], [2.0]], -1).unwrap();
        let r = kmeans(&m, 3, 9, 50).unwrap();
        assert!(r.cluster_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn silhouette_conventions() {
        let same = FeatureMatrix::from_rows(1, &[[0.0], [0.0], [0.0], [0.0]], -1).unwrap();
        assert_eq!(silhouette_score(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(
            silhouette_score(&same, &[0, 0, 0, 0]),
            Err(Error::DegenerateClustering)
        );
        let s = silhouette_score(&pairs(), &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.9);
        // Singletons score zero.
        let s = silhouette_score(&pairs(), &[0, 1, 2, 2]).unwrap();
        assert!(s > 0.0 && s < 0.5 + 1e-12);
    }

    #[test]
    fn degenerate_scan_returns_the_only_k() {
        assert_eq!(estimate_num_classes(&pairs(), 3, 3, 0).unwrap(), 3);
        assert!(estimate_num_classes(&pairs(), 2, 4, 0).is_err());
        assert!(estimate_num_classes(&pairs(), 1, 2, 0).is_err());
    }
}
