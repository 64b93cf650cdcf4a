//! Lloyd's k-means with multiple restarts, and random aggregation.

use crate::parallel;
use crate::rng::{stream, Purpose};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("cluster count must be >= 1")]
    ZeroClusters,
    #[error("cannot assign {count} items to {k} non-empty clusters")]
    TooManyClusters { count: usize, k: usize },
}

#[derive(Clone, Debug)]
pub struct KmeansResult {
    pub assignment: Vec<u32>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart;
    /// non-increasing by construction of the algorithm.
    pub inertia_history: Vec<f64>,
}

/// Best-of-`inits` restarts of Lloyd's algorithm with random-point centroid
/// initialisation. Deterministic given the seed; restarts run in parallel
/// and ties break towards the lowest restart index.
pub fn kmeans(points: &[Vec<f64>], k: usize, inits: usize, seed: u64) -> Result<KmeansResult, ClusteringError> {
    if k == 0 {
        return Err(ClusteringError::ZeroClusters);
    }
    assert!(!points.is_empty() && inits >= 1);
    let runs = parallel::map_range(inits, |run| lloyd(points, k, stream(seed, Purpose::Kmeans, run as u64, 0)));
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.inertia.total_cmp(&b.inertia).then(ia.cmp(ib)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    Ok(best)
}

fn lloyd<R: Rng>(points: &[Vec<f64>], k: usize, mut rng: R) -> KmeansResult {
    let n = points.len();
    let dim = points[0].len();
    let k_eff = k.min(n);

    // Random-point initialisation: k distinct indices via partial shuffle.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k_eff {
        let j = i + rng.gen_range(0..n - i);
        order.swap(i, j);
    }
    let mut centroids: Vec<Vec<f64>> = order[..k_eff].iter().map(|&i| points[i].clone()).collect();
    centroids.resize(k, vec![f64::INFINITY; dim]);

    let mut assignment = vec![0u32; n];
    let mut inertia_history = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..300 {
        let mut changed = false;
        let mut new_inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = nearest(p, &centroids);
            if assignment[i] != best as u32 {
                assignment[i] = best as u32;
                changed = true;
            }
            new_inertia += d;
        }

        // Re-seed an empty centroid at the point farthest from its own
        // centroid, so exactly k clusters survive whenever k <= n. Donors
        // must have at least two members or the repair would just move the
        // hole around.
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a as usize] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let farthest = points
                .iter()
                .enumerate()
                .filter(|(i, _)| sizes[assignment[*i] as usize] >= 2)
                .map(|(i, p)| (i, dist2(p, &centroids[assignment[i] as usize])))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((far_idx, _)) = farthest {
                let old = assignment[far_idx] as usize;
                sizes[old] -= 1;
                sizes[c] += 1;
                assignment[far_idx] = c as u32;
                centroids[c] = points[far_idx].clone();
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i] as usize;
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = std::mem::take(&mut sums[c]);
            }
        }

        inertia = new_inertia;
        inertia_history.push(new_inertia);
        if !changed {
            break;
        }
    }
    KmeansResult { assignment, centroids, inertia, inertia_history }
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform random assignment of `count` items to `k` clusters, resampled
/// until surjective. Beyond a bounded number of rejection rounds (the
/// surjectivity odds vanish as `k` approaches `count`) the remaining empty
/// clusters are filled by moving random members out of clusters with at
/// least two, which keeps the assignment uniform-like, surjective, and
/// deterministic in the seed.
pub fn random_aggregation(count: usize, k: usize, seed: u64) -> Result<Vec<u32>, ClusteringError> {
    if k == 0 {
        return Err(ClusteringError::ZeroClusters);
    }
    if k > count {
        return Err(ClusteringError::TooManyClusters { count, k });
    }
    let mut rng = stream(seed, Purpose::RandomAggregation, 0, 0);
    let mut assignment = vec![0u32; count];
    for _ in 0..64 {
        for slot in assignment.iter_mut() {
            *slot = rng.gen_range(0..k) as u32;
        }
        let mut seen = vec![false; k];
        for &a in &assignment {
            seen[a as usize] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(assignment);
        }
    }
    // Repair pass.
    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a as usize] += 1;
    }
    for c in 0..k {
        while sizes[c] == 0 {
            let donor = rng.gen_range(0..count);
            let from = assignment[donor] as usize;
            if sizes[from] >= 2 {
                sizes[from] -= 1;
                sizes[c] += 1;
                assignment[donor] = c as u32;
            }
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cluster_centroid_is_the_mean() {
        let points = vec![vec![0.0, 0.0], vec![2.0, 4.0], vec![4.0, 2.0]];
        let res = kmeans(&points, 1, 3, 7).unwrap();
        assert_eq!(res.centroids[0], vec![2.0, 2.0]);
        assert!(res.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn as_many_clusters_as_distinct_points_gives_zero_inertia() {
        let points = vec![vec![0.0], vec![10.0], vec![20.0], vec![30.0]];
        let res = kmeans(&points, 4, 5, 1).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut seen: Vec<u32> = res.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn recovers_two_well_separated_blobs() {
        // Gap between blobs far exceeds their diameters, so the optimal
        // 2-partition is the blob split; check against that directly.
        let mut points = Vec::new();
        for i in 0..20 {
            points.push(vec![i as f64 * 0.01, 0.0]);
            points.push(vec![1000.0 + i as f64 * 0.01, 0.0]);
        }
        let res = kmeans(&points, 2, 10, 3).unwrap();
        let first = res.assignment[0];
        let second = res.assignment[1];
        assert_ne!(first, second);
        for (i, &a) in res.assignment.iter().enumerate() {
            if i % 2 == 0 {
                assert_eq!(a, first);
            } else {
                assert_eq!(a, second);
            }
        }
    }

    #[test]
    fn deterministic_in_the_seed() {
        let points: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * 37 % 17) as f64, (i % 5) as f64]).collect();
        let a = kmeans(&points, 6, 20, 11).unwrap();
        let b = kmeans(&points, 6, 20, 11).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn inertia_history_never_increases() {
        let points: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![((i * 83) % 29) as f64, ((i * 31) % 13) as f64, (i % 7) as f64])
            .collect();
        let res = kmeans(&points, 8, 20, 5).unwrap();
        for w in res.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_clusters_is_an_error() {
        assert!(matches!(kmeans(&[vec![1.0]], 0, 1, 0), Err(ClusteringError::ZeroClusters)));
    }

    #[test]
    fn random_aggregation_is_surjective_and_deterministic() {
        let a = random_aggregation(100, 7, 3).unwrap();
        let b = random_aggregation(100, 7, 3).unwrap();
        assert_eq!(a, b);
        let mut seen = vec![false; 7];
        for &x in &a {
            seen[x as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn random_aggregation_edge_cases() {
        assert!(random_aggregation(5, 6, 0).is_err());
        let all_one = random_aggregation(9, 1, 0).unwrap();
        assert!(all_one.iter().all(|&a| a == 0));
        // k == count forces a bijection.
        let bijection = random_aggregation(40, 40, 2).unwrap();
        let mut sorted: Vec<u32> = bijection.clone();
        sorted.sort();
        assert_eq!(sorted, (0..40).collect::<Vec<u32>>());
    }
}
