//! Per-combination feature vectors used to aggregate similar combinations.

use crate::domain::{Combination, ProblemInstance};
use crate::parallel;
use crate::rng::{exponential, stream, Purpose};
use crate::stationary::StationarySolution;

/// Stationary-solution features: the relative reject value followed by the
/// stationary threshold of every class, `|K| + 1` entries per combination.
/// Thresholds of full combinations (where no task can be accepted) are
/// filled with zero; those combinations separate on the value coordinate.
pub fn features_stationary(solution: &StationarySolution) -> Vec<Vec<f64>> {
    let set = solution.combination_set();
    let n_classes = set.n_classes();
    (0..set.len())
        .map(|i| {
            let mut v = Vec::with_capacity(n_classes + 1);
            v.push(solution.relative_q(i));
            for k in 0..n_classes {
                v.push(solution.critical_price(i, k).unwrap_or(0.0));
            }
            v
        })
        .collect()
}

/// Order-statistics features of one combination: the expected time until at
/// least `q` servers are free, for `q = 1..=N_serv`, estimated as the
/// elementwise mean of `samples` sorted completion-time draws (free servers
/// contribute zero). The `q = 0` coordinate is identically zero and dropped,
/// so the vector has `N_serv` entries.
pub fn features_order_stats(
    instance: &ProblemInstance,
    combination: &Combination,
    samples: usize,
    seed: u64,
    combo_index: u64,
) -> Vec<f64> {
    assert!(samples >= 1);
    let n_servers = instance.n_servers as usize;
    let mut rng = stream(seed, Purpose::Features, combo_index, 0);
    let mut acc = vec![0.0f64; n_servers];
    let mut draw = vec![0.0f64; n_servers];
    for _ in 0..samples {
        let mut slot = 0;
        for (k, &busy) in combination.counts.iter().enumerate() {
            let mu = instance.classes[k].service_rate;
            for _ in 0..busy {
                draw[slot] = exponential(&mut rng, mu);
                slot += 1;
            }
        }
        for d in draw.iter_mut().skip(slot) {
            *d = 0.0;
        }
        draw.sort_by(f64::total_cmp);
        for (a, d) in acc.iter_mut().zip(&draw) {
            *a += d;
        }
    }
    for a in acc.iter_mut() {
        *a /= samples as f64;
    }
    acc
}

/// [`features_order_stats`] for every combination of the instance, in
/// combination order; parallel over combinations.
pub fn features_order_stats_all(instance: &ProblemInstance, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let set = instance.combination_set();
    parallel::map_range(set.len(), |i| {
        features_order_stats(instance, set.get(i), samples, seed, i as u64)
    })
}

/// Z-scores each feature dimension; dimensions with zero spread pass
/// through unchanged.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut mean = vec![0.0f64; dim];
    for p in points {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut sd = vec![0.0f64; dim];
    for p in points {
        for d in 0..dim {
            sd[d] += (p[d] - mean[d]) * (p[d] - mean[d]);
        }
    }
    for s in sd.iter_mut() {
        *s = (*s / n).sqrt();
    }
    points
        .iter()
        .map(|p| {
            (0..dim)
                .map(|d| if sd[d] > 0.0 { (p[d] - mean[d]) / sd[d] } else { p[d] })
                .collect()
        })
        .collect()
}
