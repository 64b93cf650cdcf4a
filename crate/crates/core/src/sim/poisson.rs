//! Inhomogeneous Poisson arrival sampling by thinning.

use crate::domain::ArrivalRateFn;
use crate::rng::exponential;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("arrival rate has no finite upper bound on the horizon; thinning needs an envelope")]
    UnboundedRate,
}

/// Samples the ordered arrival times of one class on `[0, horizon)`.
///
/// Candidate times come from a homogeneous process at the rate's upper
/// bound; each candidate is kept with probability `rate(t) / bound`. For a
/// constant rate the envelope is tight and every candidate is kept.
pub fn sample_arrivals<R: Rng>(
    rate: &ArrivalRateFn,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<f64>, PoissonError> {
    let bound = rate.upper_bound(horizon);
    if !bound.is_finite() {
        return Err(PoissonError::UnboundedRate);
    }
    let mut out = Vec::new();
    if bound <= 0.0 {
        return Ok(out);
    }
    let mut t = 0.0;
    loop {
        t += exponential(rng, bound);
        if t >= horizon {
            break;
        }
        let keep: f64 = rng.gen();
        if keep < rate.value(t) / bound {
            out.push(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn zero_rate_yields_no_arrivals() {
        let rate = ArrivalRateFn::constant(0.0).unwrap();
        let mut rng = stream(3, Purpose::EpisodeArrivals, 0, 0);
        assert!(sample_arrivals(&rate, 100.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn output_is_sorted_and_within_horizon() {
        let rate = ArrivalRateFn::sinusoid(0.5, 0.4, 40.0, 0.7).unwrap();
        let mut rng = stream(3, Purpose::EpisodeArrivals, 1, 0);
        let times = sample_arrivals(&rate, 200.0, &mut rng).unwrap();
        assert!(!times.is_empty());
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(times.iter().all(|&t| (0.0..200.0).contains(&t)));
    }

    #[test]
    fn constant_rate_interarrivals_pass_a_ks_test() {
        // With a constant rate thinning keeps every candidate, so the gaps
        // must be exponential. One-sample KS test against that CDF.
        let rate_val = 0.8;
        let rate = ArrivalRateFn::constant(rate_val).unwrap();
        let mut rng = stream(11, Purpose::EpisodeArrivals, 2, 0);
        let mut gaps = Vec::new();
        let mut last_end;
        while gaps.len() < 10_000 {
            let times = sample_arrivals(&rate, 2_000.0, &mut rng).unwrap();
            last_end = 0.0;
            for t in times {
                gaps.push(t - last_end);
                last_end = t;
                if gaps.len() == 10_000 {
                    break;
                }
            }
        }
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &g) in gaps.iter().enumerate() {
            let cdf = 1.0 - (-rate_val * g).exp();
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Asymptotic Kolmogorov p-value.
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for j in 1..=100 {
            let j = j as f64;
            p += 2.0 * (-1.0f64).powi(j as i32 + 1) * (-2.0 * j * j * lambda * lambda).exp();
        }
        assert!(p > 0.01, "KS statistic {d}, p {p}");
    }

    #[test]
    fn sinusoid_counts_match_the_rate_integral() {
        let horizon = 500.0;
        let rate = ArrivalRateFn::sinusoid(0.3, 0.25, 120.0, -0.5).unwrap();
        let expect = rate.mean_over(horizon) * horizon;
        let episodes = 10_000usize;
        let mut counts = Vec::with_capacity(episodes);
        for e in 0..episodes {
            let mut rng = stream(5, Purpose::EpisodeArrivals, e as u64, 0);
            counts.push(sample_arrivals(&rate, horizon, &mut rng).unwrap().len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / episodes as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (episodes - 1) as f64;
        let se = (var / episodes as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs integral {expect} (3 SE = {})",
            3.0 * se
        );
    }
}
