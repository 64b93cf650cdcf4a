//! Average-reward solution of the constant-rate variant.
//!
//! Arrival rates are replaced by their horizon means and the horizon by an
//! infinite one, which makes the optimal policy stationary. Decision epochs
//! sit at arrivals and completions, so sojourn times are exponential with
//! state-dependent rate `Lambda_total(n) = sum_k E[Lambda_k] + sum_k n_k
//! mu_k`. The chain is uniformized with a constant `eta` strictly below
//! every expected sojourn and solved by relative value iteration; thresholds
//! are the relative-value differences `h(n) - h(n + e_k)`, and the expected
//! gain of an arrival folds into the mean-shortage function exactly as in
//! the finite-horizon backup.

use crate::domain::{CombinationSet, ProblemInstance};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("combination count {count} exceeds the stationary solver budget {budget}")]
    TooManyCombinations { count: usize, budget: usize },
    #[error(
        "relative value iteration did not converge: span {span:.3e} > tolerance {tolerance:.3e} after {iterations} sweeps (gain estimate {gain:.6})"
    )]
    NoConvergence { span: f64, tolerance: f64, iterations: usize, gain: f64 },
    #[error("reference combination is not part of the state space")]
    BadReference,
}

#[derive(Clone, Debug)]
pub struct StationaryOptions {
    /// Refuse instances with more combinations than this.
    pub max_combinations: usize,
    pub max_iterations: usize,
    /// Stop when the span of successive relative-value differences drops
    /// below `span_tolerance_factor * mean price`.
    pub span_tolerance_factor: f64,
    /// Uniformization constant as a fraction of the tightest sojourn bound;
    /// must be strictly below 1.
    pub eta_safety: f64,
    /// Combination whose relative value is pinned to zero. Defaults to the
    /// all-free combination.
    pub reference: Option<Vec<u16>>,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            max_combinations: 2_000_000,
            max_iterations: 2_000_000,
            span_tolerance_factor: 1e-9,
            eta_safety: 0.9,
            reference: None,
        }
    }
}

/// Relative values, stationary thresholds, and the long-run reward rate.
#[derive(Debug)]
pub struct StationarySolution {
    set: CombinationSet,
    relative_q: Vec<f64>,
    /// `(combo, class)`-major; slots of full combinations hold 0 and are
    /// reported as `None`.
    critical_price: Vec<f64>,
    full: Vec<bool>,
    gain: f64,
    mean_rates: Vec<f64>,
    iterations: usize,
}

impl StationarySolution {
    pub fn combination_set(&self) -> &CombinationSet {
        &self.set
    }

    /// Relative value of holding `combo` (reject value up to the shared
    /// additive constant; the reference combination is exactly 0).
    pub fn relative_q(&self, combo: usize) -> f64 {
        self.relative_q[combo]
    }

    /// Stationary critical price, `None` when the combination is full.
    pub fn critical_price(&self, combo: usize, class: usize) -> Option<f64> {
        if self.full[combo] {
            return None;
        }
        Some(self.critical_price[combo * self.set.n_classes() + class])
    }

    /// Long-run expected reward per second under the optimal stationary
    /// policy.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn mean_rates(&self) -> &[f64] {
        &self.mean_rates
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Combined event rate at a combination: mean arrivals plus busy-server
/// completions. Its reciprocal is the expected time to the next decision
/// epoch.
pub fn total_rate(counts: &[u16], mean_rates: &[f64], service_rates: &[f64]) -> f64 {
    let arrivals: f64 = mean_rates.iter().sum();
    let completions: f64 = counts.iter().zip(service_rates).map(|(&n, &mu)| n as f64 * mu).sum();
    arrivals + completions
}

pub fn solve_stationary(instance: &ProblemInstance) -> Result<StationarySolution, StationaryError> {
    solve_stationary_with(instance, &StationaryOptions::default())
}

pub fn solve_stationary_with(
    instance: &ProblemInstance,
    options: &StationaryOptions,
) -> Result<StationarySolution, StationaryError> {
    let set = instance.combination_set();
    let n = set.len();
    if n > options.max_combinations {
        return Err(StationaryError::TooManyCombinations { count: n, budget: options.max_combinations });
    }
    let n_classes = instance.n_classes();
    let mean_rates = instance.mean_rates();
    let service_rates: Vec<f64> = instance.classes.iter().map(|c| c.service_rate).collect();
    let full: Vec<bool> = set.combos().iter().map(|c| c.is_full(instance.n_servers)).collect();

    let total_mean: f64 = mean_rates.iter().sum();
    if total_mean <= 0.0 {
        // No arrivals ever: zero gain, flat relative values, zero thresholds.
        return Ok(StationarySolution {
            critical_price: vec![0.0; n * n_classes],
            relative_q: vec![0.0; n],
            full,
            gain: 0.0,
            mean_rates,
            iterations: 0,
            set,
        });
    }

    let reference = match &options.reference {
        Some(counts) => set.index_of(counts).ok_or(StationaryError::BadReference)?,
        None => 0,
    };

    // eta strictly below 1 / Lambda_total for every combination; the rate is
    // maximised by filling all servers with the fastest class.
    let max_mu = service_rates.iter().cloned().fold(0.0, f64::max);
    let max_total = total_mean + instance.n_servers as f64 * max_mu;
    let eta = options.eta_safety / max_total;

    let weighted_mean_price: f64 = instance
        .classes
        .iter()
        .zip(&mean_rates)
        .map(|(c, &r)| r * c.price.mean())
        .sum::<f64>()
        / total_mean;
    let tolerance = options.span_tolerance_factor * weighted_mean_price;

    let down_idx: Vec<u32> = (0..n)
        .flat_map(|i| {
            let counts = &set.get(i).counts;
            (0..n_classes)
                .map(|k| {
                    if counts[k] == 0 {
                        u32::MAX
                    } else {
                        let mut c = counts.clone();
                        c[k] -= 1;
                        set.index_of(&c).unwrap() as u32
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let up_idx: Vec<u32> = (0..n)
        .flat_map(|i| {
            (0..n_classes)
                .map(|k| set.accept_index(i, k).map(|j| j as u32).unwrap_or(u32::MAX))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut h = vec![0.0f64; n];
    let mut last_span = f64::INFINITY;
    let mut last_gain = 0.0;
    for sweep in 0..options.max_iterations {
        let mut next = vec![0.0f64; n];
        for i in 0..n {
            let counts = &set.get(i).counts;
            let mut delta = 0.0;
            for k in 0..n_classes {
                if counts[k] > 0 {
                    let j = down_idx[i * n_classes + k] as usize;
                    delta += service_rates[k] * counts[k] as f64 * (h[j] - h[i]);
                }
                if !full[i] && mean_rates[k] > 0.0 {
                    let j = up_idx[i * n_classes + k] as usize;
                    let threshold = h[i] - h[j];
                    delta += mean_rates[k] * instance.classes[k].price.mean_shortage(threshold);
                }
            }
            next[i] = h[i] + eta * delta;
        }
        // The reference row is renormalized to zero every sweep, so its raw
        // increment estimates eta times the gain; the span midpoint at
        // convergence is the tighter two-sided estimate.
        let offset = next[reference];
        let mut span_lo = f64::INFINITY;
        let mut span_hi = f64::NEG_INFINITY;
        for i in 0..n {
            let d = next[i] - h[i];
            span_lo = span_lo.min(d);
            span_hi = span_hi.max(d);
            h[i] = next[i] - offset;
        }
        last_span = span_hi - span_lo;
        last_gain = 0.5 * (span_hi + span_lo) / eta;
        if last_span < tolerance {
            let mut critical_price = vec![0.0f64; n * n_classes];
            for i in 0..n {
                if full[i] {
                    continue;
                }
                for k in 0..n_classes {
                    let j = up_idx[i * n_classes + k] as usize;
                    critical_price[i * n_classes + k] = (h[i] - h[j]).max(0.0);
                }
            }
            return Ok(StationarySolution {
                set,
                relative_q: h,
                critical_price,
                full,
                gain: last_gain,
                mean_rates,
                iterations: sweep + 1,
            });
        }
    }
    Err(StationaryError::NoConvergence {
        span: last_span,
        tolerance,
        iterations: options.max_iterations,
        gain: last_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ArrivalRateFn, PriceDistribution, TaskClass};
    use approx::assert_relative_eq;

    fn constant_instance(rates: &[f64], mus: &[f64], scales: &[f64], n_servers: u16) -> ProblemInstance {
        let classes = rates
            .iter()
            .zip(mus)
            .zip(scales)
            .enumerate()
            .map(|(i, ((&r, &mu), &s))| {
                TaskClass::new(
                    format!("c{i}"),
                    mu,
                    ArrivalRateFn::constant(r).unwrap(),
                    PriceDistribution::lomax(3.0, s).unwrap(),
                )
                .unwrap()
            })
            .collect();
        ProblemInstance::new(classes, n_servers, 1000.0, 1.0).unwrap()
    }

    #[test]
    fn total_rate_is_additive_in_busy_servers() {
        let mean_rates = [0.1, 0.2];
        let mus = [0.01, 0.05];
        let base = total_rate(&[0, 0], &mean_rates, &mus);
        assert_relative_eq!(base, 0.3);
        assert_relative_eq!(total_rate(&[1, 0], &mean_rates, &mus), base + 0.01);
        assert_relative_eq!(total_rate(&[1, 2], &mean_rates, &mus), base + 0.01 + 0.1);
    }

    #[test]
    fn zero_rates_solve_trivially() {
        let inst = constant_instance(&[0.0], &[0.01], &[100.0], 2);
        let sol = solve_stationary(&inst).unwrap();
        assert_eq!(sol.gain(), 0.0);
        for i in 0..sol.combination_set().len() {
            assert_eq!(sol.relative_q(i), 0.0);
        }
    }

    #[test]
    fn gain_is_positive_and_thresholds_monotone_under_load() {
        let inst = constant_instance(&[0.05, 0.02], &[0.01, 0.002], &[100.0, 400.0], 3);
        let sol = solve_stationary(&inst).unwrap();
        assert!(sol.gain() > 0.0);
        let set = sol.combination_set();
        for i in 0..set.len() {
            for k in 0..2 {
                match sol.critical_price(i, k) {
                    Some(p) => assert!(p >= 0.0),
                    None => assert!(set.get(i).is_full(3)),
                }
            }
        }
        // Busier states carry higher thresholds for the empty-to-busy chain.
        let empty = set.index_of(&[0, 0]).unwrap();
        let busier = set.index_of(&[2, 0]).unwrap();
        assert!(
            sol.critical_price(busier, 0).unwrap() >= sol.critical_price(empty, 0).unwrap() - 1e-9
        );
    }

    #[test]
    fn gain_does_not_depend_on_the_reference_combination() {
        let inst = constant_instance(&[0.05, 0.03], &[0.01, 0.004], &[150.0, 600.0], 3);
        let a = solve_stationary(&inst).unwrap();
        let b = solve_stationary_with(
            &inst,
            &StationaryOptions { reference: Some(vec![1, 1]), ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(a.gain(), b.gain(), max_relative = 1e-6);
        // Relative values agree up to the additive constant.
        let set = a.combination_set();
        let shift = a.relative_q(set.index_of(&[1, 1]).unwrap());
        for i in 0..set.len() {
            assert_relative_eq!(a.relative_q(i) - shift, b.relative_q(i), epsilon = 1e-6);
        }
    }

    #[test]
    fn oversized_state_spaces_are_refused() {
        let inst = constant_instance(&[0.05], &[0.01], &[100.0], 30);
        let err = solve_stationary_with(
            &inst,
            &StationaryOptions { max_combinations: 10, ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, StationaryError::TooManyCombinations { count: 31, budget: 10 }));
    }

    #[test]
    fn plentiful_servers_drive_thresholds_to_zero() {
        // With far more servers than offered load there is no opportunity
        // cost to accepting, so every threshold collapses to zero.
        let inst = constant_instance(&[0.001], &[0.1], &[100.0], 20);
        let sol = solve_stationary(&inst).unwrap();
        let set = sol.combination_set();
        let mean_price = 50.0;
        for i in 0..set.len() {
            if let Some(p) = sol.critical_price(i, 0) {
                if set.get(i).counts[0] <= 10 {
                    assert!(p < 1e-6 * mean_price, "threshold {p} at {:?}", set.get(i).counts);
                }
            }
        }
    }

    /// Uniformized transition rows under a fixed threshold policy must be
    /// proper distributions.
    #[test]
    fn uniformized_rows_are_stochastic() {
        let inst = constant_instance(&[0.05, 0.02], &[0.01, 0.002], &[100.0, 400.0], 3);
        let set = inst.combination_set();
        let mean_rates = inst.mean_rates();
        let mus: Vec<f64> = inst.classes.iter().map(|c| c.service_rate).collect();
        let max_total = mean_rates.iter().sum::<f64>() + 3.0 * 0.01;
        let eta = 0.9 / max_total;
        for i in 0..set.len() {
            let counts = &set.get(i).counts;
            let mut row = vec![0.0f64; set.len()];
            let mut off_diagonal = 0.0;
            for k in 0..2 {
                if counts[k] > 0 {
                    let mut c = counts.clone();
                    c[k] -= 1;
                    let j = set.index_of(&c).unwrap();
                    let p = eta * mus[k] * counts[k] as f64;
                    row[j] += p;
                    off_diagonal += p;
                }
                if !set.get(i).is_full(3) {
                    let j = set.accept_index(i, k).unwrap();
                    let threshold = 120.0;
                    let accept_prob = 1.0 - inst.classes[k].price.cdf(threshold);
                    let p = eta * mean_rates[k] * accept_prob;
                    row[j] += p;
                    off_diagonal += p;
                }
            }
            row[i] += 1.0 - off_diagonal;
            assert!(row[i] > 0.0, "self-loop must stay positive for aperiodicity");
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }
}
