//! Comparison policies: average-class value iteration, stationary
//! thresholds, and grid-searched proportional thresholds.

use crate::domain::{ArrivalRateFn, PriceDistribution, ProblemInstance, TaskClass};
use crate::parallel;
use crate::rng::{stream, Purpose};
use crate::sim::{evaluate_sequential, Action, Policy};
use crate::solver::{solve_with_options, SolveOptions, SolvedTables, SolverError};
use crate::stationary::StationarySolution;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("all mean arrival rates are zero; the average class is undefined")]
    AllRatesZero,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Domain(#[from] crate::domain::DomainError),
}

/// How the average class combines service rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AvgRateMode {
    #[default]
    Arithmetic,
    Harmonic,
}

/// Mean-arrival-rate weights of each class, proportional to the time-average
/// of its rate function over the horizon.
pub fn class_weights(instance: &ProblemInstance) -> Result<Vec<f64>, BaselineError> {
    let means = instance.mean_rates();
    let total: f64 = means.iter().sum();
    if total <= 0.0 {
        return Err(BaselineError::AllRatesZero);
    }
    Ok(means.iter().map(|m| m / total).collect())
}

/// Policy from value iteration on a single pooled "average" class: the
/// pooled arrival rate is the sum of the class rates, the price distribution
/// the rate-weighted mixture, and the service rate the weighted average.
/// Every arrival is then treated as the average class, so only the total
/// busy count matters.
pub struct AvgClassPolicy {
    tables: SolvedTables,
}

impl AvgClassPolicy {
    pub fn tables(&self) -> &SolvedTables {
        &self.tables
    }

    pub fn decide_at_epoch(&self, counts: &[u16], price: f64, epoch: usize) -> Action {
        let busy: u16 = counts.iter().sum();
        // With one class, combination index equals the busy count.
        match self.tables.critical_price(busy as usize, 0, epoch) {
            Some(threshold) if price >= threshold => Action::Accept,
            _ => Action::Reject,
        }
    }
}

impl Policy for AvgClassPolicy {
    fn decide(&self, counts: &[u16], _class: usize, price: f64, t: f64) -> Action {
        let epoch = ((t / self.tables.dt()).floor() as usize).min(self.tables.n_epochs().saturating_sub(1));
        self.decide_at_epoch(counts, price, epoch)
    }
}

pub fn build_avg_class(instance: &ProblemInstance, mode: AvgRateMode) -> Result<AvgClassPolicy, BaselineError> {
    build_avg_class_with(instance, mode, SolveOptions::default(), true)
}

pub fn build_avg_class_with(
    instance: &ProblemInstance,
    mode: AvgRateMode,
    options: SolveOptions,
    parallel: bool,
) -> Result<AvgClassPolicy, BaselineError> {
    let weights = class_weights(instance)?;
    let service_rate = match mode {
        AvgRateMode::Arithmetic => {
            weights.iter().zip(&instance.classes).map(|(w, c)| w * c.service_rate).sum()
        }
        AvgRateMode::Harmonic => {
            1.0 / weights.iter().zip(&instance.classes).map(|(w, c)| w / c.service_rate).sum::<f64>()
        }
    };
    let arrival = ArrivalRateFn::Sum(instance.classes.iter().map(|c| c.arrival.clone()).collect());
    let price = PriceDistribution::mixture(
        weights.iter().zip(&instance.classes).map(|(&w, c)| (w, c.price.clone())).collect(),
    )?;
    let pooled = TaskClass::new("average", service_rate, arrival, price)?;
    let avg_instance = ProblemInstance::new(vec![pooled], instance.n_servers, instance.horizon, instance.dt)?;
    let tables = solve_with_options(&avg_instance, options, parallel)?;
    Ok(AvgClassPolicy { tables })
}

/// Time-invariant thresholds taken from the stationary solution.
pub struct StationaryPolicy<'a> {
    solution: &'a StationarySolution,
}

impl<'a> StationaryPolicy<'a> {
    pub fn new(solution: &'a StationarySolution) -> Self {
        Self { solution }
    }
}

impl Policy for StationaryPolicy<'_> {
    fn decide(&self, counts: &[u16], class: usize, price: f64, _t: f64) -> Action {
        let combo = self
            .solution
            .combination_set()
            .index_of(counts)
            .expect("state belongs to the instance");
        match self.solution.critical_price(combo, class) {
            Some(threshold) if price >= threshold => Action::Accept,
            _ => Action::Reject,
        }
    }
}

/// Per-class thresholds `C / mu_k`, state- and time-invariant apart from the
/// free-server requirement.
pub struct GridPolicy {
    pub c: f64,
    thresholds: Vec<f64>,
    n_servers: u16,
}

impl GridPolicy {
    pub fn new(instance: &ProblemInstance, c: f64) -> Self {
        let thresholds = instance.classes.iter().map(|cl| c / cl.service_rate).collect();
        Self { c, thresholds, n_servers: instance.n_servers }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Policy for GridPolicy {
    fn decide(&self, counts: &[u16], class: usize, price: f64, _t: f64) -> Action {
        let busy: u16 = counts.iter().sum();
        if busy >= self.n_servers {
            return Action::Reject;
        }
        if price >= self.thresholds[class] {
            Action::Accept
        } else {
            Action::Reject
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridSearchReport {
    pub c_values: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub best_index: usize,
}

/// Default grid bounds: wide enough that the low end accepts almost
/// everything and the high end rejects almost everything.
pub fn default_grid_bounds(instance: &ProblemInstance) -> Result<(f64, f64), BaselineError> {
    let weights = class_weights(instance)?;
    let mean_price: f64 = weights.iter().zip(&instance.classes).map(|(w, c)| w * c.price.mean()).sum();
    let mu_max = instance.classes.iter().map(|c| c.service_rate).fold(f64::NEG_INFINITY, f64::max);
    let mu_min = instance.classes.iter().map(|c| c.service_rate).fold(f64::INFINITY, f64::min);
    Ok((1e-2 * mean_price * mu_max, 1e3 * mean_price * mu_min))
}

/// `count` log-spaced values across `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let ratio = (hi / lo).ln();
    (0..count).map(|i| lo * (ratio * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Tunes the proportionality constant by simulation: every candidate is
/// evaluated over its own tuning episodes (seeded disjointly from
/// evaluation episodes via the grid-search stream), and the best mean wins.
/// Candidates run in parallel.
pub fn grid_search(
    instance: &ProblemInstance,
    candidates: usize,
    episodes_per_candidate: usize,
    seed: u64,
    bounds: Option<(f64, f64)>,
) -> Result<(GridPolicy, GridSearchReport), BaselineError> {
    let (lo, hi) = match bounds {
        Some(b) => b,
        None => default_grid_bounds(instance)?,
    };
    let c_values = log_spaced(lo, hi, candidates);
    let results = parallel::map_range(candidates, |i| {
        let policy = GridPolicy::new(instance, c_values[i]);
        let tuning_base: u64 = stream(seed, Purpose::GridSearch, i as u64, 0).gen();
        let eval = evaluate_sequential(instance, &policy, episodes_per_candidate, tuning_base);
        (eval.mean_reward, eval.std_error)
    });
    let best_index = results
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.0.total_cmp(&b.0).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    let report = GridSearchReport {
        c_values: c_values.clone(),
        means: results.iter().map(|r| r.0).collect(),
        std_errors: results.iter().map(|r| r.1).collect(),
        best_index,
    };
    Ok((GridPolicy::new(instance, c_values[best_index]), report))
}
