//! Exact finite-horizon solver.
//!
//! Backward induction over the epoch grid. The value of holding a given
//! busy-server combination with no task pending ("reject value") and the
//! per-class critical price — the threshold above which accepting a task is
//! optimal — are the only quantities needed to act optimally in any state,
//! because the value function is piecewise linear in the task price: the
//! expected gain of an offered task above the threshold collapses into the
//! price distribution's mean-shortage function.

mod dump;
mod transition;

pub use dump::DumpError;
pub use transition::{
    prob_class_arrival, prob_fin, prob_no_arrival, server_transition_prob, ClassMatrices,
    SuccessorTable,
};

use crate::domain::{Combination, CombinationSet, ProblemInstance};
use crate::parallel;
use crate::sim::{Action, Policy};
use thiserror::Error;

/// Marker index for "no successor: combination is full".
const FULL: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("estimated table size exceeds the memory budget: {0}")]
    MemoryBudget(SizingReport),
}

/// Table sizing, reported when a solve is refused.
#[derive(Clone, Copy, Debug)]
pub struct SizingReport {
    pub combinations: usize,
    pub epochs: usize,
    pub reject_q_bytes: u64,
    pub critical_price_bytes: u64,
    pub total_bytes: u64,
    pub budget_bytes: u64,
}

impl std::fmt::Display for SizingReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} combinations x {} epochs: reject-Q {} B + critical-price {} B = {} B (budget {} B)",
            self.combinations,
            self.epochs,
            self.reject_q_bytes,
            self.critical_price_bytes,
            self.total_bytes,
            self.budget_bytes
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Refuse to solve when the dense tables would exceed this many bytes.
    pub memory_budget_bytes: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { memory_budget_bytes: 8 << 30 }
    }
}

/// A planner state: busy counts, the pending task (class and price) if any,
/// and the epoch index.
#[derive(Clone, Debug)]
pub struct StateView {
    pub n: Combination,
    pub k_plus: Option<usize>,
    pub p: f64,
    pub t: usize,
}

impl StateView {
    /// State with a pending task.
    pub fn offered(n: Combination, class: usize, p: f64, t: usize) -> Self {
        Self { n, k_plus: Some(class), p, t }
    }

    /// State with no pending task; the price slot is pinned to zero.
    pub fn idle(n: Combination, t: usize) -> Self {
        Self { n, k_plus: None, p: 0.0, t }
    }
}

/// Solved reject-value and critical-price tables for every combination and
/// epoch, plus the instance metadata needed to act on them.
#[derive(Debug)]
pub struct SolvedTables {
    set: CombinationSet,
    service_rates: Vec<f64>,
    dt: f64,
    horizon: f64,
    n_epochs: usize,
    /// Epoch-major: `reject_q[epoch * n_combos + combo]`.
    reject_q: Vec<f64>,
    /// Epoch-major: `critical_price[(epoch * n_combos + combo) * n_classes + class]`.
    critical_price: Vec<f64>,
    full: Vec<bool>,
}

impl SolvedTables {
    pub fn combination_set(&self) -> &CombinationSet {
        &self.set
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn epoch_time(&self, i: usize) -> f64 {
        (i as f64 * self.dt).min(self.horizon)
    }

    /// Value of rejecting (equivalently: holding) at `(combo, epoch)`.
    pub fn reject_q(&self, combo: usize, epoch: usize) -> f64 {
        self.reject_q[epoch * self.set.len() + combo]
    }

    /// Critical price for accepting `class` at `(combo, epoch)`; `None` when
    /// the combination has no free server and acceptance is disabled.
    pub fn critical_price(&self, combo: usize, class: usize, epoch: usize) -> Option<f64> {
        if self.full[combo] {
            return None;
        }
        Some(self.critical_price_raw(combo, class, epoch))
    }

    fn critical_price_raw(&self, combo: usize, class: usize, epoch: usize) -> f64 {
        let k = self.set.n_classes();
        self.critical_price[(epoch * self.set.len() + combo) * k + class]
    }

    /// Threshold policy: accept exactly when a task is pending, a server is
    /// free, and the price reaches the critical price.
    pub fn decide(&self, state: &StateView) -> Action {
        let Some(class) = state.k_plus else { return Action::Reject };
        let combo = self.set.index_of(&state.n.counts).expect("state combination belongs to the instance");
        match self.critical_price(combo, class, state.t) {
            Some(threshold) if state.p >= threshold => Action::Accept,
            _ => Action::Reject,
        }
    }

    /// Optimal value of a state: the reject value, plus the completion-odds
    /// weighted excess of the pending price over the threshold when
    /// accepting is optimal.
    pub fn value_at(&self, state: &StateView) -> f64 {
        let combo = self.set.index_of(&state.n.counts).expect("state combination belongs to the instance");
        let base = self.reject_q(combo, state.t);
        let Some(class) = state.k_plus else { return base };
        match self.critical_price(combo, class, state.t) {
            Some(threshold) if state.p >= threshold => {
                let pf = prob_fin(self.service_rates[class], self.epoch_time(state.t), self.horizon);
                pf * (state.p - threshold) + base
            }
            _ => base,
        }
    }

    /// Memory estimate for solving `instance` with dense tables.
    pub fn sizing(instance: &ProblemInstance, budget_bytes: u64) -> SizingReport {
        let combos = crate::domain::combination_count(instance.n_servers, instance.n_classes());
        let grid = instance.n_epochs() as u64 + 1;
        let reject_q_bytes = combos * grid * 8;
        let critical_price_bytes = combos * grid * instance.n_classes() as u64 * 8;
        SizingReport {
            combinations: combos as usize,
            epochs: instance.n_epochs(),
            reject_q_bytes,
            critical_price_bytes,
            total_bytes: reject_q_bytes + critical_price_bytes,
            budget_bytes: budget_bytes,
        }
    }
}

/// Solves `instance` by backward induction, in parallel within each epoch
/// when the `parallel` feature is enabled.
pub fn solve(instance: &ProblemInstance) -> Result<SolvedTables, SolverError> {
    solve_with_options(instance, SolveOptions::default(), true)
}

/// Sequential variant of [`solve`]; same results, no thread pool.
pub fn solve_sequential(instance: &ProblemInstance) -> Result<SolvedTables, SolverError> {
    solve_with_options(instance, SolveOptions::default(), false)
}

pub fn solve_with_options(
    instance: &ProblemInstance,
    options: SolveOptions,
    parallel: bool,
) -> Result<SolvedTables, SolverError> {
    let sizing = SolvedTables::sizing(instance, options.memory_budget_bytes);
    if sizing.total_bytes > options.memory_budget_bytes {
        return Err(SolverError::MemoryBudget(sizing));
    }

    let set = instance.combination_set();
    let n_combos = set.len();
    let n_classes = instance.n_classes();
    let n_epochs = instance.n_epochs();
    let grid = n_epochs + 1;
    let matrices = ClassMatrices::new(instance);
    let successors = SuccessorTable::new(&set, &matrices);

    let full: Vec<bool> = set.combos().iter().map(|c| c.is_full(instance.n_servers)).collect();
    let accept_idx: Vec<u32> = (0..n_combos)
        .flat_map(|i| {
            (0..n_classes)
                .map(|k| set.accept_index(i, k).map(|j| j as u32).unwrap_or(FULL))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut reject_q = vec![0.0f64; grid * n_combos];
    let mut critical_price = vec![0.0f64; grid * n_combos * n_classes];
    let service_rates: Vec<f64> = instance.classes.iter().map(|c| c.service_rate).collect();

    // Boundary at the horizon is all zeros, already in place.
    for epoch in (0..n_epochs).rev() {
        let t_i = instance.epoch_time(epoch);
        let t_next = instance.epoch_time(epoch + 1);
        let width = t_next - t_i;

        let rates: Vec<f64> = instance.classes.iter().map(|c| c.arrival.value(t_i)).collect();
        let total_rate: f64 = rates.iter().sum();
        // Arrival mass times completion odds, per class, folded into the
        // expected excess-value term of each successor.
        let arr_pf: Vec<f64> = (0..n_classes)
            .map(|k| {
                prob_class_arrival(rates[k], total_rate, width)
                    * prob_fin(service_rates[k], t_next, instance.horizon)
            })
            .collect();

        let (head, tail) = reject_q.split_at_mut((epoch + 1) * n_combos);
        let q_cur = &mut head[epoch * n_combos..];
        let q_next = &tail[..n_combos];
        let pcr_next = &critical_price[(epoch + 1) * n_combos * n_classes..(epoch + 2) * n_combos * n_classes];

        // Expected continuation value of landing on each successor, with the
        // pending-task excess term disabled for full combinations (no free
        // server means no accept branch).
        let g: Vec<f64> = parallel::map_range_with(parallel, n_combos, |j| {
            let mut v = q_next[j];
            if !full[j] {
                let row = &pcr_next[j * n_classes..(j + 1) * n_classes];
                for k in 0..n_classes {
                    if arr_pf[k] > 0.0 {
                        v += arr_pf[k] * instance.classes[k].price.mean_shortage(row[k]);
                    }
                }
            }
            v
        });

        let q_new: Vec<f64> = parallel::map_range_with(parallel, n_combos, |i| {
            let mut v = 0.0;
            for &(j, w) in successors.successors(i) {
                v += w * g[j as usize];
            }
            debug_assert!(v > -1e-12);
            v.max(0.0)
        });
        q_cur.copy_from_slice(&q_new);

        let pcr_cur = &mut critical_price[epoch * n_combos * n_classes..(epoch + 1) * n_combos * n_classes];
        for i in 0..n_combos {
            if full[i] {
                continue;
            }
            for k in 0..n_classes {
                let j = accept_idx[i * n_classes + k] as usize;
                let pf = prob_fin(service_rates[k], t_i, instance.horizon);
                let pcr = if pf > 0.0 { (q_new[i] - q_new[j]) / pf } else { 0.0 };
                debug_assert!(pcr > -1e-9, "critical price {pcr} at combo {i} class {k} epoch {epoch}");
                pcr_cur[i * n_classes + k] = pcr.max(0.0);
            }
        }
    }

    Ok(SolvedTables {
        set,
        service_rates,
        dt: instance.dt,
        horizon: instance.horizon,
        n_epochs,
        reject_q,
        critical_price,
        full,
    })
}

/// [`Policy`] adapter for solved tables: consults the threshold at the
/// latest epoch not later than the arrival time.
pub struct TablePolicy<'a> {
    tables: &'a SolvedTables,
}

impl<'a> TablePolicy<'a> {
    pub fn new(tables: &'a SolvedTables) -> Self {
        Self { tables }
    }

    fn epoch_at(&self, t: f64) -> usize {
        let i = (t / self.tables.dt).floor() as usize;
        i.min(self.tables.n_epochs.saturating_sub(1))
    }
}

impl Policy for TablePolicy<'_> {
    fn decide(&self, counts: &[u16], class: usize, price: f64, t: f64) -> Action {
        let combo = self.tables.set.index_of(counts).expect("simulated state belongs to the instance");
        match self.tables.critical_price(combo, class, self.epoch_at(t)) {
            Some(threshold) if price >= threshold => Action::Accept,
            _ => Action::Reject,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ArrivalRateFn, PriceDistribution, TaskClass};
    use approx::assert_relative_eq;

    fn single_class_instance(rate: f64, mu: f64, n_servers: u16, horizon: f64, dt: f64) -> ProblemInstance {
        let class = TaskClass::new(
            "only",
            mu,
            ArrivalRateFn::constant(rate).unwrap(),
            PriceDistribution::lomax(3.0, 100.0).unwrap(),
        )
        .unwrap();
        ProblemInstance::new(vec![class], n_servers, horizon, dt).unwrap()
    }

    #[test]
    fn zero_rates_solve_to_zero_tables() {
        let inst = single_class_instance(0.0, 0.01, 3, 50.0, 5.0);
        let tables = solve(&inst).unwrap();
        for epoch in 0..=tables.n_epochs() {
            for combo in 0..tables.combination_set().len() {
                assert_eq!(tables.reject_q(combo, epoch), 0.0);
            }
        }
    }

    #[test]
    fn boundary_epochs_are_zero() {
        let inst = single_class_instance(0.3, 0.02, 2, 40.0, 4.0);
        let tables = solve(&inst).unwrap();
        let e = tables.n_epochs();
        for combo in 0..tables.combination_set().len() {
            assert_eq!(tables.reject_q(combo, e), 0.0);
            // One step before the horizon the reject value is still zero:
            // nothing offered there can complete by the horizon.
            assert_eq!(tables.reject_q(combo, e - 1), 0.0);
            for class in 0..1 {
                if let Some(p) = tables.critical_price(combo, class, e) {
                    assert_eq!(p, 0.0);
                }
                if let Some(p) = tables.critical_price(combo, class, e - 1) {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn two_steps_from_horizon_matches_hand_expansion() {
        // With constant rate, the backup two steps from the horizon reduces
        // to P(arrival) * P(finish in one step) * mean price, for every
        // combination that still has a free server.
        let (rate, mu, dt) = (0.3, 0.05, 2.0);
        let inst = single_class_instance(rate, mu, 4, 20.0, dt);
        let tables = solve(&inst).unwrap();
        let e = tables.n_epochs();
        let expect = (1.0 - (-dt * rate).exp()) * (1.0 - (-mu * dt).exp()) * 50.0;
        let set = tables.combination_set();
        for combo in 0..set.len() {
            if !set.get(combo).is_full(4) {
                assert_relative_eq!(tables.reject_q(combo, e - 2), expect, max_relative = 1e-12);
            } else {
                assert!(tables.reject_q(combo, e - 2) < expect);
            }
        }
    }

    #[test]
    fn critical_price_zero_when_accepting_costs_nothing() {
        // A single server and a single class: accepting from the empty
        // combination forfeits future acceptances, so the threshold is
        // positive away from the horizon; at the horizon boundary it is 0.
        let inst = single_class_instance(0.5, 0.01, 1, 100.0, 1.0);
        let tables = solve(&inst).unwrap();
        assert!(tables.critical_price(0, 0, 0).unwrap() > 0.0);
        assert_eq!(tables.critical_price(0, 0, tables.n_epochs()).unwrap(), 0.0);
    }

    #[test]
    fn decide_implements_the_threshold_rule() {
        let inst = single_class_instance(0.4, 0.02, 2, 60.0, 2.0);
        let tables = solve(&inst).unwrap();
        let set = tables.combination_set();
        let empty = set.get(0).clone();
        let threshold = tables.critical_price(0, 0, 5).unwrap();
        // Ties accept.
        let state = StateView::offered(empty.clone(), 0, threshold, 5);
        assert_eq!(tables.decide(&state), Action::Accept);
        let below = StateView::offered(empty.clone(), 0, threshold - 1e-9, 5);
        assert_eq!(tables.decide(&below), Action::Reject);
        // No pending task rejects.
        assert_eq!(tables.decide(&StateView::idle(empty, 5)), Action::Reject);
        // Full combination rejects regardless of price.
        let full_idx = set.index_of(&[2]).unwrap();
        let full = set.get(full_idx).clone();
        let state = StateView::offered(full, 0, 1e12, 5);
        assert_eq!(tables.decide(&state), Action::Reject);
    }

    #[test]
    fn value_is_continuous_at_the_threshold() {
        let inst = single_class_instance(0.4, 0.02, 2, 60.0, 2.0);
        let tables = solve(&inst).unwrap();
        let set = tables.combination_set();
        let empty = set.get(0).clone();
        let threshold = tables.critical_price(0, 0, 3).unwrap();
        let at = tables.value_at(&StateView::offered(empty.clone(), 0, threshold, 3));
        let reject_branch = tables.reject_q(0, 3);
        assert_relative_eq!(at, reject_branch, max_relative = 1e-12);
        // Below the threshold the value is exactly the reject value.
        let below = tables.value_at(&StateView::offered(empty.clone(), 0, threshold * 0.5, 3));
        assert_eq!(below, reject_branch);
        // At the horizon everything is worthless.
        let end = tables.value_at(&StateView::offered(empty, 0, 1e9, tables.n_epochs()));
        assert_eq!(end, 0.0);
    }

    #[test]
    fn memory_budget_is_enforced_with_a_sizing_report() {
        let inst = single_class_instance(0.4, 0.02, 10, 1000.0, 0.5);
        let err = solve_with_options(&inst, SolveOptions { memory_budget_bytes: 1024 }, true).unwrap_err();
        let SolverError::MemoryBudget(report) = err;
        assert_eq!(report.combinations, 11);
        assert!(report.total_bytes > 1024);
        assert!(report.to_string().contains("budget"));
    }

    #[test]
    fn parallel_and_sequential_solves_agree() {
        let classes = vec![
            TaskClass::new(
                "a",
                0.01,
                ArrivalRateFn::sinusoid(0.05, 0.04, 500.0, -1.0).unwrap(),
                PriceDistribution::lomax(3.0, 400.0).unwrap(),
            )
            .unwrap(),
            TaskClass::new(
                "b",
                0.002,
                ArrivalRateFn::step(0.01, 0.05, 300.0).unwrap(),
                PriceDistribution::lomax(2.5, 900.0).unwrap(),
            )
            .unwrap(),
        ];
        let inst = ProblemInstance::new(classes, 4, 600.0, 1.5).unwrap();
        let par = solve(&inst).unwrap();
        let seq = solve_sequential(&inst).unwrap();
        assert_eq!(par.reject_q, seq.reject_q);
        assert_eq!(par.critical_price, seq.critical_price);
    }
}
