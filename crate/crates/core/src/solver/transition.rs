//! Transition probabilities of the planning model.
//!
//! Over one step of width `dt`, each busy server finishes independently with
//! probability `1 - exp(-mu dt)`, so per-class busy counts follow a binomial
//! thinning; arrivals reduce to "no task" versus "one task of class k" with
//! probabilities driven by the rates at the left endpoint of the step.

use crate::domain::{CombinationSet, ProblemInstance};

/// Probability that a class with service rate `mu`, started at `t`, finishes
/// before `t_h`.
pub fn prob_fin(mu: f64, t: f64, t_h: f64) -> f64 {
    debug_assert!(t <= t_h);
    -(-(t_h - t) * mu).exp_m1()
}

/// Probability that no task arrives during a step of width `dt` when the
/// per-class rates sum to `total_rate`.
pub fn prob_no_arrival(total_rate: f64, dt: f64) -> f64 {
    (-dt * total_rate).exp()
}

/// Probability that the task offered at the next epoch is of the class with
/// rate `rate`, out of `total_rate`.
pub fn prob_class_arrival(rate: f64, total_rate: f64, dt: f64) -> f64 {
    if total_rate <= 0.0 || rate <= 0.0 {
        return 0.0;
    }
    (rate / total_rate) * -(-dt * total_rate).exp_m1()
}

/// Probability that a class with `busy` busy servers has `busy_next` still
/// busy after `dt`, with per-server completion rate `mu`.
pub fn server_transition_prob(busy: u16, busy_next: u16, mu: f64, dt: f64) -> f64 {
    if busy_next > busy {
        return 0.0;
    }
    let keep = (-mu * dt).exp();
    let fin = -(-mu * dt).exp_m1();
    binomial_f64(busy, busy - busy_next) * fin.powi((busy - busy_next) as i32) * keep.powi(busy_next as i32)
}

fn binomial_f64(n: u16, k: u16) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Per-class completion matrices over one step: `rows[m][j]` is the
/// probability of going from `m` busy to `j` busy. Constant across epochs
/// because the step width is constant.
pub struct ClassMatrices {
    rows: Vec<Vec<Vec<f64>>>,
}

impl ClassMatrices {
    pub fn new(instance: &ProblemInstance) -> Self {
        let n = instance.n_servers;
        let rows = instance
            .classes
            .iter()
            .map(|class| {
                (0..=n)
                    .map(|m| (0..=m).map(|j| server_transition_prob(m, j, class.service_rate, instance.dt)).collect())
                    .collect()
            })
            .collect();
        Self { rows }
    }

    /// P(busy `m` -> busy `j`) for `class`; zero when `j > m`.
    pub fn prob(&self, class: usize, m: u16, j: u16) -> f64 {
        if j > m {
            return 0.0;
        }
        self.rows[class][m as usize][j as usize]
    }
}

/// Flattened successor lists: for every combination, the reachable
/// combinations one step later (componentwise no greater) with the joint
/// completion probability. Shared by the exact solver and the abstract one.
pub struct SuccessorTable {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl SuccessorTable {
    pub fn new(set: &CombinationSet, matrices: &ClassMatrices) -> Self {
        let n_classes = set.n_classes();
        let mut offsets = Vec::with_capacity(set.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        let mut next = vec![0u16; n_classes];
        for combo in set.combos() {
            push_successors(set, matrices, &combo.counts, &mut next, 0, 1.0, &mut entries);
            offsets.push(entries.len());
        }
        Self { offsets, entries }
    }

    pub fn successors(&self, index: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[index]..self.offsets[index + 1]]
    }
}

fn push_successors(
    set: &CombinationSet,
    matrices: &ClassMatrices,
    counts: &[u16],
    next: &mut Vec<u16>,
    class: usize,
    weight: f64,
    entries: &mut Vec<(u32, f64)>,
) {
    if class == counts.len() {
        let idx = set.index_of(next).expect("successor stays within the combination set");
        entries.push((idx as u32, weight));
        return;
    }
    for j in 0..=counts[class] {
        next[class] = j;
        let w = weight * matrices.prob(class, counts[class], j);
        push_successors(set, matrices, counts, next, class + 1, w, entries);
    }
}
