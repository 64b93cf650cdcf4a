//! State aggregation: clustering combinations, backward induction on the
//! aggregated model, and lifting the aggregated policy back to the ground
//! problem.

mod features;
mod kmeans;

pub use features::{features_order_stats, features_order_stats_all, features_stationary, standardize};
pub use kmeans::{kmeans, random_aggregation, ClusteringError, KmeansResult};

use crate::domain::{CombinationSet, ProblemInstance};
use crate::parallel;
use crate::sim::{Action, Policy};
use crate::solver::{prob_class_arrival, prob_fin, ClassMatrices, SolveOptions, SolverError};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("assignment is empty")]
    Empty,
    #[error("invalid aggregation map: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A surjection from combination indices onto abstract ids, with per-member
/// convex weights (uniform within each cluster).
#[derive(Clone, Debug)]
pub struct AggregationMap {
    assignment: Vec<u32>,
    weights: Vec<f64>,
    members: Vec<Vec<u32>>,
}

impl AggregationMap {
    /// Builds a map from a raw assignment, compacting unused ids so every
    /// abstract id is non-empty, and assigning uniform weights per cluster.
    pub fn from_assignment(assignment: Vec<u32>) -> Result<Self, AggregationError> {
        if assignment.is_empty() {
            return Err(AggregationError::Empty);
        }
        let max = *assignment.iter().max().unwrap() as usize;
        let mut remap = vec![u32::MAX; max + 1];
        let mut next = 0u32;
        for &a in &assignment {
            if remap[a as usize] == u32::MAX {
                remap[a as usize] = next;
                next += 1;
            }
        }
        let assignment: Vec<u32> = assignment.iter().map(|&a| remap[a as usize]).collect();
        let n_abstract = next as usize;
        let mut members = vec![Vec::new(); n_abstract];
        for (i, &a) in assignment.iter().enumerate() {
            members[a as usize].push(i as u32);
        }
        let mut weights = vec![0.0f64; assignment.len()];
        for cluster in &members {
            let w = 1.0 / cluster.len() as f64;
            for &i in cluster {
                weights[i as usize] = w;
            }
        }
        Ok(Self { assignment, weights, members })
    }

    /// The identity map: every combination is its own abstract state.
    pub fn identity(n_combinations: usize) -> Self {
        Self::from_assignment((0..n_combinations as u32).collect()).expect("non-empty")
    }

    pub fn n_abstract(&self) -> usize {
        self.members.len()
    }

    pub fn n_combinations(&self) -> usize {
        self.assignment.len()
    }

    pub fn abstract_id(&self, combo: usize) -> usize {
        self.assignment[combo] as usize
    }

    pub fn weight(&self, combo: usize) -> f64 {
        self.weights[combo]
    }

    pub fn members(&self, abstract_id: usize) -> &[u32] {
        &self.members[abstract_id]
    }

    /// Serialises as `combination_index,abstract_id,weight` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), AggregationError> {
        writeln!(w, "combination_index,abstract_id,weight")?;
        for (i, (&a, &wt)) in self.assignment.iter().zip(&self.weights).enumerate() {
            writeln!(w, "{i},{a},{wt}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, AggregationError> {
        let mut assignment = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "combination_index,abstract_id,weight" {
                    return Err(AggregationError::Invalid("missing header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let idx: usize = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| AggregationError::Invalid(format!("bad combination_index on line {}", lineno + 1)))?;
            let id: u32 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| AggregationError::Invalid(format!("bad abstract_id on line {}", lineno + 1)))?;
            if idx != assignment.len() {
                return Err(AggregationError::Invalid(format!(
                    "combination_index {idx} out of order on line {}",
                    lineno + 1
                )));
            }
            assignment.push(id);
        }
        Self::from_assignment(assignment)
    }
}

/// Aggregated one-step transition probabilities between abstract ids: the
/// weight-mixed ground completion dynamics. Constant across epochs, like the
/// per-class matrices they are built from.
pub struct AbstractTransitions {
    n_abstract: usize,
    probs: Vec<f64>,
}

impl AbstractTransitions {
    pub fn build(instance: &ProblemInstance, set: &CombinationSet, map: &AggregationMap) -> Self {
        let matrices = ClassMatrices::new(instance);
        let n_abstract = map.n_abstract();
        let n = set.len();
        let chunks = 64.min(n);
        let partials = parallel::map_range(chunks, |chunk| {
            let lo = n * chunk / chunks;
            let hi = n * (chunk + 1) / chunks;
            let mut local = vec![0.0f64; n_abstract * n_abstract];
            let mut next = vec![0u16; set.n_classes()];
            for i in lo..hi {
                let row = map.abstract_id(i) * n_abstract;
                let w = map.weight(i);
                for_each_successor(set, &matrices, &set.get(i).counts, &mut next, |j, p| {
                    local[row + map.abstract_id(j)] += w * p;
                });
            }
            local
        });
        let mut probs = vec![0.0f64; n_abstract * n_abstract];
        for partial in partials {
            for (acc, v) in probs.iter_mut().zip(partial) {
                *acc += v;
            }
        }
        Self { n_abstract, probs }
    }

    pub fn n_abstract(&self) -> usize {
        self.n_abstract
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.n_abstract + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.n_abstract..(from + 1) * self.n_abstract]
    }
}

/// Visits every reachable successor of `counts` with its joint completion
/// probability, without materialising a successor table.
fn for_each_successor<F: FnMut(usize, f64)>(
    set: &CombinationSet,
    matrices: &ClassMatrices,
    counts: &[u16],
    next: &mut Vec<u16>,
    mut visit: F,
) {
    fn rec<F: FnMut(usize, f64)>(
        set: &CombinationSet,
        matrices: &ClassMatrices,
        counts: &[u16],
        next: &mut Vec<u16>,
        class: usize,
        weight: f64,
        visit: &mut F,
    ) {
        if class == counts.len() {
            let idx = set.index_of(next).expect("successor stays in range");
            visit(idx, weight);
            return;
        }
        for j in 0..=counts[class] {
            next[class] = j;
            let w = weight * matrices.prob(class, counts[class], j);
            rec(set, matrices, counts, next, class + 1, w, visit);
        }
    }
    rec(set, matrices, counts, next, 0, 1.0, &mut visit);
}

/// Solved tables of the aggregated model, mirroring the ground tables over
/// abstract ids.
pub struct AbstractTables {
    map: AggregationMap,
    set: CombinationSet,
    service_rates: Vec<f64>,
    dt: f64,
    n_epochs: usize,
    /// Epoch-major over abstract ids.
    reject_q: Vec<f64>,
    critical_price: Vec<f64>,
    /// Clusters whose members are all full; acceptance is disabled there.
    all_full: Vec<bool>,
}

impl AbstractTables {
    pub fn map(&self) -> &AggregationMap {
        &self.map
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn reject_q(&self, abstract_id: usize, epoch: usize) -> f64 {
        self.reject_q[epoch * self.map.n_abstract() + abstract_id]
    }

    /// Threshold of the aggregated model; `None` when every member of the
    /// cluster is full.
    pub fn critical_price(&self, abstract_id: usize, class: usize, epoch: usize) -> Option<f64> {
        if self.all_full[abstract_id] {
            return None;
        }
        let k = self.service_rates.len();
        Some(self.critical_price[(epoch * self.map.n_abstract() + abstract_id) * k + class])
    }
}

/// Backward induction on the aggregated model.
pub fn solve_abstract(instance: &ProblemInstance, map: &AggregationMap) -> Result<AbstractTables, SolverError> {
    solve_abstract_with(instance, map, SolveOptions::default(), true)
}

pub fn solve_abstract_with(
    instance: &ProblemInstance,
    map: &AggregationMap,
    options: SolveOptions,
    parallel: bool,
) -> Result<AbstractTables, SolverError> {
    let set = instance.combination_set();
    assert_eq!(map.n_combinations(), set.len(), "aggregation map must cover the combination space");
    let n_abstract = map.n_abstract();
    let n_classes = instance.n_classes();
    let n_epochs = instance.n_epochs();
    let grid = n_epochs + 1;

    let table_bytes = (grid * n_abstract * (1 + n_classes) * 8) as u64;
    if table_bytes > options.memory_budget_bytes {
        let mut sizing = crate::solver::SolvedTables::sizing(instance, options.memory_budget_bytes);
        sizing.combinations = n_abstract;
        sizing.reject_q_bytes = (grid * n_abstract * 8) as u64;
        sizing.critical_price_bytes = (grid * n_abstract * n_classes * 8) as u64;
        sizing.total_bytes = table_bytes;
        return Err(SolverError::MemoryBudget(sizing));
    }

    let transitions = AbstractTransitions::build(instance, &set, map);
    let service_rates: Vec<f64> = instance.classes.iter().map(|c| c.service_rate).collect();

    // Post-accept mixtures per (cluster, class): the accept branch of a
    // cluster averages the abstracted post-accept states of its members.
    // Full members cannot accept, so the weights renormalize over the rest;
    // clusters with no non-full member have acceptance disabled outright.
    let mut all_full = vec![false; n_abstract];
    let mut accept_mix: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_abstract * n_classes];
    for a in 0..n_abstract {
        let members = map.members(a);
        let open: Vec<u32> =
            members.iter().copied().filter(|&i| !set.get(i as usize).is_full(instance.n_servers)).collect();
        if open.is_empty() {
            all_full[a] = true;
            continue;
        }
        let total_w: f64 = open.iter().map(|&i| map.weight(i as usize)).sum();
        for k in 0..n_classes {
            let mut mix: Vec<(u32, f64)> = Vec::new();
            for &i in &open {
                let target = set.accept_index(i as usize, k).expect("open member has a free server") as u32;
                let cluster = map.abstract_id(target as usize) as u32;
                let w = map.weight(i as usize) / total_w;
                match mix.iter_mut().find(|(c, _)| *c == cluster) {
                    Some((_, acc)) => *acc += w,
                    None => mix.push((cluster, w)),
                }
            }
            accept_mix[a * n_classes + k] = mix;
        }
    }

    let mut reject_q = vec![0.0f64; grid * n_abstract];
    let mut critical_price = vec![0.0f64; grid * n_abstract * n_classes];

    for epoch in (0..n_epochs).rev() {
        let t_i = instance.epoch_time(epoch);
        let t_next = instance.epoch_time(epoch + 1);
        let width = t_next - t_i;
        let rates: Vec<f64> = instance.classes.iter().map(|c| c.arrival.value(t_i)).collect();
        let total_rate: f64 = rates.iter().sum();
        let arr_pf: Vec<f64> = (0..n_classes)
            .map(|k| {
                prob_class_arrival(rates[k], total_rate, width)
                    * prob_fin(service_rates[k], t_next, instance.horizon)
            })
            .collect();

        let (head, tail) = reject_q.split_at_mut((epoch + 1) * n_abstract);
        let q_cur = &mut head[epoch * n_abstract..];
        let q_next = &tail[..n_abstract];
        let pcr_next = &critical_price[(epoch + 1) * n_abstract * n_classes..(epoch + 2) * n_abstract * n_classes];

        let g: Vec<f64> = parallel::map_range_with(parallel, n_abstract, |a| {
            let mut v = q_next[a];
            if !all_full[a] {
                let row = &pcr_next[a * n_classes..(a + 1) * n_classes];
                for k in 0..n_classes {
                    if arr_pf[k] > 0.0 {
                        v += arr_pf[k] * instance.classes[k].price.mean_shortage(row[k]);
                    }
                }
            }
            v
        });

        let q_new: Vec<f64> = parallel::map_range_with(parallel, n_abstract, |a| {
            let row = transitions.row(a);
            let v: f64 = row.iter().zip(&g).map(|(p, gv)| p * gv).sum();
            v.max(0.0)
        });
        q_cur.copy_from_slice(&q_new);

        let pcr_cur = &mut critical_price[epoch * n_abstract * n_classes..(epoch + 1) * n_abstract * n_classes];
        for a in 0..n_abstract {
            if all_full[a] {
                continue;
            }
            for k in 0..n_classes {
                let pf = prob_fin(service_rates[k], t_i, instance.horizon);
                if pf <= 0.0 {
                    continue;
                }
                let after: f64 = accept_mix[a * n_classes + k].iter().map(|&(c, w)| w * q_new[c as usize]).sum();
                pcr_cur[a * n_classes + k] = ((q_new[a] - after) / pf).max(0.0);
            }
        }
    }

    Ok(AbstractTables {
        map: map.clone(),
        set,
        service_rates,
        dt: instance.dt,
        n_epochs,
        reject_q,
        critical_price,
        all_full,
    })
}

/// Ground policy induced by abstract tables: thresholds are looked up at the
/// cluster of the current combination; ground feasibility still applies.
pub struct GroundAbstractPolicy<'a> {
    tables: &'a AbstractTables,
}

impl<'a> GroundAbstractPolicy<'a> {
    pub fn new(tables: &'a AbstractTables) -> Self {
        Self { tables }
    }

    pub fn decide_at_epoch(&self, counts: &[u16], class: usize, price: f64, epoch: usize) -> Action {
        let t = &self.tables;
        let total: u16 = counts.iter().sum();
        if total >= t.set.n_servers() {
            return Action::Reject;
        }
        let combo = t.set.index_of(counts).expect("state belongs to the instance");
        match t.critical_price(t.map.abstract_id(combo), class, epoch) {
            Some(threshold) if price >= threshold => Action::Accept,
            _ => Action::Reject,
        }
    }
}

impl Policy for GroundAbstractPolicy<'_> {
    fn decide(&self, counts: &[u16], class: usize, price: f64, t: f64) -> Action {
        let epoch = ((t / self.tables.dt).floor() as usize).min(self.tables.n_epochs.saturating_sub(1));
        self.decide_at_epoch(counts, class, price, epoch)
    }
}
