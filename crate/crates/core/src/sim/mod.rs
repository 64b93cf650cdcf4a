//! Continuous-time discrete-event simulation.
//!
//! Ground truth for policy evaluation: arrivals are sampled from the true
//! (continuous) rate functions, every arrival gets a decision opportunity,
//! and a task's price is collected exactly when its service completes before
//! the horizon. Episodes are deterministic functions of `(instance, policy,
//! seed)`.

mod poisson;

pub use poisson::{sample_arrivals, PoissonError};

use crate::domain::ProblemInstance;
use crate::parallel;
use crate::rng::{exponential, stream, Purpose};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Accept,
    Reject,
}

/// An admission policy consulted at every arrival with the current busy
/// counts, the task class and price, and the continuous arrival time.
pub trait Policy: Sync {
    fn decide(&self, counts: &[u16], class: usize, price: f64, t: f64) -> Action;
}

/// Accepts whenever a server is free.
pub struct AcceptAll;

impl Policy for AcceptAll {
    fn decide(&self, _counts: &[u16], _class: usize, _price: f64, _t: f64) -> Action {
        Action::Accept
    }
}

/// Rejects everything.
pub struct RejectAll;

impl Policy for RejectAll {
    fn decide(&self, _counts: &[u16], _class: usize, _price: f64, _t: f64) -> Action {
        Action::Reject
    }
}

/// Per-class fixed thresholds, time-invariant and state-independent.
pub struct FixedThresholds {
    pub thresholds: Vec<f64>,
}

impl Policy for FixedThresholds {
    fn decide(&self, _counts: &[u16], class: usize, price: f64, _t: f64) -> Action {
        if price >= self.thresholds[class] {
            Action::Accept
        } else {
            Action::Reject
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accepted,
    RejectedPolicy,
    BlockedFull,
}

#[derive(Clone, Debug)]
pub enum Event {
    Arrival { t: f64, class: usize, price: f64, decision: Decision },
    Completion { t: f64, class: usize, price: f64 },
}

/// Full record of one simulated episode.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTrace {
    pub events: Vec<Event>,
    /// Sum of prices of tasks completed strictly before the horizon.
    pub total_reward: f64,
    pub accepted: u64,
    pub rejected_policy: u64,
    pub blocked_full: u64,
    pub completed: u64,
    pub in_flight_at_horizon: u64,
}

/// Runs one episode. Per-class arrival times and prices come from the
/// `(seed, EpisodeArrivals, class)` stream, service draws from
/// `(seed, EpisodeService, class)`; see [`crate::rng`] for the mapping.
pub fn run_episode(instance: &ProblemInstance, policy: &dyn Policy, seed: u64) -> EpisodeTrace {
    let n_classes = instance.n_classes();
    let mut arrivals: Vec<(f64, usize, f64)> = Vec::new();
    for (k, class) in instance.classes.iter().enumerate() {
        let mut rng = stream(seed, Purpose::EpisodeArrivals, k as u64, 0);
        let times = sample_arrivals(&class.arrival, instance.horizon, &mut rng)
            .expect("instance rate functions are bounded on the horizon");
        for t in times {
            let price = class.price.sample(&mut rng);
            arrivals.push((t, k, price));
        }
    }
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut service_rngs: Vec<_> =
        (0..n_classes).map(|k| stream(seed, Purpose::EpisodeService, k as u64, 0)).collect();

    // Min-heap of scheduled completions keyed by time.
    #[derive(PartialEq)]
    struct Pending {
        t: f64,
        class: usize,
        price: f64,
    }
    impl Eq for Pending {}
    impl PartialOrd for Pending {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Pending {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.t.total_cmp(&other.t).then(self.class.cmp(&other.class))
        }
    }

    let mut trace = EpisodeTrace::default();
    let mut counts = vec![0u16; n_classes];
    let mut busy: u16 = 0;
    let mut heap: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();

    let settle = |upto: f64, heap: &mut BinaryHeap<Reverse<Pending>>, counts: &mut Vec<u16>, busy: &mut u16, trace: &mut EpisodeTrace| {
        while let Some(Reverse(head)) = heap.peek() {
            if head.t > upto {
                break;
            }
            let Reverse(done) = heap.pop().unwrap();
            counts[done.class] -= 1;
            *busy -= 1;
            trace.completed += 1;
            trace.total_reward += done.price;
            trace.events.push(Event::Completion { t: done.t, class: done.class, price: done.price });
        }
    };

    for (t, class, price) in arrivals {
        settle(t, &mut heap, &mut counts, &mut busy, &mut trace);
        let decision = if busy >= instance.n_servers {
            trace.blocked_full += 1;
            Decision::BlockedFull
        } else {
            match policy.decide(&counts, class, price, t) {
                Action::Accept => {
                    let service = exponential(&mut service_rngs[class], instance.classes[class].service_rate);
                    // A task finishing at or after the horizon occupies its
                    // server to the end and is never credited; it simply
                    // stays in the heap past the final drain.
                    heap.push(Reverse(Pending { t: t + service, class, price }));
                    counts[class] += 1;
                    busy += 1;
                    trace.accepted += 1;
                    Decision::Accepted
                }
                Action::Reject => {
                    trace.rejected_policy += 1;
                    Decision::RejectedPolicy
                }
            }
        };
        debug_assert!(busy <= instance.n_servers);
        trace.events.push(Event::Arrival { t, class, price, decision });
    }

    // Credit completions that land before the horizon; whatever remains was
    // in flight when time ran out.
    let horizon = instance.horizon;
    while let Some(Reverse(head)) = heap.peek() {
        if head.t >= horizon {
            break;
        }
        let Reverse(done) = heap.pop().unwrap();
        trace.completed += 1;
        trace.total_reward += done.price;
        trace.events.push(Event::Completion { t: done.t, class: done.class, price: done.price });
    }
    trace.in_flight_at_horizon = heap.len() as u64;
    trace
}

/// Aggregate result of an episode, without the event log.
#[derive(Clone, Debug)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub total_reward: f64,
    pub accepted: u64,
    pub rejected_policy: u64,
    pub blocked_full: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub mean_reward: f64,
    pub std_error: f64,
    pub episodes: Vec<EpisodeSummary>,
}

/// Evaluates a policy over `episodes` independent episodes seeded
/// `base_seed..base_seed + episodes`, in parallel when enabled.
pub fn evaluate(instance: &ProblemInstance, policy: &dyn Policy, episodes: usize, base_seed: u64) -> Evaluation {
    evaluate_with(instance, policy, episodes, base_seed, true)
}

/// Sequential variant of [`evaluate`] with identical output.
pub fn evaluate_sequential(
    instance: &ProblemInstance,
    policy: &dyn Policy,
    episodes: usize,
    base_seed: u64,
) -> Evaluation {
    evaluate_with(instance, policy, episodes, base_seed, false)
}

fn evaluate_with(
    instance: &ProblemInstance,
    policy: &dyn Policy,
    episodes: usize,
    base_seed: u64,
    parallel: bool,
) -> Evaluation {
    assert!(episodes >= 1);
    let summaries = parallel::map_range_with(parallel, episodes, |i| {
        let started = Instant::now();
        let trace = run_episode(instance, policy, base_seed + i as u64);
        EpisodeSummary {
            episode: i,
            seed: base_seed + i as u64,
            total_reward: trace.total_reward,
            accepted: trace.accepted,
            rejected_policy: trace.rejected_policy,
            blocked_full: trace.blocked_full,
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    });
    let mean = summaries.iter().map(|s| s.total_reward).sum::<f64>() / episodes as f64;
    let std_error = if episodes > 1 {
        let var = summaries.iter().map(|s| (s.total_reward - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64;
        (var / episodes as f64).sqrt()
    } else {
        0.0
    };
    Evaluation { mean_reward: mean, std_error, episodes: summaries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ArrivalRateFn, PriceDistribution, TaskClass};

    fn instance(rate: f64, mu: f64, n_servers: u16, horizon: f64) -> ProblemInstance {
        let class = TaskClass::new(
            "only",
            mu,
            ArrivalRateFn::constant(rate).unwrap(),
            PriceDistribution::lomax(3.0, 100.0).unwrap(),
        )
        .unwrap();
        ProblemInstance::new(vec![class], n_servers, horizon, 1.0).unwrap()
    }

    #[test]
    fn zero_arrivals_is_an_empty_trace() {
        let inst = instance(0.0, 0.1, 2, 100.0);
        let trace = run_episode(&inst, &AcceptAll, 1);
        assert!(trace.events.is_empty());
        assert_eq!(trace.total_reward, 0.0);
    }

    #[test]
    fn reject_all_collects_nothing_and_counts_every_arrival() {
        let inst = instance(0.2, 0.1, 2, 500.0);
        let trace = run_episode(&inst, &RejectAll, 7);
        assert_eq!(trace.total_reward, 0.0);
        assert_eq!(trace.accepted, 0);
        let arrivals = trace
            .events
            .iter()
            .filter(|e| matches!(e, Event::Arrival { .. }))
            .count() as u64;
        assert_eq!(trace.rejected_policy, arrivals);
    }

    #[test]
    fn traces_are_deterministic_in_the_seed() {
        let inst = instance(0.3, 0.05, 2, 300.0);
        let a = run_episode(&inst, &AcceptAll, 42);
        let b = run_episode(&inst, &AcceptAll, 42);
        assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            match (x, y) {
                (Event::Arrival { t: t1, price: p1, .. }, Event::Arrival { t: t2, price: p2, .. }) => {
                    assert_eq!(t1.to_bits(), t2.to_bits());
                    assert_eq!(p1.to_bits(), p2.to_bits());
                }
                (Event::Completion { t: t1, .. }, Event::Completion { t: t2, .. }) => {
                    assert_eq!(t1.to_bits(), t2.to_bits());
                }
                _ => panic!("event order differs"),
            }
        }
        let c = run_episode(&inst, &AcceptAll, 43);
        assert_ne!(a.total_reward.to_bits(), c.total_reward.to_bits());
    }

    #[test]
    fn conservation_of_accepted_tasks() {
        let inst = instance(0.5, 0.01, 3, 400.0);
        for seed in 0..20 {
            let trace = run_episode(&inst, &AcceptAll, seed);
            assert_eq!(trace.accepted, trace.completed + trace.in_flight_at_horizon);
            let credited: f64 = trace
                .events
                .iter()
                .filter_map(|e| match e {
                    Event::Completion { price, .. } => Some(*price),
                    _ => None,
                })
                .sum();
            assert_eq!(credited.to_bits(), trace.total_reward.to_bits());
        }
    }

    #[test]
    fn occupancy_never_exceeds_the_server_count() {
        let inst = instance(1.0, 0.002, 2, 300.0);
        let trace = run_episode(&inst, &AcceptAll, 3);
        let mut busy: i64 = 0;
        for e in &trace.events {
            match e {
                Event::Arrival { decision: Decision::Accepted, .. } => busy += 1,
                Event::Completion { .. } => busy -= 1,
                _ => {}
            }
            assert!(busy >= 0 && busy <= 2);
        }
        assert!(trace.blocked_full > 0);
    }

    #[test]
    fn evaluate_uses_consecutive_seeds_and_is_deterministic() {
        let inst = instance(0.3, 0.05, 2, 200.0);
        let eval = evaluate(&inst, &AcceptAll, 10, 100);
        assert_eq!(eval.episodes.len(), 10);
        for (i, s) in eval.episodes.iter().enumerate() {
            assert_eq!(s.episode, i);
            assert_eq!(s.seed, 100 + i as u64);
            let solo = run_episode(&inst, &AcceptAll, s.seed);
            assert_eq!(solo.total_reward.to_bits(), s.total_reward.to_bits());
        }
        let again = evaluate_sequential(&inst, &AcceptAll, 10, 100);
        assert_eq!(eval.mean_reward.to_bits(), again.mean_reward.to_bits());
    }

    #[test]
    fn reject_all_evaluation_is_exactly_zero() {
        let inst = instance(0.3, 0.05, 2, 200.0);
        let eval = evaluate(&inst, &RejectAll, 5, 0);
        assert_eq!(eval.mean_reward, 0.0);
        assert_eq!(eval.std_error, 0.0);
    }

    #[test]
    fn doubling_episodes_shrinks_the_standard_error() {
        let inst = instance(0.4, 0.02, 3, 400.0);
        let small = evaluate(&inst, &AcceptAll, 400, 0);
        let large = evaluate(&inst, &AcceptAll, 800, 0);
        let ratio = small.std_error / large.std_error;
        // CLT predicts sqrt(2); allow 30 percent.
        assert!((ratio - 2.0f64.sqrt()).abs() < 0.3 * 2.0f64.sqrt(), "ratio {ratio}");
    }

    #[test]
    fn single_server_acceptance_ratio_matches_loss_formula() {
        // Accept-everything on one server: the long-run accepted fraction is
        // mu / (lambda + mu), the Erlang loss complement with one server.
        let (lambda, mu) = (0.2, 0.1);
        let inst = instance(lambda, mu, 1, 10_000.0);
        let episodes = 2_000usize;
        let eval_ratio: Vec<f64> = (0..episodes)
            .map(|e| {
                let trace = run_episode(&inst, &AcceptAll, 50_000 + e as u64);
                let arrivals = trace.accepted + trace.blocked_full;
                trace.accepted as f64 / arrivals as f64
            })
            .collect();
        let mean = eval_ratio.iter().sum::<f64>() / episodes as f64;
        let var = eval_ratio.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64;
        let se = (var / episodes as f64).sqrt();
        let expect = mu / (lambda + mu);
        assert!(
            (mean - expect).abs() <= 3.0 * se + 1e-3,
            "ratio {mean} vs {expect}, 3 SE {}",
            3.0 * se
        );
    }
}
