//! Problem-instance model: task classes, arrival-rate functions, price
//! distributions, and the combination state space.

mod arrival;
mod combinations;
mod price;

pub use arrival::ArrivalRateFn;
pub use combinations::{combination_count, enumerate_combinations, Combination, CombinationSet};
pub use price::{PriceDistribution, Segment};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("lomax shape must be > 1 for a finite mean (got {shape})")]
    InfiniteMean { shape: f64 },
    #[error("invalid price distribution: {0}")]
    InvalidPrice(String),
    #[error("invalid arrival-rate function: {0}")]
    InvalidRate(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("time {t} outside the horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("cannot accept: all servers busy")]
    NoFreeServer,
}

/// One task class: exponential service at `service_rate`, arrivals from
/// `arrival`, prices from `price`.
#[derive(Clone, Debug)]
pub struct TaskClass {
    pub name: String,
    pub service_rate: f64,
    pub arrival: ArrivalRateFn,
    pub price: PriceDistribution,
}

impl TaskClass {
    pub fn new(
        name: impl Into<String>,
        service_rate: f64,
        arrival: ArrivalRateFn,
        price: PriceDistribution,
    ) -> Result<Self, DomainError> {
        if !(service_rate.is_finite() && service_rate > 0.0) {
            return Err(DomainError::InvalidInstance("service_rate must be > 0".into()));
        }
        Ok(Self { name: name.into(), service_rate, arrival, price })
    }
}

/// A full problem instance: classes, servers, horizon, and the planning step.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub classes: Vec<TaskClass>,
    pub n_servers: u16,
    pub horizon: f64,
    pub dt: f64,
}

impl ProblemInstance {
    pub fn new(classes: Vec<TaskClass>, n_servers: u16, horizon: f64, dt: f64) -> Result<Self, DomainError> {
        if classes.is_empty() {
            return Err(DomainError::InvalidInstance("at least one task class is required".into()));
        }
        if n_servers == 0 {
            return Err(DomainError::InvalidInstance("n_servers must be >= 1".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(DomainError::InvalidInstance("horizon must be > 0".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DomainError::InvalidInstance("dt must be > 0".into()));
        }
        if dt >= horizon {
            return Err(DomainError::InvalidInstance("dt must be smaller than the horizon".into()));
        }
        Ok(Self { classes, n_servers, horizon, dt })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of planning steps: epochs are `t_i = i * dt` for
    /// `i = 0..=n_epochs`, with the final epoch clamped to the horizon when
    /// `horizon / dt` is not integral.
    pub fn n_epochs(&self) -> usize {
        let ratio = self.horizon / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() < 1e-9 && rounded >= 1.0 {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Time of epoch `i`, clamped so the last grid point is exactly `t_H`.
    pub fn epoch_time(&self, i: usize) -> f64 {
        (i as f64 * self.dt).min(self.horizon)
    }

    /// Latest epoch index with `t_i <= t`, capped at the last decision epoch.
    pub fn epoch_at(&self, t: f64) -> usize {
        let i = (t / self.dt).floor() as usize;
        i.min(self.n_epochs().saturating_sub(1))
    }

    /// Arrival rate of `class` at time `t`, checked against the horizon.
    pub fn eval_rate(&self, class: usize, t: f64) -> Result<f64, DomainError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(DomainError::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok(self.classes[class].arrival.value(t))
    }

    pub fn combination_set(&self) -> CombinationSet {
        CombinationSet::new(self.n_servers, self.n_classes())
    }

    /// Mean arrival rate of every class over the horizon.
    pub fn mean_rates(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.arrival.mean_over(self.horizon)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone_class() -> TaskClass {
        TaskClass::new(
            "only",
            0.01,
            ArrivalRateFn::constant(0.1).unwrap(),
            PriceDistribution::lomax(3.0, 100.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn epoch_grid_divides_exactly() {
        let inst = ProblemInstance::new(vec![lone_class()], 2, 28_800.0, 0.5).unwrap();
        assert_eq!(inst.n_epochs(), 57_600);
        assert_eq!(inst.epoch_time(0), 0.0);
        assert_eq!(inst.epoch_time(57_600), 28_800.0);
    }

    #[test]
    fn epoch_grid_clamps_trailing_partial_step() {
        let inst = ProblemInstance::new(vec![lone_class()], 2, 10.0, 3.0).unwrap();
        assert_eq!(inst.n_epochs(), 4);
        assert_eq!(inst.epoch_time(3), 9.0);
        assert_eq!(inst.epoch_time(4), 10.0);
    }

    #[test]
    fn epoch_at_floors_to_latest_epoch() {
        let inst = ProblemInstance::new(vec![lone_class()], 2, 10.0, 2.0).unwrap();
        assert_eq!(inst.epoch_at(0.0), 0);
        assert_eq!(inst.epoch_at(1.99), 0);
        assert_eq!(inst.epoch_at(2.0), 1);
        assert_eq!(inst.epoch_at(9.99), 4);
    }

    #[test]
    fn eval_rate_rejects_out_of_range_times() {
        let inst = ProblemInstance::new(vec![lone_class()], 2, 10.0, 1.0).unwrap();
        assert!(inst.eval_rate(0, 5.0).is_ok());
        assert!(matches!(inst.eval_rate(0, -0.1), Err(DomainError::TimeOutOfRange { .. })));
        assert!(matches!(inst.eval_rate(0, 10.1), Err(DomainError::TimeOutOfRange { .. })));
    }

    #[test]
    fn invalid_instances_are_rejected() {
        assert!(ProblemInstance::new(vec![], 2, 10.0, 1.0).is_err());
        assert!(ProblemInstance::new(vec![lone_class()], 0, 10.0, 1.0).is_err());
        assert!(ProblemInstance::new(vec![lone_class()], 2, 10.0, 10.0).is_err());
        assert!(ProblemInstance::new(vec![lone_class()], 2, 10.0, 0.0).is_err());
    }
}
