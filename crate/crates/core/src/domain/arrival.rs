//! Time-varying arrival-rate functions.

use super::DomainError;

/// Arrival-rate function of one task class, in tasks per second.
///
/// All variants evaluate to a finite, non-negative rate on `[0, t_H]`.
/// `Sum` exists so that derived single-class instances (the average-class
/// baseline) can carry the pooled rate of several classes; it is not part of
/// the configuration surface.
#[derive(Clone, Debug, PartialEq)]
pub enum ArrivalRateFn {
    Constant {
        rate: f64,
    },
    /// `mean + amplitude * sin(2*pi*t/period + phase)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// `before` for `t < switch_time`, `after` from `switch_time` on.
    Step {
        before: f64,
        after: f64,
        switch_time: f64,
    },
    /// Linear interpolation between `(time, rate)` breakpoints, constant
    /// extension outside the covered range.
    PiecewiseLinear {
        points: Vec<(f64, f64)>,
    },
    Sum(Vec<ArrivalRateFn>),
}

impl ArrivalRateFn {
    pub fn constant(rate: f64) -> Result<Self, DomainError> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(DomainError::InvalidRate("constant rate must be finite and >= 0".into()));
        }
        Ok(Self::Constant { rate })
    }

    pub fn sinusoid(mean: f64, amplitude: f64, period: f64, phase: f64) -> Result<Self, DomainError> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(DomainError::InvalidRate("sinusoid mean must be finite and >= 0".into()));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0 && amplitude <= mean) {
            return Err(DomainError::InvalidRate(
                "sinusoid amplitude must satisfy 0 <= amplitude <= mean so the rate stays non-negative".into(),
            ));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(DomainError::InvalidRate("sinusoid period must be > 0".into()));
        }
        Ok(Self::Sinusoid { mean, amplitude, period, phase })
    }

    pub fn step(before: f64, after: f64, switch_time: f64) -> Result<Self, DomainError> {
        for (name, v) in [("before", before), ("after", after)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DomainError::InvalidRate(format!("step `{name}` rate must be finite and >= 0")));
            }
        }
        if !switch_time.is_finite() {
            return Err(DomainError::InvalidRate("step switch_time must be finite".into()));
        }
        Ok(Self::Step { before, after, switch_time })
    }

    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Result<Self, DomainError> {
        if points.len() < 2 {
            return Err(DomainError::InvalidRate("piecewise_linear needs at least 2 points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(DomainError::InvalidRate("piecewise_linear times must be strictly increasing".into()));
            }
        }
        if points.iter().any(|&(t, r)| !t.is_finite() || !r.is_finite() || r < 0.0) {
            return Err(DomainError::InvalidRate("piecewise_linear rates must be finite and >= 0".into()));
        }
        Ok(Self::PiecewiseLinear { points })
    }

    /// Rate at time `t`. Total over all of `t`; range checking against the
    /// horizon lives on [`super::ProblemInstance::eval_rate`].
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
            Self::Sinusoid { mean, amplitude, period, phase } => {
                mean + amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin()
            }
            Self::Step { before, after, switch_time } => {
                if t < *switch_time {
                    *before
                } else {
                    *after
                }
            }
            Self::PiecewiseLinear { points } => {
                if t <= points[0].0 {
                    return points[0].1;
                }
                if t >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let i = points.partition_point(|&(pt, _)| pt <= t);
                let (t0, r0) = points[i - 1];
                let (t1, r1) = points[i];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
            Self::Sum(parts) => parts.iter().map(|p| p.value(t)).sum(),
        }
    }

    /// Lipschitz constant of the rate function; infinite for steps.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Sinusoid { amplitude, period, .. } => {
                amplitude * 2.0 * std::f64::consts::PI / period
            }
            Self::Step { before, after, .. } => {
                if before == after {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::PiecewiseLinear { points } => points
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
            Self::Sum(parts) => parts.iter().map(|p| p.lipschitz_bound()).sum(),
        }
    }

    /// An upper bound on the rate over `[0, horizon]`, used as the thinning
    /// envelope when sampling arrivals.
    pub fn upper_bound(&self, horizon: f64) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
            Self::Sinusoid { mean, amplitude, .. } => mean + amplitude,
            Self::Step { before, after, switch_time } => {
                if *switch_time <= 0.0 {
                    *after
                } else if *switch_time >= horizon {
                    *before
                } else {
                    before.max(*after)
                }
            }
            Self::PiecewiseLinear { points } => {
                // Constant extension means the max over breakpoints covers
                // the whole range.
                points.iter().map(|&(_, r)| r).fold(0.0, f64::max)
            }
            Self::Sum(parts) => parts.iter().map(|p| p.upper_bound(horizon)).sum(),
        }
    }

    /// Exact time average of the rate over `[0, horizon]`.
    pub fn mean_over(&self, horizon: f64) -> f64 {
        assert!(horizon > 0.0);
        match self {
            Self::Constant { rate } => *rate,
            Self::Sinusoid { mean, amplitude, period, phase } => {
                let w = 2.0 * std::f64::consts::PI / period;
                mean + amplitude * (phase.cos() - (w * horizon + phase).cos()) / (w * horizon)
            }
            Self::Step { before, after, switch_time } => {
                let s = switch_time.clamp(0.0, horizon);
                (before * s + after * (horizon - s)) / horizon
            }
            Self::PiecewiseLinear { points } => {
                // Trapezoid integral of the clamped-extension function.
                let mut total = 0.0;
                let first = points[0];
                let last = points[points.len() - 1];
                if first.0 > 0.0 {
                    total += first.1 * (first.0.min(horizon) - 0.0).max(0.0);
                }
                for w in points.windows(2) {
                    let (t0, r0) = w[0];
                    let (t1, r1) = w[1];
                    let a = t0.clamp(0.0, horizon);
                    let b = t1.clamp(0.0, horizon);
                    if b <= a {
                        continue;
                    }
                    let ra = r0 + (r1 - r0) * (a - t0) / (t1 - t0);
                    let rb = r0 + (r1 - r0) * (b - t0) / (t1 - t0);
                    total += 0.5 * (ra + rb) * (b - a);
                }
                if last.0 < horizon {
                    total += last.1 * (horizon - last.0.max(0.0));
                }
                total / horizon
            }
            Self::Sum(parts) => parts.iter().map(|p| p.mean_over(horizon)).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson quadrature used as an independent check on the
    /// closed-form means; integrates each smooth piece separately so jump
    /// discontinuities do not degrade the order.
    fn quad_mean(f: &ArrivalRateFn, horizon: f64, n: usize, breaks: &[f64]) -> f64 {
        let mut edges: Vec<f64> = vec![0.0, horizon];
        edges.extend(breaks.iter().copied().filter(|b| (0.0..horizon).contains(b)));
        edges.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = n + n % 2;
            let h = (b - a) / n as f64;
            // Evaluate just inside the edges so step jumps land cleanly.
            let mut s = f.value(a + 1e-9 * h) + f.value(b - 1e-9 * h);
            for i in 1..n {
                let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += weight * f.value(a + i as f64 * h);
            }
            total += s * h / 3.0;
        }
        total / horizon
    }

    #[test]
    fn constant_value_everywhere() {
        let f = ArrivalRateFn::constant(0.5).unwrap();
        assert_eq!(f.value(100.0), 0.5);
        assert_eq!(f.mean_over(123.0), 0.5);
        assert_eq!(f.lipschitz_bound(), 0.0);
    }

    #[test]
    fn degenerate_sinusoid_is_constant() {
        let f = ArrivalRateFn::sinusoid(0.7, 0.0, 100.0, 0.3).unwrap();
        for t in [0.0, 13.0, 99.0] {
            assert_eq!(f.value(t), 0.7);
        }
    }

    #[test]
    fn step_switches_at_switch_time() {
        let f = ArrivalRateFn::step(0.2, 0.9, 50.0).unwrap();
        assert_eq!(f.value(50.0 - 1e-9), 0.2);
        assert_eq!(f.value(50.0 + 1e-9), 0.9);
        // Half the episode at each level.
        assert_relative_eq!(f.mean_over(100.0), (0.2 + 0.9) / 2.0);
    }

    #[test]
    fn sinusoid_mean_over_whole_periods_is_the_mean() {
        let f = ArrivalRateFn::sinusoid(0.4, 0.3, 360.0, 1.1).unwrap();
        assert_relative_eq!(f.mean_over(3.0 * 360.0), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_means_match_quadrature() {
        let horizon = 28_800.0;
        let fns = [
            (ArrivalRateFn::sinusoid(0.01, 0.009, horizon, -1.2).unwrap(), vec![]),
            (ArrivalRateFn::step(0.004, 0.02, 10_000.0).unwrap(), vec![10_000.0]),
            (
                ArrivalRateFn::piecewise_linear(vec![(0.0, 0.0), (10_000.0, 0.03), (28_800.0, 0.01)]).unwrap(),
                vec![10_000.0],
            ),
        ];
        for (f, breaks) in &fns {
            assert_relative_eq!(f.mean_over(horizon), quad_mean(f, horizon, 20_000, breaks), max_relative = 1e-8);
        }
    }

    #[test]
    fn lipschitz_bound_holds_on_dense_samples() {
        let horizon = 1000.0;
        let fns = [
            ArrivalRateFn::sinusoid(0.5, 0.5, 250.0, 0.0).unwrap(),
            ArrivalRateFn::piecewise_linear(vec![(0.0, 0.1), (400.0, 0.9), (1000.0, 0.2)]).unwrap(),
            ArrivalRateFn::constant(0.3).unwrap(),
        ];
        for f in &fns {
            let c = f.lipschitz_bound();
            let n = 5000;
            for i in 0..n {
                let t0 = horizon * i as f64 / n as f64;
                let t1 = t0 + horizon / n as f64;
                assert!((f.value(t1) - f.value(t0)).abs() <= c * (t1 - t0) + 1e-12);
            }
        }
    }

    #[test]
    fn piecewise_linear_clamps_outside_range() {
        let f = ArrivalRateFn::piecewise_linear(vec![(10.0, 1.0), (20.0, 3.0)]).unwrap();
        assert_eq!(f.value(0.0), 1.0);
        assert_eq!(f.value(30.0), 3.0);
        assert_relative_eq!(f.value(15.0), 2.0);
        // Mean over [0, 30]: 10*1 + (1+3)/2*10 + 10*3 = 60 -> 2.0.
        assert_relative_eq!(f.mean_over(30.0), 2.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ArrivalRateFn::constant(-0.1).is_err());
        assert!(ArrivalRateFn::sinusoid(0.1, 0.2, 100.0, 0.0).is_err());
        assert!(ArrivalRateFn::piecewise_linear(vec![(0.0, 0.1)]).is_err());
        assert!(ArrivalRateFn::piecewise_linear(vec![(0.0, 0.1), (0.0, 0.2)]).is_err());
    }
}
