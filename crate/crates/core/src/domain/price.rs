//! Task-price distributions and their mean-shortage functions.
//!
//! The backward induction never integrates over prices directly: every
//! backup only needs the mean shortage `phi(p) = E[max(0, X - p)]`, the
//! expected excess of a price draw above a threshold. Each distribution here
//! provides `phi` in closed form.

use super::DomainError;
use rand::Rng;

/// One piece of an empirical distribution: weight `w` spread uniformly over
/// `[lo, hi]`, degenerating to a point mass when `lo == hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Price distribution of a task class, supported on `[0, inf)`.
#[derive(Clone, Debug, PartialEq)]
pub enum PriceDistribution {
    /// Lomax (Pareto type II): survival `(1 + p/scale)^{-shape}`.
    /// Requires `shape > 1` so the mean is finite.
    Lomax { shape: f64, scale: f64 },
    /// Piecewise-linear CDF given by weighted segments; point masses are
    /// zero-width segments.
    Empirical { segments: Vec<Segment> },
    /// Convex mixture of other distributions (used by the average-class
    /// baseline; not a configuration-level kind).
    Mixture { components: Vec<(f64, PriceDistribution)> },
}

impl PriceDistribution {
    pub fn lomax(shape: f64, scale: f64) -> Result<Self, DomainError> {
        if !(shape.is_finite() && shape > 1.0) {
            return Err(DomainError::InfiniteMean { shape });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DomainError::InvalidPrice("lomax scale must be > 0".into()));
        }
        Ok(Self::Lomax { shape, scale })
    }

    /// Point masses at `values` with the given weights.
    pub fn empirical_atoms(values: &[f64], weights: &[f64]) -> Result<Self, DomainError> {
        let pairs: Vec<Segment> = values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| Segment { lo: v, hi: v, weight: w })
            .collect();
        Self::from_segments(pairs)
    }

    /// Interpolated empirical CDF over sorted sample points: the first point
    /// carries its weight as a mass, each later weight rises linearly from
    /// the previous point. This is the usual continuous reconstruction of an
    /// empirical CDF from samples.
    pub fn empirical_interpolated(points: &[f64], weights: &[f64]) -> Result<Self, DomainError> {
        if points.is_empty() {
            return Err(DomainError::InvalidPrice("empirical distribution needs at least one point".into()));
        }
        let mut segs = Vec::with_capacity(points.len());
        segs.push(Segment { lo: points[0], hi: points[0], weight: weights.first().copied().unwrap_or(0.0) });
        for i in 1..points.len() {
            segs.push(Segment { lo: points[i - 1], hi: points[i], weight: weights[i] });
        }
        Self::from_segments(segs)
    }

    fn from_segments(segments: Vec<Segment>) -> Result<Self, DomainError> {
        if segments.is_empty() {
            return Err(DomainError::InvalidPrice("empirical distribution needs at least one segment".into()));
        }
        let mut prev_hi = f64::NEG_INFINITY;
        let mut total = 0.0;
        for s in &segments {
            if !(s.lo.is_finite() && s.hi.is_finite() && s.lo >= 0.0 && s.hi >= s.lo) {
                return Err(DomainError::InvalidPrice("empirical support must be finite, non-negative, and sorted".into()));
            }
            if s.lo < prev_hi {
                return Err(DomainError::InvalidPrice("empirical segments must be non-overlapping and sorted".into()));
            }
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(DomainError::InvalidPrice("empirical weights must be >= 0".into()));
            }
            prev_hi = s.hi;
            total += s.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(DomainError::InvalidPrice(format!("empirical weights must sum to 1 (got {total})")));
        }
        Ok(Self::Empirical { segments })
    }

    pub fn mixture(components: Vec<(f64, PriceDistribution)>) -> Result<Self, DomainError> {
        if components.is_empty() {
            return Err(DomainError::InvalidPrice("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(DomainError::InvalidPrice("mixture weights must have positive finite sum".into()));
        }
        let components = components.into_iter().map(|(w, d)| (w / total, d)).collect();
        Ok(Self::Mixture { components })
    }

    /// Cumulative distribution function, right-continuous.
    pub fn cdf(&self, p: f64) -> f64 {
        if p < 0.0 {
            return 0.0;
        }
        match self {
            Self::Lomax { shape, scale } => 1.0 - (1.0 + p / scale).powf(-shape),
            Self::Empirical { segments } => {
                let mut acc = 0.0;
                for s in segments {
                    if p >= s.hi {
                        acc += s.weight;
                    } else if p > s.lo {
                        acc += s.weight * (p - s.lo) / (s.hi - s.lo);
                    }
                }
                acc
            }
            Self::Mixture { components } => components.iter().map(|(w, d)| w * d.cdf(p)).sum(),
        }
    }

    /// Mean shortage `phi(p) = integral_p^inf (1 - F(y)) dy = E[max(0, X - p)]`.
    ///
    /// Negative `p` extends linearly (`phi(p) = phi(0) - p`), which is the
    /// exact value for distributions supported on `[0, inf)`.
    pub fn mean_shortage(&self, p: f64) -> f64 {
        if p < 0.0 {
            return self.mean_shortage(0.0) - p;
        }
        match self {
            Self::Lomax { shape, scale } => scale * (1.0 + p / scale).powf(1.0 - shape) / (shape - 1.0),
            Self::Empirical { segments } => {
                let mut acc = 0.0;
                for s in segments {
                    if s.weight == 0.0 || p >= s.hi {
                        continue;
                    }
                    if s.lo == s.hi {
                        acc += s.weight * (s.lo - p);
                    } else if p <= s.lo {
                        acc += s.weight * (0.5 * (s.lo + s.hi) - p);
                    } else {
                        // p inside the segment: conditional excess of a
                        // uniform draw, (hi - p)^2 / (2 (hi - lo)).
                        acc += s.weight * (s.hi - p) * (s.hi - p) / (2.0 * (s.hi - s.lo));
                    }
                }
                acc
            }
            Self::Mixture { components } => components.iter().map(|(w, d)| w * d.mean_shortage(p)).sum(),
        }
    }

    /// Expected price, `phi(0)`.
    pub fn mean(&self) -> f64 {
        self.mean_shortage(0.0)
    }

    /// Draws a price by inverse CDF.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Lomax { shape, scale } => {
                let u: f64 = rng.gen();
                scale * ((1.0 - u).powf(-1.0 / shape) - 1.0)
            }
            Self::Empirical { segments } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for s in segments {
                    acc += s.weight;
                    if u < acc || s.weight > 0.0 && acc >= 1.0 {
                        if s.lo == s.hi {
                            return s.lo;
                        }
                        let v: f64 = rng.gen();
                        return s.lo + v * (s.hi - s.lo);
                    }
                }
                segments.last().map(|s| s.hi).unwrap_or(0.0)
            }
            Self::Mixture { components } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, d) in components {
                    acc += w;
                    if u < acc {
                        return d.sample(rng);
                    }
                }
                components.last().map(|(_, d)| d.sample(rng)).unwrap_or(0.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Adaptive Simpson integration of the survival function on a compactified
    /// axis: y = p + c * s/(1-s) maps [0, 1) onto [p, inf), with `c` a scale
    /// hint that centres the integrand mass. Independent of the closed forms
    /// it is used to check.
    pub(crate) fn shortage_by_quadrature(d: &PriceDistribution, p: f64, scale_hint: f64) -> f64 {
        let c = scale_hint.max(1e-6) + p;
        let g = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let y = p + c * s / (1.0 - s);
            (1.0 - d.cdf(y)) * c / ((1.0 - s) * (1.0 - s))
        };
        fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = g(lm);
            let frm = g(rm);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            // A few levels are forced so a coincidental Richardson agreement
            // on a coarse grid cannot end the recursion early.
            if depth == 0 || depth <= 40 && (left + right - whole).abs() <= 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(g, a, m, fa, flm, fm, eps / 2.0, depth - 1)
                    + simpson(g, m, b, fm, frm, fb, eps / 2.0, depth - 1)
            }
        }
        let (a, b) = (0.0, 1.0 - 1e-12);
        simpson(&g, a, b, g(a), g(0.5 * (a + b)), g(b), 1e-12, 48)
    }

    #[test]
    fn lomax_mean_matches_quadrature_at_zero() {
        let d = PriceDistribution::lomax(3.0, 1600.0).unwrap();
        assert_relative_eq!(d.mean(), 800.0, max_relative = 1e-12);
        assert_relative_eq!(shortage_by_quadrature(&d, 0.0, 1600.0), 800.0, max_relative = 1e-8);
    }

    #[test]
    fn lomax_shortage_matches_quadrature_on_log_grid() {
        // Shapes stay above 2 so the compactified integrand vanishes at the
        // right endpoint instead of carrying an integrable singularity. The
        // grid spans two decades either side of the scale, which covers any
        // threshold the solver can produce.
        for &(shape, scale) in &[(3.0, 400.0), (3.0, 1600.0), (2.2, 900.0)] {
            let d = PriceDistribution::lomax(shape, scale).unwrap();
            for i in 0..40 {
                let p = 1e-2 * scale * (1e4f64).powf(i as f64 / 39.0);
                let closed = d.mean_shortage(p);
                let quad = shortage_by_quadrature(&d, p, scale);
                assert_relative_eq!(closed, quad, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn shortage_vanishes_for_large_p() {
        let dists = [
            PriceDistribution::lomax(3.0, 1600.0).unwrap(),
            PriceDistribution::empirical_atoms(&[2.0, 7.0], &[0.25, 0.75]).unwrap(),
        ];
        for d in &dists {
            assert!(d.mean_shortage(1e12) < 1e-6);
        }
    }

    #[test]
    fn lomax_with_unit_shape_is_rejected() {
        assert!(matches!(
            PriceDistribution::lomax(1.0, 100.0),
            Err(DomainError::InfiniteMean { .. })
        ));
        assert!(PriceDistribution::lomax(0.5, 100.0).is_err());
    }

    #[test]
    fn single_atom_shortage() {
        let d = PriceDistribution::empirical_atoms(&[5.0], &[1.0]).unwrap();
        assert_eq!(d.mean_shortage(0.0), 5.0);
        assert_eq!(d.mean_shortage(5.0), 0.0);
        assert_eq!(d.mean_shortage(2.0), 3.0);
        assert_eq!(d.cdf(4.999), 0.0);
        assert_eq!(d.cdf(5.0), 1.0);
    }

    #[test]
    fn interpolated_empirical_shortage_matches_quadrature() {
        let d = PriceDistribution::empirical_interpolated(&[1.0, 4.0, 10.0], &[0.2, 0.5, 0.3]).unwrap();
        for p in [0.0, 0.5, 1.0, 2.0, 4.0, 7.0, 10.0, 12.0] {
            assert_relative_eq!(
                d.mean_shortage(p),
                shortage_by_quadrature(&d, p, 10.0),
                max_relative = 1e-7,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn shortage_slope_is_cdf_minus_one() {
        let dists = [
            PriceDistribution::lomax(3.0, 900.0).unwrap(),
            PriceDistribution::empirical_interpolated(&[10.0, 50.0, 120.0], &[0.1, 0.6, 0.3]).unwrap(),
        ];
        for d in &dists {
            for i in 1..40 {
                let p = 4.0 * i as f64;
                let h = 1e-5;
                let slope = (d.mean_shortage(p + h) - d.mean_shortage(p - h)) / (2.0 * h);
                assert!(
                    (slope - (d.cdf(p) - 1.0)).abs() < 1e-4,
                    "slope {slope} vs F-1 {}",
                    d.cdf(p) - 1.0
                );
            }
        }
    }

    #[test]
    fn mixture_is_convex_combination() {
        let a = PriceDistribution::lomax(3.0, 1600.0).unwrap();
        let b = PriceDistribution::lomax(3.0, 400.0).unwrap();
        let m = PriceDistribution::mixture(vec![(0.25, a.clone()), (0.75, b.clone())]).unwrap();
        for p in [0.0, 10.0, 500.0] {
            assert_relative_eq!(
                m.mean_shortage(p),
                0.25 * a.mean_shortage(p) + 0.75 * b.mean_shortage(p),
                max_relative = 1e-12
            );
            assert_relative_eq!(m.cdf(p), 0.25 * a.cdf(p) + 0.75 * b.cdf(p), max_relative = 1e-12);
        }
    }

    #[test]
    fn sampling_tracks_the_cdf() {
        let d = PriceDistribution::lomax(3.0, 1600.0).unwrap();
        let mut rng = crate::rng::stream(9, crate::rng::Purpose::Features, 0, 0);
        let n = 100_000;
        let below: usize = (0..n).filter(|_| d.sample(&mut rng) <= 1600.0).count();
        let expect = d.cdf(1600.0);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((below as f64 / n as f64 - expect).abs() < 4.0 * se);
    }
}
