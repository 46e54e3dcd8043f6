//! Finite isolated time scales and their delta/nabla calculus.
//!
//! A [`TimeScale`] is a finite, strictly increasing list of real points. On
//! such a set every point except the maximum is right-scattered and every
//! point except the minimum is left-scattered, so the delta and nabla
//! derivatives reduce to forward and backward difference quotients and the
//! integrals reduce to graininess-weighted sums.
//!
//! The derived domains used throughout the calculus are exposed as index
//! ranges into [`TimeScale::points`]:
//!
//! | set      | points removed   | method                     |
//! |----------|------------------|----------------------------|
//! | `T^κ`    | max              | [`TimeScale::kappa_upper`] |
//! | `T_κ`    | min              | [`TimeScale::kappa_lower`] |
//! | `T_κ^κ`  | min and max      | [`TimeScale::kappa_both`]  |
//! | `T^{κ²}` | two largest      | [`TimeScale::kappa2_upper`]|
//! | `T_{κ²}` | two smallest     | [`TimeScale::kappa2_lower`]|

use std::ops::Range;

use thiserror::Error;

/// Smallest admissible number of points.
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeScaleError {
    #[error("a time scale needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("point #{index} ({value}) is not finite")]
    NonFinite { index: usize, value: f64 },
    #[error("points must be strictly increasing: #{index} ({value}) does not exceed its predecessor")]
    NotStrictlyIncreasing { index: usize, value: f64 },
    #[error("{0} is not a point of the time scale")]
    PointNotInScale(f64),
    #[error("{op} is undefined at t = {t}")]
    OutsideDomain { op: &'static str, t: f64 },
    #[error("invalid integration interval [{a}, {b}]: lower bound exceeds upper bound")]
    InvalidInterval { a: f64, b: f64 },
    #[error("grid function has {found} values but the time scale has {expected} points")]
    LengthMismatch { expected: usize, found: usize },
}

/// Direction of a jump operator or graininess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Jump {
    /// `σ` and `μ(t) = σ(t) - t`.
    Forward,
    /// `ρ` and `ν(t) = t - ρ(t)`.
    Backward,
}

/// A finite isolated time scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    points: Vec<f64>,
}

impl TimeScale {
    /// Builds a time scale, validating strict monotonicity without tolerance.
    pub fn new(points: Vec<f64>) -> Result<Self, TimeScaleError> {
        if points.len() < MIN_POINTS {
            return Err(TimeScaleError::TooFewPoints(points.len()));
        }
        for (index, &value) in points.iter().enumerate() {
            if !value.is_finite() {
                return Err(TimeScaleError::NonFinite { index, value });
            }
            if index > 0 && value <= points[index - 1] {
                return Err(TimeScaleError::NotStrictlyIncreasing { index, value });
            }
        }
        Ok(Self { points })
    }

    /// The integer slice `{a, a+1, .., b}`.
    pub fn integers(a: i64, b: i64) -> Result<Self, TimeScaleError> {
        Self::new((a..=b).map(|k| k as f64).collect())
    }

    /// The slice `{start, start+h, .., start+(n-1)h}` of `hℤ` shifted by `start`.
    pub fn uniform(start: f64, h: f64, n: usize) -> Result<Self, TimeScaleError> {
        Self::new((0..n).map(|k| start + h * k as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    /// The point at `index`. Panics if out of range.
    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Exact-equality lookup of a time point.
    pub fn index_of(&self, t: f64) -> Result<usize, TimeScaleError> {
        if t.is_nan() {
            return Err(TimeScaleError::PointNotInScale(t));
        }
        // points are finite and t is not NaN, so partial_cmp is total here
        self.points
            .binary_search_by(|p| p.partial_cmp(&t).unwrap())
            .map_err(|_| TimeScaleError::PointNotInScale(t))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.index_of(t).is_ok()
    }

    /// Index of `σ(t_i)`; the maximum maps to itself.
    pub fn sigma_index(&self, i: usize) -> usize {
        (i + 1).min(self.last_index())
    }

    /// Index of `ρ(t_i)`; the minimum maps to itself.
    pub fn rho_index(&self, i: usize) -> usize {
        i.saturating_sub(1)
    }

    /// Forward jump `σ(t)`.
    pub fn sigma(&self, t: f64) -> Result<f64, TimeScaleError> {
        let i = self.index_of(t)?;
        Ok(self.points[self.sigma_index(i)])
    }

    /// Backward jump `ρ(t)`.
    pub fn rho(&self, t: f64) -> Result<f64, TimeScaleError> {
        let i = self.index_of(t)?;
        Ok(self.points[self.rho_index(i)])
    }

    pub fn mu_at(&self, i: usize) -> f64 {
        self.points[self.sigma_index(i)] - self.points[i]
    }

    pub fn nu_at(&self, i: usize) -> f64 {
        self.points[i] - self.points[self.rho_index(i)]
    }

    /// `μ(t)` or `ν(t)`; zero exactly at the clamped endpoint.
    pub fn graininess(&self, t: f64, kind: Jump) -> Result<f64, TimeScaleError> {
        let i = self.index_of(t)?;
        Ok(match kind {
            Jump::Forward => self.mu_at(i),
            Jump::Backward => self.nu_at(i),
        })
    }

    /// `T^κ`: every point but the maximum.
    pub fn kappa_upper(&self) -> Range<usize> {
        0..self.last_index()
    }

    /// `T_κ`: every point but the minimum.
    pub fn kappa_lower(&self) -> Range<usize> {
        1..self.len()
    }

    /// `T_κ^κ`: the interior points.
    pub fn kappa_both(&self) -> Range<usize> {
        1..self.last_index()
    }

    /// `T^{κ²}`: every point but the two largest.
    pub fn kappa2_upper(&self) -> Range<usize> {
        0..self.len() - 2
    }

    /// `T_{κ²}`: every point but the two smallest.
    pub fn kappa2_lower(&self) -> Range<usize> {
        2..self.len()
    }

    /// True when the points are the consecutive integers `a, a+1, .., b`.
    pub fn is_integer_range(&self) -> bool {
        let a = self.points[0];
        a.fract() == 0.0 && self.points.iter().enumerate().all(|(k, &p)| p == a + k as f64)
    }

    fn interval(&self, a: f64, b: f64) -> Result<(usize, usize), TimeScaleError> {
        let ia = self.index_of(a)?;
        let ib = self.index_of(b)?;
        if ia > ib {
            return Err(TimeScaleError::InvalidInterval { a, b });
        }
        Ok((ia, ib))
    }
}

/// Real values attached to every point of a time scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<'s> {
    scale: &'s TimeScale,
    values: Vec<f64>,
}

impl<'s> GridFunction<'s> {
    pub fn new(scale: &'s TimeScale, values: Vec<f64>) -> Result<Self, TimeScaleError> {
        if values.len() != scale.len() {
            return Err(TimeScaleError::LengthMismatch {
                expected: scale.len(),
                found: values.len(),
            });
        }
        Ok(Self { scale, values })
    }

    /// Samples `f` at every point.
    pub fn from_fn(scale: &'s TimeScale, f: impl Fn(f64) -> f64) -> Self {
        let values = scale.points.iter().map(|&t| f(t)).collect();
        Self { scale, values }
    }

    pub fn constant(scale: &'s TimeScale, c: f64) -> Self {
        Self::from_fn(scale, |_| c)
    }

    pub fn scale(&self) -> &'s TimeScale {
        self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, t: f64) -> Result<f64, TimeScaleError> {
        Ok(self.values[self.scale.index_of(t)?])
    }

    pub fn at_index(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// `g^σ = g ∘ σ`.
    pub fn compose_sigma(&self) -> GridFunction<'s> {
        let values = (0..self.scale.len())
            .map(|i| self.values[self.scale.sigma_index(i)])
            .collect();
        GridFunction {
            scale: self.scale,
            values,
        }
    }

    /// `g^ρ = g ∘ ρ`.
    pub fn compose_rho(&self) -> GridFunction<'s> {
        let values = (0..self.scale.len())
            .map(|i| self.values[self.scale.rho_index(i)])
            .collect();
        GridFunction {
            scale: self.scale,
            values,
        }
    }

    /// Pointwise combination with another function on the same scale.
    pub fn zip_with(&self, other: &GridFunction<'_>, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.scale, other.scale);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridFunction {
            scale: self.scale,
            values,
        }
    }

    /// Forward difference quotient at index `i`; requires `i ∈ T^κ`.
    pub fn delta_at_index(&self, i: usize) -> Result<f64, TimeScaleError> {
        if i >= self.scale.last_index() {
            return Err(TimeScaleError::OutsideDomain {
                op: "delta derivative",
                t: self.scale.point(i),
            });
        }
        Ok((self.values[i + 1] - self.values[i]) / self.scale.mu_at(i))
    }

    /// Backward difference quotient at index `i`; requires `i ∈ T_κ`.
    pub fn nabla_at_index(&self, i: usize) -> Result<f64, TimeScaleError> {
        if i == 0 {
            return Err(TimeScaleError::OutsideDomain {
                op: "nabla derivative",
                t: self.scale.point(0),
            });
        }
        Ok((self.values[i] - self.values[i - 1]) / self.scale.nu_at(i))
    }

    pub fn delta_at(&self, t: f64) -> Result<f64, TimeScaleError> {
        self.delta_at_index(self.scale.index_of(t)?)
    }

    pub fn nabla_at(&self, t: f64) -> Result<f64, TimeScaleError> {
        self.nabla_at_index(self.scale.index_of(t)?)
    }

    /// `g^Δ` on `T^κ`.
    pub fn delta_derivative(&self) -> PartialGridFunction<'s> {
        let domain = self.scale.kappa_upper();
        let values = domain
            .clone()
            .map(|i| (self.values[i + 1] - self.values[i]) / self.scale.mu_at(i))
            .collect();
        PartialGridFunction {
            scale: self.scale,
            domain,
            values,
        }
    }

    /// `g^∇` on `T_κ`.
    pub fn nabla_derivative(&self) -> PartialGridFunction<'s> {
        let domain = self.scale.kappa_lower();
        let values = domain
            .clone()
            .map(|i| (self.values[i] - self.values[i - 1]) / self.scale.nu_at(i))
            .collect();
        PartialGridFunction {
            scale: self.scale,
            domain,
            values,
        }
    }

    /// `∫_a^b g Δt = Σ_{t ∈ [a,b)} μ(t) g(t)`.
    pub fn delta_integral(&self, a: f64, b: f64) -> Result<f64, TimeScaleError> {
        let (ia, ib) = self.scale.interval(a, b)?;
        Ok((ia..ib).map(|i| self.scale.mu_at(i) * self.values[i]).sum())
    }

    /// `∫_a^b g ∇t = Σ_{t ∈ (a,b]} ν(t) g(t)`.
    pub fn nabla_integral(&self, a: f64, b: f64) -> Result<f64, TimeScaleError> {
        let (ia, ib) = self.scale.interval(a, b)?;
        Ok((ia + 1..=ib).map(|i| self.scale.nu_at(i) * self.values[i]).sum())
    }

    /// `‖y‖_{1,∞} = ‖y^σ‖ + ‖y^Δ‖ + ‖y^ρ‖ + ‖y^∇‖`, each sup taken over `T_κ^κ`.
    pub fn norm_1_inf(&self) -> f64 {
        let sup = |f: &dyn Fn(usize) -> f64| self.scale.kappa_both().map(|i| f(i).abs()).fold(0.0, f64::max);
        let s = self.scale;
        let v = &self.values;
        sup(&|i| v[s.sigma_index(i)])
            + sup(&|i| (v[i + 1] - v[i]) / s.mu_at(i))
            + sup(&|i| v[s.rho_index(i)])
            + sup(&|i| (v[i] - v[i - 1]) / s.nu_at(i))
    }
}

/// A grid function known only on a contiguous index range of its scale,
/// e.g. a delta derivative on `T^κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialGridFunction<'s> {
    scale: &'s TimeScale,
    domain: Range<usize>,
    values: Vec<f64>,
}

impl<'s> PartialGridFunction<'s> {
    pub fn new(scale: &'s TimeScale, domain: Range<usize>, values: Vec<f64>) -> Result<Self, TimeScaleError> {
        if values.len() != domain.len() || domain.end > scale.len() {
            return Err(TimeScaleError::LengthMismatch {
                expected: domain.len(),
                found: values.len(),
            });
        }
        Ok(Self { scale, domain, values })
    }

    pub fn scale(&self) -> &'s TimeScale {
        self.scale
    }

    pub fn domain(&self) -> Range<usize> {
        self.domain.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Time points of the domain, in order.
    pub fn times(&self) -> Vec<f64> {
        self.domain.clone().map(|i| self.scale.point(i)).collect()
    }

    pub fn at_index(&self, i: usize) -> Result<f64, TimeScaleError> {
        if self.domain.contains(&i) {
            Ok(self.values[i - self.domain.start])
        } else {
            Err(TimeScaleError::OutsideDomain {
                op: "restricted grid function",
                t: self.scale.point(i.min(self.scale.last_index())),
            })
        }
    }

    pub fn at(&self, t: f64) -> Result<f64, TimeScaleError> {
        self.at_index(self.scale.index_of(t)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z4() -> TimeScale {
        TimeScale::integers(0, 3).unwrap()
    }

    fn uneven() -> TimeScale {
        TimeScale::new(vec![0.0, 0.5, 2.0]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_point_sets() {
        assert_eq!(TimeScale::new(vec![0.0, 1.0]), Err(TimeScaleError::TooFewPoints(2)));
        assert!(matches!(
            TimeScale::new(vec![0.0, 1.0, 1.0]),
            Err(TimeScaleError::NotStrictlyIncreasing { index: 2, .. })
        ));
        assert!(matches!(
            TimeScale::new(vec![0.0, 2.0, 1.0]),
            Err(TimeScaleError::NotStrictlyIncreasing { index: 2, .. })
        ));
        assert!(matches!(
            TimeScale::new(vec![0.0, f64::NAN, 1.0]),
            Err(TimeScaleError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn jumps() {
        let ts = z4();
        assert_eq!(ts.sigma(1.0), Ok(2.0));
        assert_eq!(ts.sigma(3.0), Ok(3.0));
        assert_eq!(uneven().sigma(0.5), Ok(2.0));
        assert_eq!(ts.rho(2.0), Ok(1.0));
        assert_eq!(ts.rho(0.0), Ok(0.0));
        assert_eq!(uneven().rho(2.0), Ok(0.5));
        assert_eq!(ts.sigma(1.5), Err(TimeScaleError::PointNotInScale(1.5)));
        assert_eq!(ts.rho(-1.0), Err(TimeScaleError::PointNotInScale(-1.0)));
    }

    #[test]
    fn graininess_values() {
        let h = 0.5;
        let hz = TimeScale::uniform(0.0, h, 3).unwrap();
        assert_eq!(hz.graininess(h, Jump::Forward), Ok(0.5));
        assert_eq!(hz.graininess(h, Jump::Backward), Ok(0.5));
        let ts = z4();
        assert_eq!(ts.graininess(3.0, Jump::Forward), Ok(0.0));
        assert_eq!(ts.graininess(0.0, Jump::Backward), Ok(0.0));
        assert!(ts.graininess(0.25, Jump::Forward).is_err());
    }

    #[test]
    fn derived_domains() {
        let ts = TimeScale::integers(0, 5).unwrap();
        assert_eq!(ts.kappa_upper(), 0..5);
        assert_eq!(ts.kappa_lower(), 1..6);
        assert_eq!(ts.kappa_both(), 1..5);
        assert_eq!(ts.kappa2_upper(), 0..4);
        assert_eq!(ts.kappa2_lower(), 2..6);
        assert!(ts.is_integer_range());
        assert!(!uneven().is_integer_range());
        assert!(!TimeScale::new(vec![0.5, 1.5, 2.5]).unwrap().is_integer_range());
        assert!(!TimeScale::new(vec![0.0, 1.0, 3.0]).unwrap().is_integer_range());
    }

    #[test]
    fn delta_derivative_examples() {
        let ts = z4();
        let g = GridFunction::new(&ts, vec![2.0, 2.910488556, 2.970017180, 3.0]).unwrap();
        assert!((g.delta_at(0.0).unwrap() - 0.910488556).abs() < 1e-12);
        assert!(matches!(g.delta_at(3.0), Err(TimeScaleError::OutsideDomain { .. })));
        let d = g.delta_derivative();
        assert_eq!(d.domain(), 0..3);
        assert!(d.at(3.0).is_err());

        let c = GridFunction::constant(&ts, 4.2).delta_derivative();
        assert!(c.values().iter().all(|&v| v == 0.0));

        let s = TimeScale::new(vec![0.0, 1.0, 3.0]).unwrap();
        let g = GridFunction::new(&s, vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.delta_at(1.0), Ok(1.5));
    }

    #[test]
    fn nabla_derivative_examples() {
        let ts = z4();
        let g = GridFunction::new(&ts, vec![2.0, 2.910488556, 2.970017180, 3.0]).unwrap();
        assert!((g.nabla_at(3.0).unwrap() - 0.029982820).abs() < 1e-12);
        assert!(matches!(g.nabla_at(0.0), Err(TimeScaleError::OutsideDomain { .. })));
        let c = GridFunction::constant(&ts, -1.0).nabla_derivative();
        assert_eq!(c.domain(), 1..4);
        assert!(c.values().iter().all(|&v| v == 0.0));

        let s = TimeScale::new(vec![0.0, 1.0, 3.0]).unwrap();
        let g = GridFunction::new(&s, vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.nabla_at(3.0), Ok(1.5));
    }

    #[test]
    fn integral_examples() {
        let ts = z4();
        let one = GridFunction::constant(&ts, 1.0);
        assert_eq!(one.delta_integral(0.0, 3.0), Ok(3.0));
        assert_eq!(one.nabla_integral(0.0, 3.0), Ok(3.0));
        assert_eq!(one.delta_integral(2.0, 2.0), Ok(0.0));
        assert_eq!(one.nabla_integral(2.0, 2.0), Ok(0.0));

        let s = uneven();
        let g = GridFunction::new(&s, vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(g.delta_integral(0.0, 2.0), Ok(3.5));
        assert_eq!(g.nabla_integral(0.0, 2.0), Ok(7.0));

        assert_eq!(
            one.delta_integral(3.0, 0.0),
            Err(TimeScaleError::InvalidInterval { a: 3.0, b: 0.0 })
        );
        assert_eq!(one.nabla_integral(0.0, 2.5), Err(TimeScaleError::PointNotInScale(2.5)));
    }

    #[test]
    fn grid_function_length_is_checked() {
        let ts = z4();
        assert_eq!(
            GridFunction::new(&ts, vec![1.0; 3]),
            Err(TimeScaleError::LengthMismatch { expected: 4, found: 3 })
        );
    }

    #[test]
    fn norm_of_linear_function() {
        let ts = z4();
        let y = GridFunction::from_fn(&ts, |t| 2.0 + t / 3.0);
        // sup|y^σ| = y(3), sup|y^Δ| = 1/3, sup|y^ρ| = y(1), sup|y^∇| = 1/3
        let expected = 3.0 + 1.0 / 3.0 + (2.0 + 1.0 / 3.0) + 1.0 / 3.0;
        assert!((y.norm_1_inf() - expected).abs() < 1e-12);
    }
}
