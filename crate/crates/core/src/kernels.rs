//! Closed-form kernels and decay-rate tables.
//!
//! The method-of-images solutions here are exact oracles for the Dirichlet
//! heat flow on the half-line and (through `w = r u`) on the exterior of a
//! ball in `R^3`; the numerical solver is checked against them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};

/// Gaussian heat kernel `(4πt)^{-N/2} exp(-r²/4t)` of `R^N` at `|x| = r`.
pub fn gaussian(dimension: u32, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("gaussian needs t > 0, got {t}")));
    }
    Ok(gaussian_unchecked(dimension, t, r))
}

pub(crate) fn gaussian_unchecked(dimension: u32, t: f64, r: f64) -> f64 {
    let log_value = -0.5 * dimension as f64 * (4.0 * PI * t).ln() - r * r / (4.0 * t);
    log_value.exp()
}

/// Samples of a function on the uniform lattice `y_j = j · spacing`,
/// `j = 0..len`, on the half-line.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineData {
    spacing: f64,
    values: Vec<f64>,
}

impl HalfLineData {
    pub fn new(spacing: f64, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || values.len() < 2 {
            return Err(Error::InvalidArgument(
                "half-line data needs positive spacing and two samples".into(),
            ));
        }
        Ok(Self { spacing, values })
    }

    /// Sample `f` on `[0, extent]` with `intervals` uniform intervals.
    pub fn sample(f: impl Fn(f64) -> f64, extent: f64, intervals: usize) -> Self {
        let spacing = extent / intervals as f64;
        let values = (0..=intervals).map(|j| f(j as f64 * spacing)).collect();
        Self { spacing, values }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extent(&self) -> f64 {
        self.spacing * (self.values.len() - 1) as f64
    }
}

/// `G₁(t, x - y) - G₁(t, x + y)` without cancellation near `x y = 0`.
fn image_kernel(t: f64, x: f64, y: f64) -> f64 {
    let exponent = -(x - y) * (x - y) / (4.0 * t);
    if exponent < -745.0 {
        return 0.0;
    }
    let reflection = -(-x * y / t).exp_m1();
    (4.0 * PI * t).powf(-0.5) * exponent.exp() * reflection
}

/// Exact Dirichlet heat flow on `(0, ∞)` at `(t, x)` from sampled data,
/// `∫₀^∞ [G₁(t, x−y) − G₁(t, x+y)] u₀(y) dy`, by the trapezoid rule on the
/// data lattice.
pub fn halfline_image_solution(t: f64, x: f64, data: &HalfLineData) -> f64 {
    if x <= 0.0 || !(t > 0.0) {
        return 0.0;
    }
    let last = data.values.len() - 1;
    if data.values[last] != 0.0 {
        log::warn!("half-line oracle: data support touches the sampling window");
    }
    let h = data.spacing;
    data.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, &v)| {
            let w = if j == 0 || j == last { 0.5 * h } else { h };
            w * v * image_kernel(t, x, j as f64 * h)
        })
        .sum()
}

/// Exact radial Dirichlet heat flow outside `B(0, r0) ⊂ R^3`.
///
/// `data` holds samples of `u₀(r0 + s)` on the half-line in `s = r − r0`;
/// the solution is `u(t, r) = w(t, r − r0) / r` where `w` solves the
/// half-line problem with data `s ↦ (s + r0) u₀(s + r0)`.
pub fn exterior_ball_image_solution_3d(
    t: f64,
    r: f64,
    r0: f64,
    data: &HalfLineData,
) -> Result<f64> {
    if r < r0 {
        return Err(Error::OutsideDomain { r, r0 });
    }
    let weighted = HalfLineData {
        spacing: data.spacing,
        values: data
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| (j as f64 * data.spacing + r0) * v)
            .collect(),
    };
    Ok(halfline_image_solution(t, r - r0, &weighted) / r)
}

/// Exponents of `(1 + t)^a (1 + ln(1 + t))^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub power_exponent: f64,
    pub log_exponent: f64,
}

impl RatePair {
    pub const ONE: RatePair = RatePair {
        power_exponent: 0.0,
        log_exponent: 0.0,
    };

    pub fn new(power_exponent: f64, log_exponent: f64) -> Self {
        Self {
            power_exponent,
            log_exponent,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let l = 1.0 + (1.0 + t).ln();
        (1.0 + t).powf(self.power_exponent) * l.powf(self.log_exponent)
    }

    /// `d/dt ln` of [`RatePair::eval`].
    pub fn log_derivative(&self, t: f64) -> f64 {
        let l = 1.0 + (1.0 + t).ln();
        (self.power_exponent + self.log_exponent / l) / (1.0 + t)
    }

    pub fn mul(&self, other: &RatePair) -> RatePair {
        RatePair::new(
            self.power_exponent + other.power_exponent,
            self.log_exponent + other.log_exponent,
        )
    }

    pub fn pow(&self, k: f64) -> RatePair {
        RatePair::new(self.power_exponent * k, self.log_exponent * k)
    }
}

/// Extra decay factor of the exterior problem relative to whole space.
pub fn rate_e(dimension: u32) -> RatePair {
    match dimension {
        1 => RatePair::new(0.5, 0.0),
        2 => RatePair::new(0.0, 1.0),
        _ => RatePair::ONE,
    }
}

/// Decay envelope of the absorbed tail `∫_t^∞ u^p ds`.
pub fn rate_e_tilde(dimension: u32, p: f64) -> RatePair {
    match dimension {
        1 => RatePair::new(2.0 - p, 0.0),
        2 => RatePair::new(2.0 - p, 1.0 - p),
        n => RatePair::new(1.0 - n as f64 * (p - 1.0) / 2.0, 0.0),
    }
}

/// `(1 + t)^{N/2} ℰ_N(t)`, the L^∞ decay denominator of the linear flow.
pub fn linear_sup_decay(dimension: u32) -> RatePair {
    RatePair::new(dimension as f64 / 2.0, 0.0).mul(&rate_e(dimension))
}

/// `ℰ̃(t) + (1/t) ∫₀ᵗ ℰ̃(s) ds`, the envelope for the distance to the linear
/// asymptotic profile.
pub fn profile_envelope(dimension: u32, p: f64, t: f64) -> f64 {
    let rate = rate_e_tilde(dimension, p);
    let avg = if t > 0.0 {
        power_log_integral_0_t(rate.power_exponent, rate.log_exponent, t) / t
    } else {
        1.0
    };
    rate.eval(t) + avg
}

/// `(1 + s)^r (1 + ln(1 + s))^m`.
pub fn power_log(r: f64, m: f64, s: f64) -> f64 {
    (1.0 + s).powf(r) * (1.0 + (1.0 + s).ln()).powf(m)
}

/// Case split of `∫₀ᵗ (1+s)^r (1+ln(1+s))^m ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadRegime {
    /// `r > -1`: bounded by `C (1+t)^{r+1} (1+ln(1+t))^m`.
    Power,
    /// `r = -1, m > -1`: bounded by `C (1+ln(1+t))^{m+1}`.
    Log,
    /// `r = -1, m = -1`: equals `ln(1 + ln(1 + t))`.
    DoubleLog,
    /// Otherwise: bounded by a constant.
    Bounded,
}

/// Case split of `∫ₜ^∞ (1+s)^r (1+ln(1+s))^m ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TailRegime {
    /// `r < -1`: bounded by `C (1+t)^{r+1} (1+ln(1+t))^m`.
    Power,
    /// `r = -1, m < -1`: equals `(1+ln(1+t))^{m+1} / |m+1|`.
    Log,
    Divergent,
}

pub fn head_regime(r: f64, m: f64) -> HeadRegime {
    if r > -1.0 {
        HeadRegime::Power
    } else if r == -1.0 && m > -1.0 {
        HeadRegime::Log
    } else if r == -1.0 && m == -1.0 {
        HeadRegime::DoubleLog
    } else {
        HeadRegime::Bounded
    }
}

pub fn tail_regime(r: f64, m: f64) -> TailRegime {
    if r < -1.0 {
        TailRegime::Power
    } else if r == -1.0 && m < -1.0 {
        TailRegime::Log
    } else {
        TailRegime::Divergent
    }
}

/// Shape of the head bound without its constant.
pub fn head_bound_shape(r: f64, m: f64, t: f64) -> f64 {
    let l = 1.0 + (1.0 + t).ln();
    match head_regime(r, m) {
        HeadRegime::Power => (1.0 + t).powf(r + 1.0) * l.powf(m),
        HeadRegime::Log => l.powf(m + 1.0),
        HeadRegime::DoubleLog => l.ln(),
        HeadRegime::Bounded => 1.0,
    }
}

/// Shape of the tail bound without its constant (`∞` when divergent).
pub fn tail_bound_shape(r: f64, m: f64, t: f64) -> f64 {
    let l = 1.0 + (1.0 + t).ln();
    match tail_regime(r, m) {
        TailRegime::Power => (1.0 + t).powf(r + 1.0) * l.powf(m),
        TailRegime::Log => l.powf(m + 1.0),
        TailRegime::Divergent => f64::INFINITY,
    }
}

fn tight() -> Tolerance {
    Tolerance {
        absolute: 1e-13,
        relative: 1e-13,
        max_intervals: 20_000,
    }
}

/// `∫₀ᵗ (1+s)^r (1+ln(1+s))^m ds` by adaptive quadrature in `u = ln(1+s)`.
pub fn power_log_integral_0_t(r: f64, m: f64, t: f64) -> f64 {
    let upper = (1.0 + t).ln();
    integrate(|u| ((r + 1.0) * u).exp() * (1.0 + u).powf(m), 0.0, upper, tight()).value
}

/// `∫ₜ^T (1+s)^r (1+ln(1+s))^m ds` for a finite upper limit.
pub fn power_log_integral_between(r: f64, m: f64, t: f64, upper: f64) -> f64 {
    integrate(
        |u| ((r + 1.0) * u).exp() * (1.0 + u).powf(m),
        (1.0 + t).ln(),
        (1.0 + upper).ln(),
        tight(),
    )
    .value
}

/// `∫ₜ^∞ (1+s)^r (1+ln(1+s))^m ds`, `None` when the integral diverges.
///
/// The `r = -1` case integrates to a finite cut in `u = ln(1+s)` and adds
/// the analytic remainder `(1+U)^{m+1} / |m+1|`.
pub fn power_log_integral_t_inf(r: f64, m: f64, t: f64) -> Option<f64> {
    let lower = (1.0 + t).ln();
    match tail_regime(r, m) {
        TailRegime::Divergent => None,
        TailRegime::Power => Some(
            integrate_to_infinity(
                |u| ((r + 1.0) * u).exp() * (1.0 + u).powf(m),
                lower,
                tight(),
            )
            .value,
        ),
        TailRegime::Log => {
            let cut = lower + 1000.0;
            let head = integrate(|u| (1.0 + u).powf(m), lower, cut, tight()).value;
            Some(head + (1.0 + cut).powf(m + 1.0) / (m + 1.0).abs())
        }
    }
}

/// Result of comparing an integral against its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadCheck {
    pub value: f64,
    pub bound: f64,
    pub regime: HeadRegime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    /// `None` when the integral diverges.
    pub value: Option<f64>,
    pub bound: f64,
    pub regime: TailRegime,
}

/// Quadrature value of `∫₀ᵗ` next to `constant × shape`.  The double-log
/// case is an identity and always uses constant 1.
pub fn integral_0_t_bound(r: f64, m: f64, t: f64, constant: f64) -> Result<HeadCheck> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0, got {t}")));
    }
    let regime = head_regime(r, m);
    let c = if regime == HeadRegime::DoubleLog { 1.0 } else { constant };
    Ok(HeadCheck {
        value: power_log_integral_0_t(r, m, t),
        bound: c * head_bound_shape(r, m, t),
        regime,
    })
}

/// Quadrature value of `∫ₜ^∞` next to `constant × shape`.  The log case
/// uses its exact constant `1 / |m + 1|`.
pub fn integral_t_inf_bound(r: f64, m: f64, t: f64, constant: f64) -> Result<TailCheck> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("need t >= 0, got {t}")));
    }
    let regime = tail_regime(r, m);
    let c = match regime {
        TailRegime::Log => 1.0 / (m + 1.0).abs(),
        _ => constant,
    };
    Ok(TailCheck {
        value: power_log_integral_t_inf(r, m, t),
        bound: c * tail_bound_shape(r, m, t),
        regime,
    })
}

/// Smallest constant making the head bound hold on the probe times.
pub fn calibrate_head_constant(r: f64, m: f64, probe_times: &[f64]) -> f64 {
    probe_times
        .iter()
        .map(|&t| power_log_integral_0_t(r, m, t) / head_bound_shape(r, m, t))
        .fold(0.0, f64::max)
}

/// Smallest constant making a convergent tail bound hold on the probe times.
pub fn calibrate_tail_constant(r: f64, m: f64, probe_times: &[f64]) -> Option<f64> {
    probe_times
        .iter()
        .map(|&t| Some(power_log_integral_t_inf(r, m, t)? / tail_bound_shape(r, m, t)))
        .try_fold(0.0, |acc: f64, x| x.map(|v| acc.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Tolerance;

    #[test]
    fn gaussian_values() {
        assert!((gaussian(1, 1.0 / (4.0 * PI), 0.0).unwrap() - 1.0).abs() < 1e-14);
        let expected = (4.0 * PI).powf(-1.5) * (-1.0f64).exp();
        assert!((gaussian(3, 1.0, 2.0).unwrap() - expected).abs() < 1e-15);
        assert!(gaussian(2, 0.0, 1.0).is_err());
        assert!(gaussian(2, -1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_has_unit_mass() {
        for n in 1..=3u32 {
            for t in [0.5, 2.0] {
                let c = if n == 1 { 2.0 } else { crate::geometry::unit_sphere_area(n) };
                let q = integrate_to_infinity(
                    |r| c * r.powi(n as i32 - 1) * gaussian_unchecked(n, t, r),
                    0.0,
                    Tolerance::default(),
                );
                assert!((q.value - 1.0).abs() < 1e-6, "N={n} t={t}: {}", q.value);
            }
        }
    }

    #[test]
    fn image_solution_vanishes_at_origin() {
        let data = HalfLineData::sample(|y| (-(y - 3.0).powi(2)).exp(), 12.0, 600);
        for t in [0.1, 1.0, 10.0] {
            assert_eq!(halfline_image_solution(t, 0.0, &data), 0.0);
        }
    }

    #[test]
    fn image_kernel_is_positive_and_underflow_safe() {
        let data = HalfLineData::sample(|y| if (1.0..2.0).contains(&y) { 1.0 } else { 0.0 }, 10.0, 500);
        for t in [1e-4, 0.01, 1.0, 100.0] {
            for x in [0.01, 0.5, 1.5, 5.0, 9.0] {
                let v = halfline_image_solution(t, x, &data);
                assert!(v >= 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn image_solution_follows_the_image_kernel_flow() {
        let s = 0.05;
        let a = 4.0;
        let kernel = |t: f64, x: f64| {
            gaussian_unchecked(1, t, x - a) - gaussian_unchecked(1, t, x + a)
        };
        let data = HalfLineData::sample(|y| kernel(s, y), 16.0, 3200);
        for t in [0.2, 1.0, 3.0] {
            for x in [0.5, 3.0, 4.0, 6.5] {
                let v = halfline_image_solution(t, x, &data);
                assert!((v - kernel(t + s, x)).abs() < 1e-8, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn image_solution_semigroup_property() {
        let bump = |y: f64| {
            let z = (y - 5.0) / 2.0;
            if z.abs() < 1.0 { (1.0 - 1.0 / (1.0 - z * z)).exp() } else { 0.0 }
        };
        let data = HalfLineData::sample(bump, 30.0, 3000);
        let (t1, t2) = (0.7, 1.3);
        let mid = HalfLineData::sample(|y| halfline_image_solution(t1, y, &data), 30.0, 3000);
        for x in [0.5, 2.0, 5.0, 8.0] {
            let two = halfline_image_solution(t2, x, &mid);
            let one = halfline_image_solution(t1 + t2, x, &data);
            assert!((two - one).abs() < 1e-8, "x={x}: {two} vs {one}");
        }
    }

    #[test]
    fn image_solution_preserves_first_moment() {
        let bump = |y: f64| {
            let z = (y - 3.0) / 1.5;
            if z.abs() < 1.0 { (1.0 - 1.0 / (1.0 - z * z)).exp() } else { 0.0 }
        };
        let data = HalfLineData::sample(bump, 60.0, 6000);
        let moment = |t: f64| {
            let snap = HalfLineData::sample(|x| x * halfline_image_solution(t, x, &data), 60.0, 1200);
            let h = snap.spacing();
            snap.values().iter().sum::<f64>() * h
        };
        let m0 = data.values().iter().enumerate().map(|(j, v)| j as f64 * 0.01 * v).sum::<f64>() * 0.01;
        for t in [0.5, 2.0, 10.0] {
            assert!((moment(t) - m0).abs() / m0 < 1e-6, "t={t}");
        }
    }

    #[test]
    fn exterior_ball_oracle_matches_indicator_solution() {
        // S(t)1 outside the unit ball is 1 - (r0/r) erfc((r - r0) / 2√t);
        // compare through the identity ∫₀^∞ erfc-type kernels on a long window.
        let r0 = 1.0;
        let data = HalfLineData::sample(|_| 1.0, 200.0, 40_000);
        let t = 2.0;
        let r = 2.0;
        let v = exterior_ball_image_solution_3d(t, r, r0, &data).unwrap();
        let z = (r - r0) / (2.0 * t.sqrt());
        let expected = 1.0 - r0 / r * erfc(z);
        assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
        assert_eq!(exterior_ball_image_solution_3d(t, r0, r0, &data).unwrap(), 0.0);
        assert!(exterior_ball_image_solution_3d(t, 0.5, r0, &data).is_err());
    }

    fn erfc(x: f64) -> f64 {
        // Complementary error function via the integral definition.
        let q = integrate_to_infinity(|s| (-s * s).exp(), x, Tolerance::default());
        2.0 / PI.sqrt() * q.value
    }

    #[test]
    fn rate_tables() {
        assert!((rate_e(1).eval(3.0) - 2.0).abs() < 1e-15);
        assert_eq!(rate_e(7).eval(12.0), 1.0);
        assert!((rate_e(2).eval(3.0) - (1.0 + 4f64.ln())).abs() < 1e-15);
        assert!((rate_e_tilde(3, 2.0).eval(3.0) - 0.5).abs() < 1e-15);
        assert_eq!(rate_e_tilde(1, 2.5), RatePair::new(-0.5, 0.0));
        assert_eq!(rate_e_tilde(2, 2.5), RatePair::new(-0.5, -1.5));
    }

    #[test]
    fn envelope_closed_form() {
        // ℰ̃ = (1+s)^{-1/2}; (1/3) ∫₀³ = (2/3)(2 - 1) = 2/3.
        let e = profile_envelope(3, 2.0, 3.0);
        assert!((e - (0.5 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rate_log_derivative_matches_finite_difference() {
        let rate = RatePair::new(-1.3, 0.7);
        for t in [0.5, 5.0, 50.0] {
            let h = 1e-5 * (1.0 + t);
            let fd = (rate.eval(t + h).ln() - rate.eval(t - h).ln()) / (2.0 * h);
            assert!((fd - rate.log_derivative(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn head_integral_cases() {
        for t in [0.5, 3.0, 40.0, 1e4] {
            let c = integral_0_t_bound(-1.0, -1.0, t, 0.0).unwrap();
            assert_eq!(c.regime, HeadRegime::DoubleLog);
            assert!((c.value - (1.0 + (1.0 + t).ln()).ln()).abs() < 1e-8);
            assert!((c.bound - c.value).abs() < 1e-8);
        }
        let c = integral_0_t_bound(0.0, 0.0, 4.0, 1.0).unwrap();
        assert!((c.value - 4.0).abs() < 1e-12);
        let t = std::f64::consts::E - 1.0;
        let c = integral_0_t_bound(-1.0, 0.0, t, 1.0).unwrap();
        assert!((c.value - 1.0).abs() < 1e-8);
        assert_eq!(c.regime, HeadRegime::Log);
        assert!(integral_0_t_bound(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn tail_integral_cases() {
        let c = integral_t_inf_bound(-2.0, 0.0, 1.0, 1.0).unwrap();
        assert!((c.value.unwrap() - 0.5).abs() < 1e-10);
        let c = integral_t_inf_bound(-1.0, -2.0, 0.0, 0.0).unwrap();
        assert_eq!(c.regime, TailRegime::Log);
        assert!((c.value.unwrap() - 1.0).abs() < 1e-9);
        assert!((c.bound - 1.0).abs() < 1e-15);
        for t in [0.1, 5.0, 100.0] {
            let c = integral_t_inf_bound(-1.0, 0.0, t, 1.0).unwrap();
            assert_eq!(c.regime, TailRegime::Divergent);
            assert!(c.value.is_none());
        }
    }

    #[test]
    fn divergent_tails_grow_without_bound() {
        for (r, m) in [(-1.0, 0.0), (-1.0, -1.0), (-0.5, -3.0), (0.0, 0.0)] {
            let a = power_log_integral_between(r, m, 1.0, 1e4);
            let b = power_log_integral_between(r, m, 1.0, 1e8);
            let c = power_log_integral_between(r, m, 1.0, 1e16);
            assert!(b > a && c > b + (b - a) * 0.5, "(r,m)=({r},{m}): {a} {b} {c}");
        }
    }

    #[test]
    fn calibrated_constants_cover_fresh_times() {
        let probe: Vec<f64> = (0..60).map(|k| 10f64.powf(-2.0 + k as f64 * 0.1)).collect();
        for (r, m) in [(0.0, 1.0), (1.0, -3.0), (-1.0, 0.0), (-3.0, 1.0)] {
            let c = calibrate_head_constant(r, m, &probe);
            for t in [1.5, 15.0, 150.0] {
                let chk = integral_0_t_bound(r, m, t, c * 1.01).unwrap();
                assert!(chk.value <= chk.bound, "(r,m)=({r},{m}) t={t}");
            }
        }
        let c = calibrate_tail_constant(-3.0, 1.0, &probe).unwrap();
        assert!(integral_t_inf_bound(-3.0, 1.0, 15.0, c * 1.01).unwrap().value.unwrap() > 0.0);
        assert!(calibrate_tail_constant(-1.0, 0.0, &probe).is_none());
    }
}
