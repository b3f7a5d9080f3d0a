//! Space-time cut-offs for the weighted test-function argument, the
//! derivative bound they satisfy, the auxiliary functionals `Θ(R)` and
//! `Y(R)`, and the two-way classification of the exponent dichotomy.
//!
//! The cut-off profile `η` rises from 0 at `s = 1/2` to 1 at `s = 1`, so
//! `φ_R = η(ξ_R)^{2p'}` equals one at late times and far out, and
//! `ξ_R(t, r) = ((r − R₁)₊² + t) / R`.

use crate::diagnostics::least_squares;
use crate::error::{Error, Result};
use crate::geometry::{measure_factor, DomainSpec};
use crate::kernels::{tail_regime, TailRegime};
use crate::quadrature::{integrate, Tolerance};
use crate::solver::Trajectory;

/// Quintic smoothstep `q(x) = 6x⁵ − 15x⁴ + 10x³` and its first two
/// derivatives at `x = 2s − 1`, clamped to 0 below `s = 1/2` and 1 above
/// `s = 1`.
pub fn eta_with_derivatives(s: f64) -> (f64, f64, f64) {
    if s <= 0.5 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let x = 2.0 * s - 1.0;
    let q = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
    let dq = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    let d2q = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    (q, 2.0 * dq, 4.0 * d2q)
}

pub fn eta(s: f64) -> f64 {
    eta_with_derivatives(s).0
}

/// The cut-off family at scale `R` for exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFamily {
    domain: DomainSpec,
    p: f64,
    scale: f64,
    r1: f64,
}

impl CutoffFamily {
    /// `R₁ = r0` for `N ≥ 2` and `0` on the half-line.
    pub fn new(domain: DomainSpec, p: f64, scale: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale R must be positive, got {scale}")));
        }
        Ok(Self {
            domain,
            p,
            scale,
            r1: domain.inner_radius(),
        })
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.domain, self.p, scale)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// `2p' = 2p / (p − 1)`.
    pub fn power(&self) -> f64 {
        2.0 * self.p / (self.p - 1.0)
    }

    pub fn xi(&self, t: f64, r: f64) -> f64 {
        let s = (r - self.r1).max(0.0);
        (s * s + t) / self.scale
    }

    /// `φ_R(t, r)`.
    pub fn value(&self, t: f64, r: f64) -> f64 {
        eta(self.xi(t, r)).powf(self.power())
    }

    /// `φ_R*(t, r)`, the cut-off restricted to `ξ_R ∈ [1/2, 1]`.
    pub fn starred(&self, t: f64, r: f64) -> f64 {
        let xi = self.xi(t, r);
        if (0.5..=1.0).contains(&xi) {
            eta(xi).powf(self.power())
        } else {
            0.0
        }
    }
}

/// `s φ'(R₁ + s) / φ(R₁ + s)`, continuous at `s = 0` where it equals 1.
fn log_slope(domain: &DomainSpec, s: f64) -> f64 {
    let n = domain.dimension();
    let r0 = domain.inner_radius();
    if s <= 0.0 || n == 1 {
        return 1.0;
    }
    let r = r0 + s;
    let x = s / r0;
    if x < 1e-8 {
        return 1.0;
    }
    let l = x.ln_1p();
    match n {
        2 => s / (r * l),
        _ => {
            let k = (n - 2) as f64;
            // φ = 1 − (r0/r)^k = −expm1(−k l), φ' = k r0^k / r^{k+1}
            let phi = -(-k * l).exp_m1();
            let dphi = k * (-k * l).exp() / r;
            s * dphi / phi
        }
    }
}

/// `R (|∂ₜ(φ φ_R)| + |Δ(φ φ_R)|) / (φ (φ_R*)^{1/p})` at the scaled lattice
/// point `(ξ, θ)` of the transition annulus, `θ = t/R ∈ [0, ξ]`.
///
/// With `η̃ = η^{2p'}` the division by `(φ_R*)^{1/p} = η^{2/(p−1)}` leaves
/// `η̃'/η^{2/(p−1)} = 2p' η η'` and
/// `η̃''/η^{2/(p−1)} = 2p' [(2p' − 1) η'² + η η'']`, which are bounded.
fn scaled_ratio(family: &CutoffFamily, xi: f64, theta: f64) -> f64 {
    let (e, de, d2e) = eta_with_derivatives(xi);
    let pp = family.power() / 2.0;
    let first = 2.0 * pp * e * de;
    let second = 2.0 * pp * ((2.0 * pp - 1.0) * de * de + e * d2e);
    let s = ((xi - theta).max(0.0) * family.scale).sqrt();
    let n = family.domain.dimension() as f64;
    let r = family.r1 + s;
    let curvature = if r > 0.0 { 2.0 * (n - 1.0) * s / r } else { 0.0 };
    let rho = log_slope(&family.domain, s);
    let laplacian = first * (4.0 * rho + 2.0 + curvature) + 4.0 * (xi - theta) * second;
    first.abs() + laplacian.abs()
}

/// Largest scaled derivative ratio over a `resolution × resolution` lattice
/// of the transition annulus `ξ_R ∈ [1/2, 1]`.  Outside the annulus the
/// cut-off is constant and contributes nothing.
pub fn cutoff_bound_ratio(family: &CutoffFamily, resolution: usize) -> f64 {
    let m = resolution.max(2);
    let mut worst: f64 = 0.0;
    for i in 0..=m {
        let xi = 0.5 + 0.5 * i as f64 / m as f64;
        for j in 0..=m {
            let theta = xi * j as f64 / m as f64;
            worst = worst.max(scaled_ratio(family, xi, theta));
        }
    }
    worst
}

/// `∫_{r0 < |x| < r0 + a} φ dx` in closed form.
fn phi_ball_integral(domain: &DomainSpec, a: f64) -> f64 {
    let n = domain.dimension();
    let r0 = domain.inner_radius();
    let c = measure_factor(n);
    match n {
        1 => 0.5 * a * a,
        2 => {
            let r = r0 + a;
            let l = (a / r0).ln_1p();
            // [r²/2 ln(r/r0) − r²/4] from r0 to r
            c * (0.5 * r * r * l - 0.25 * (r * r - r0 * r0))
        }
        _ => {
            let r = r0 + a;
            let nf = n as f64;
            c * ((r.powf(nf) - r0.powf(nf)) / nf - r0.powf(nf - 2.0) * (r * r - r0 * r0) / 2.0)
        }
    }
}

/// `Θ(R) = ((1/R) ∫₀^R ∫_{(|x|−R₁)₊² + t ≤ R} φ dx dt)^{p−1}`, evaluated as
/// `((2/R) ∫₀^{√R} a I(a) da)^{p−1}` with `I` the closed-form φ-integral
/// over the annulus of width `a`.
pub fn theta(domain: &DomainSpec, p: f64, scale: f64) -> Result<f64> {
    Ok(theta_base(domain, scale)?.powf(p - 1.0))
}

fn theta_base(domain: &DomainSpec, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale R must be positive, got {scale}")));
    }
    let tol = Tolerance {
        absolute: 0.0,
        relative: 1e-12,
        max_intervals: 2000,
    };
    let q = integrate(|a| a * phi_ball_integral(domain, a), 0.0, scale.sqrt(), tol);
    Ok(2.0 * q.value / scale)
}

/// Joint fit `ln Θ⁻¹ ≈ c + a ln R + b ln ln R` on a log-spaced ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaExponents {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
}

/// Fit `ln Θ⁻¹ = c + a ln R (+ b ln ln R)` on 33 log-spaced scales in
/// `[r_lo, r_hi]` (`r_lo > e`).
pub fn theta_exponents(domain: &DomainSpec, p: f64, r_lo: f64, r_hi: f64, log_factor: bool) -> Result<ThetaExponents> {
    if !(r_lo > std::f64::consts::E && r_hi >= 10.0 * r_lo) {
        return Err(Error::IllConditionedFit(format!(
            "scale window [{r_lo}, {r_hi}] must start above e and span a decade"
        )));
    }
    let rows = crate::solver::log_spaced(r_lo, r_hi, 33)
        .into_iter()
        .map(|r| {
            let x = [1.0, r.ln(), if log_factor { r.ln().ln() } else { 0.0 }];
            Ok((x, -theta(domain, p, r)?.ln()))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = if log_factor { 3 } else { 2 };
    let coef = least_squares(&rows, k)?;
    let residual = (rows
        .iter()
        .map(|(x, y)| (y - (0..k).map(|j| coef[j] * x[j]).sum::<f64>()).powi(2))
        .sum::<f64>()
        / rows.len() as f64)
        .sqrt();
    Ok(ThetaExponents {
        a: coef[1],
        b: if log_factor { coef[2] } else { 0.0 },
        residual,
    })
}

/// Outcome of the exponent dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dichotomy {
    /// `M(u(t)) → 0`.
    Vanishing,
    /// `M(u(t))` tends to a positive limit.
    NonVanishing,
}

impl std::fmt::Display for Dichotomy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dichotomy::Vanishing => "vanishing",
            Dichotomy::NonVanishing => "non-vanishing",
        })
    }
}

/// Both classification routes and the closed-form threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    /// `p ≤ min{2, 1 + 2/N}`.
    pub threshold: Dichotomy,
    /// Non-integrability of `Θ⁻¹` at infinity, read off fitted exponents.
    pub by_theta: Dichotomy,
    /// Tail regime of `∫^∞ ((1+t)^{N/2} ℰ_N(t))^{1−p} dt`.
    pub by_rate: Dichotomy,
    pub theta_fit: ThetaExponents,
}

impl Classification {
    pub fn agree(&self) -> bool {
        self.by_theta == self.by_rate && self.by_rate == self.threshold
    }

    pub fn verdict(&self) -> Dichotomy {
        self.by_rate
    }
}

/// Tolerance on the fitted power of `Θ⁻¹` around the border `−1`.
pub const THETA_POWER_TOL: f64 = 0.02;
/// Tolerance on the fitted log power at the border.
pub const THETA_LOG_TOL: f64 = 0.1;

pub fn critical_exponent(dimension: u32) -> f64 {
    (1.0 + 2.0 / dimension as f64).min(2.0)
}

/// Classify `(N, p)` two independent ways.  Non-integrability of either
/// weight at infinity means vanishing.
pub fn classify_dichotomy(dimension: u32, p: f64) -> Result<Classification> {
    if dimension == 0 || !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("need N >= 1 and p > 1, got ({dimension}, {p})")));
    }
    let threshold = if p <= critical_exponent(dimension) * (1.0 + 1e-12) {
        Dichotomy::Vanishing
    } else {
        Dichotomy::NonVanishing
    };

    let domain = if dimension == 1 {
        DomainSpec::half_line(1.0)?
    } else {
        DomainSpec::new(dimension, 1.0, 2.0)?
    };
    let fit = theta_exponents(&domain, p, 1e10, 1e40, true)?;
    let divergent = fit.a > -1.0 + THETA_POWER_TOL
        || ((fit.a + 1.0).abs() <= THETA_POWER_TOL && fit.b >= -1.0 - THETA_LOG_TOL);
    let by_theta = if divergent { Dichotomy::Vanishing } else { Dichotomy::NonVanishing };

    let n = dimension as f64;
    let snap = |x: f64| if (x + 1.0).abs() < 1e-9 { -1.0 } else { x };
    let r = snap((1.0 - p) * (n / 2.0 + if dimension == 1 { 0.5 } else { 0.0 }));
    let m = snap(if dimension == 2 { 1.0 - p } else { 0.0 });
    let by_rate = match tail_regime(r, m) {
        TailRegime::Divergent => Dichotomy::Vanishing,
        _ => Dichotomy::NonVanishing,
    };

    Ok(Classification {
        threshold,
        by_theta,
        by_rate,
        theta_fit: fit,
    })
}

/// Which ρ-range the auxiliary functional integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YForm {
    /// `∫₀^R (∬ u^p φ φ_ρ*) dρ/ρ`, nondecreasing in `R`.
    Forward,
    /// `∫_R^∞ (∬ u^p φ φ_ρ*) dρ/ρ`, nonincreasing in `R`; this is the form
    /// bounded by `log 2 ∬ u^p φ φ_R` for a rising profile.
    Tail,
}

/// One point of the `Y` series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YPoint {
    pub scale: f64,
    pub forward: f64,
    pub tail: f64,
    /// `log 2 ∬ u^p φ φ_R`.
    pub bound: f64,
    /// Set when `R` exceeds the simulated horizon, so the space-time
    /// integrals miss part of the support of `φ_ρ*`.
    pub truncated: bool,
}

impl YPoint {
    pub fn value(&self, form: YForm) -> f64 {
        match form {
            YForm::Forward => self.forward,
            YForm::Tail => self.tail,
        }
    }
}

/// Tabulated `K(x) = ∫_{1/2}^x η(σ)^{2p'} dσ/σ` on `[1/2, 1]`.
struct LogWeightTable {
    values: Vec<f64>,
}

impl LogWeightTable {
    const SIZE: usize = 4096;

    fn new(power: f64) -> Self {
        let mut values = vec![0.0; Self::SIZE + 1];
        let tol = Tolerance {
            absolute: 1e-15,
            relative: 1e-13,
            max_intervals: 200,
        };
        for k in 1..=Self::SIZE {
            let a = 0.5 + 0.5 * (k - 1) as f64 / Self::SIZE as f64;
            let b = 0.5 + 0.5 * k as f64 / Self::SIZE as f64;
            values[k] = values[k - 1] + integrate(|s| eta(s).powf(power) / s, a, b, tol).value;
        }
        Self { values }
    }

    fn at(&self, x: f64) -> f64 {
        let y = ((x.clamp(0.5, 1.0) - 0.5) * 2.0 * Self::SIZE as f64).min(Self::SIZE as f64);
        let k = (y.floor() as usize).min(Self::SIZE - 1);
        let f = y - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    fn total(&self) -> f64 {
        self.values[Self::SIZE]
    }
}

/// `Y(R)` in both forms and the bound `log 2 ∬ u^p φ φ_R`, over a ladder of
/// scales, from a trajectory recorded at every step.
///
/// The ρ-integral is done exactly by exchanging the order of integration:
/// for `z = (r − R₁)₊² + t`, `∫ φ_ρ*(t, r) dρ/ρ` over a ρ-range reduces to
/// `∫ η(σ)^{2p'} dσ/σ` over `σ = z/ρ`.  Space-time integrals use the step
/// trapezoid in `t` and the shell weights in `r`.
pub fn y_functional(traj: &Trajectory, family: &CutoffFamily, scales: &[f64]) -> Result<Vec<YPoint>> {
    let p = traj
        .scheme()
        .exponent()
        .ok_or_else(|| Error::InvalidArgument("Y needs an absorption trajectory".into()))?;
    if (p - family.p()).abs() > 1e-12 {
        return Err(Error::InvalidArgument("cut-off exponent differs from the trajectory's".into()));
    }
    let dense = traj.dense();
    if dense.len() < 2 {
        return Err(Error::InvalidArgument(
            "Y needs a trajectory recorded at every step".into(),
        ));
    }
    let grid = traj.grid();
    if grid.domain() != family.domain() {
        return Err(Error::GridMismatch("cut-off and trajectory domains differ".into()));
    }
    let phi = crate::geometry::HarmonicWeight::on_grid(grid);
    let table = LogWeightTable::new(family.power());
    let t_end = dense.last().map_or(0.0, |d| d.0);

    // space-time samples: (z, weight · u^p φ)
    let mut samples = Vec::new();
    for (k, (t, u)) in dense.iter().enumerate() {
        let left = if k > 0 { t - dense[k - 1].0 } else { 0.0 };
        let right = if k + 1 < dense.len() { dense[k + 1].0 - t } else { 0.0 };
        let dt = 0.5 * (left + right);
        for (i, &v) in u.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let mass = dt * grid.weights()[i] * phi.values()[i] * v.powf(p);
            if mass > 0.0 {
                let s = (grid.nodes()[i] - family.r1()).max(0.0);
                samples.push((s * s + t, mass));
            }
        }
    }

    let log2 = std::f64::consts::LN_2;
    let total = table.total();
    scales
        .iter()
        .map(|&scale| {
            let fam = family.with_scale(scale)?;
            let (mut forward, mut tail, mut inner) = (0.0, 0.0, 0.0);
            for &(z, mass) in &samples {
                let x = z / scale;
                if x <= 1.0 {
                    // σ ∈ [max(1/2, x), 1]
                    forward += mass * (total - table.at(x.max(0.5)));
                }
                if x >= 0.5 {
                    // σ ∈ [1/2, min(1, x)]
                    tail += mass * table.at(x.min(1.0));
                }
                inner += mass * eta(x).powf(fam.power());
            }
            Ok(YPoint {
                scale,
                forward,
                tail,
                bound: log2 * inner,
                truncated: scale > t_end,
            })
        })
        .collect()
}
