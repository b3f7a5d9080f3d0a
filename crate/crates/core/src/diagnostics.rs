//! Measurements on fields and trajectories: weighted mass, norms, the mass
//! balance of the absorption flow, the scattering datum `u_∞`, the
//! subsolution factor, profile distances and decay-rate fits.

use crate::error::{Error, Result};
use crate::geometry::{HarmonicWeight, RadialGrid};
use crate::kernels::{self, gaussian_unchecked, profile_envelope, rate_e, RatePair};
use crate::solver::{evolve, Field, Scheme, SolverConfig, Trajectory};

fn check_weight(grid: &RadialGrid, phi: &HarmonicWeight) -> Result<()> {
    if phi.values().len() != grid.len() || phi.domain() != grid.domain() {
        return Err(Error::GridMismatch(
            "harmonic weight was built on a different grid".into(),
        ));
    }
    Ok(())
}

fn phi_sum(grid: &RadialGrid, phi: &[f64], values: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(phi)
        .zip(values)
        .map(|((w, f), v)| w * f * v)
        .sum()
}

/// `M(u) = ∫ u φ dx` by the shell-volume quadrature.
pub fn mass_phi(u: &Field, phi: &HarmonicWeight) -> Result<f64> {
    check_weight(u.grid(), phi)?;
    Ok(phi_sum(u.grid(), phi.values(), u.values()))
}

/// `‖u‖_q`, or `‖u φ^{1/q}‖_q` when a weight is given.  `q = ∞` is the
/// maximum of `|u|` in both cases.
pub fn lq_norm(u: &Field, q: f64, weight: Option<&HarmonicWeight>) -> Result<f64> {
    lq_norm_values(u.grid(), u.values(), q, weight)
}

pub(crate) fn lq_norm_values(
    grid: &RadialGrid,
    values: &[f64],
    q: f64,
    weight: Option<&HarmonicWeight>,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("norm exponent must be >= 1, got {q}")));
    }
    if let Some(phi) = weight {
        check_weight(grid, phi)?;
    }
    if q.is_infinite() {
        return Ok(crate::solver::sup_norm(values));
    }
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = grid.weights()[i] * weight.map_or(1.0, |phi| phi.values()[i]);
            w * v.abs().powf(q)
        })
        .sum();
    Ok(sum.powf(1.0 / q))
}

/// φ-mass bookkeeping of an absorption run.
#[derive(Debug, Clone)]
pub struct MassReport {
    /// `(t, M(u(t)))`, starting at `t = 0`.
    pub mass: Vec<(f64, f64)>,
    /// `(t, ∫₀ᵗ ∫ u^p φ)`.
    pub absorbed: Vec<(f64, f64)>,
    /// `(t, |M(t) + absorbed(t) − M(0)| / M(0))`.
    pub residual: Vec<(f64, f64)>,
    pub limit: Option<MassLimit>,
}

/// Extrapolated `lim M(u(t))` with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassLimit {
    pub value: f64,
    pub uncertainty: f64,
}

impl MassReport {
    pub fn initial_mass(&self) -> f64 {
        self.mass[0].1
    }

    pub fn final_mass(&self) -> f64 {
        self.mass.last().map_or(0.0, |m| m.1)
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    /// Whether the mass series never increases by more than `slack` (relative).
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        let m0 = self.initial_mass().abs().max(f64::MIN_POSITIVE);
        self.mass.windows(2).all(|w| w[1].1 <= w[0].1 + slack * m0)
    }
}

/// Mass series, absorbed series and the identity residual at `t = 0` and
/// every snapshot.  The limit is extrapolated when the run is an
/// absorption run with enough late snapshots.
pub fn mass_report(traj: &Trajectory) -> Result<MassReport> {
    let grid = traj.grid();
    let phi = HarmonicWeight::on_grid(grid);
    let m0 = phi_sum(grid, phi.values(), traj.initial());
    let mut mass = vec![(0.0, m0)];
    let mut absorbed = vec![(0.0, 0.0)];
    for s in traj.snapshots() {
        mass.push((s.t, phi_sum(grid, phi.values(), &s.values)));
        absorbed.push((s.t, phi_sum(grid, phi.values(), &s.accumulator)));
    }
    let residual = mass
        .iter()
        .zip(&absorbed)
        .map(|(m, a)| {
            let r = if m0 != 0.0 { (m.1 + a.1 - m0).abs() / m0.abs() } else { 0.0 };
            (m.0, r)
        })
        .collect();
    let limit = match traj.scheme() {
        Scheme::Semilinear { p } => extrapolate_mass_limit(grid.dimension(), p, &mass).ok(),
        Scheme::Linear => None,
    };
    Ok(MassReport {
        mass,
        absorbed,
        residual,
        limit,
    })
}

/// Residual series of the φ-mass balance `M(t) + ∫₀ᵗ∫u^pφ = M(0)`.
pub fn energy_identity_residual(traj: &Trajectory, phi: &HarmonicWeight) -> Result<Vec<(f64, f64)>> {
    check_weight(traj.grid(), phi)?;
    Ok(mass_report(traj)?.residual)
}

/// Fit `M(t) = M_∞ + c ℰ̃(t)` over the last decade of `series`.
///
/// Only meaningful where `ℰ̃` decays (supercritical exponents).  The
/// uncertainty is the larger of the fit's RMS residual and the spread
/// between the last-decade and last-half-decade fits.
pub fn extrapolate_mass_limit(dimension: u32, p: f64, series: &[(f64, f64)]) -> Result<MassLimit> {
    let shape = kernels::rate_e_tilde(dimension, p);
    if shape.power_exponent >= 0.0 {
        return Err(Error::InvalidArgument(
            "mass extrapolation needs a decaying tail envelope".into(),
        ));
    }
    let t_end = series.last().map_or(0.0, |s| s.0);
    let fit = |t_lo: f64| -> Result<(f64, f64)> {
        let pts: Vec<(f64, f64)> = series
            .iter()
            .filter(|s| s.0 >= t_lo)
            .map(|&(t, m)| (shape.eval(t), m))
            .collect();
        if pts.len() < 3 {
            return Err(Error::IllConditionedFit(format!(
                "{} mass samples after t = {t_lo}",
                pts.len()
            )));
        }
        let (intercept, _, rms) = line_fit(&pts);
        Ok((intercept, rms))
    };
    let (decade, rms) = fit(t_end / 10.0)?;
    let (half, _) = fit(t_end / 10f64.sqrt()).unwrap_or((decade, 0.0));
    Ok(MassLimit {
        value: decade,
        uncertainty: rms.max((decade - half).abs()),
    })
}

/// Least squares line `y = c0 + c1 x` with RMS residual.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (intercept, slope, rms)
}

/// The scattering datum `u_∞ = u₀ − ∫₀^∞ u^p dt` and its φ-mass.
#[derive(Debug, Clone)]
pub struct UInfinity {
    pub field: Field,
    pub mass: f64,
    /// Estimated φ-mass of `∫_T^∞ u^p` beyond the simulated horizon.
    pub tail_mass: f64,
    pub uncertainty: f64,
    /// Set when the tail uncertainty exceeds 20% of `|mass|`.
    pub flagged: bool,
}

/// Build `u_∞` from a trajectory's accumulator plus an estimate of the
/// unsimulated tail `∫_T^∞ u^p`.
///
/// The tail is distributed over nodes in proportion to `u(T)^p`; its φ-mass
/// comes from two estimates (the `ℰ̃` fit of the mass series and the local
/// rule `D(T) ℰ̃/|ℰ̃'|` with `D` the absorption rate), whose midpoint is used
/// and whose half-spread is the uncertainty.  Linear runs return `u₀`.
pub fn compute_u_infty(traj: &Trajectory) -> Result<UInfinity> {
    let grid = traj.grid().clone();
    let phi = HarmonicWeight::on_grid(&grid);
    let p = match traj.scheme() {
        Scheme::Linear => {
            let field = traj.initial_field();
            let mass = phi_sum(&grid, phi.values(), field.values());
            return Ok(UInfinity {
                field,
                mass,
                tail_mass: 0.0,
                uncertainty: 0.0,
                flagged: false,
            });
        }
        Scheme::Semilinear { p } => p,
    };
    let last = traj
        .snapshots()
        .last()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no snapshots".into()))?;
    let t_end = last.t;
    let g_end: Vec<f64> = last.values.iter().map(|&v| v.max(0.0).powf(p)).collect();
    let rate = phi_sum(&grid, phi.values(), &g_end);

    let shape = kernels::rate_e_tilde(grid.dimension(), p);
    let (tail_mass, uncertainty) = if rate == 0.0 {
        (0.0, 0.0)
    } else if shape.power_exponent >= 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let local = rate / shape.log_derivative(t_end).abs();
        let report = mass_report(traj)?;
        match report.limit {
            Some(limit) => {
                let fitted = (report.final_mass() - limit.value).max(0.0);
                (0.5 * (local + fitted), 0.5 * (local - fitted).abs() + limit.uncertainty)
            }
            None => (local, local),
        }
    };

    let values: Vec<f64> = if tail_mass.is_finite() && rate > 0.0 {
        let scale = tail_mass / rate;
        traj.initial()
            .iter()
            .zip(&last.accumulator)
            .zip(&g_end)
            .map(|((u0, a), g)| u0 - a - scale * g)
            .collect()
    } else {
        traj.initial()
            .iter()
            .zip(&last.accumulator)
            .map(|(u0, a)| u0 - a)
            .collect()
    };
    let field = Field::new(grid.clone(), values)?;
    let mass = phi_sum(&grid, phi.values(), field.values());
    let flagged = !(uncertainty <= 0.2 * mass.abs());
    if flagged {
        log::warn!("u_infty tail uncertainty {uncertainty:.3e} exceeds 20% of its mass {mass:.3e}");
    }
    Ok(UInfinity {
        field,
        mass,
        tail_mass,
        uncertainty,
        flagged,
    })
}

/// `h(t) = (1 + (p−1) ∫₀ᵗ ‖S(τ)u₀‖_∞^{p−1} dτ)^{−1/(p−1)}` on the step
/// times of a linear trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionFactor {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SubsolutionFactor {
    /// Linear interpolation in `t`, constant beyond the last sample.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.times.len() {
            return *self.values.last().expect("nonempty");
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (h0, h1) = (self.values[k - 1], self.values[k]);
        if t1 == t0 {
            return h1;
        }
        h0 + (h1 - h0) * (t - t0) / (t1 - t0)
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("nonempty")
    }
}

pub fn subsolution_factor(traj_linear: &Trajectory, p: f64) -> Result<SubsolutionFactor> {
    if traj_linear.scheme() != Scheme::Linear {
        return Err(Error::InvalidArgument("subsolution factor needs a linear trajectory".into()));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
    }
    let steps = traj_linear.steps();
    let mut integral = 0.0;
    let mut times = Vec::with_capacity(steps.len());
    let mut values = Vec::with_capacity(steps.len());
    for (k, s) in steps.iter().enumerate() {
        if k > 0 {
            let prev = &steps[k - 1];
            integral +=
                0.5 * (s.t - prev.t) * (prev.peak.powf(p - 1.0) + s.peak.powf(p - 1.0));
        }
        times.push(s.t);
        values.push((1.0 + (p - 1.0) * integral).powf(-1.0 / (p - 1.0)));
    }
    Ok(SubsolutionFactor { times, values })
}

/// Outcome of checking `u(t) ≥ h(t) S(t) u₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    /// `max (h S u₀ − u)₊` over snapshots and nodes.
    pub max_violation: f64,
    /// `max (h M(S u₀) − M(u))₊ / M(u₀)` over snapshots.
    pub mass_violation: f64,
}

pub fn comparison_check(
    traj_semilinear: &Trajectory,
    traj_linear: &Trajectory,
    h: &SubsolutionFactor,
) -> Result<ComparisonReport> {
    let grid = traj_semilinear.grid();
    if !grid.same_as(traj_linear.grid()) {
        return Err(Error::GridMismatch("trajectories live on different grids".into()));
    }
    let a = traj_semilinear.snapshots();
    let b = traj_linear.snapshots();
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.t != y.t) {
        return Err(Error::InvalidArgument(
            "trajectories must share their snapshot times".into(),
        ));
    }
    let phi = HarmonicWeight::on_grid(grid);
    let m0 = phi_sum(grid, phi.values(), traj_linear.initial()).abs();
    let mut max_violation: f64 = 0.0;
    let mut mass_violation: f64 = 0.0;
    for (u, v) in a.iter().zip(b) {
        let factor = h.at(u.t);
        for (x, y) in u.values.iter().zip(&v.values) {
            max_violation = max_violation.max(factor * y - x);
        }
        let mu = phi_sum(grid, phi.values(), &u.values);
        let mv = phi_sum(grid, phi.values(), &v.values);
        if m0 > 0.0 {
            mass_violation = mass_violation.max((factor * mv - mu) / m0);
        }
    }
    Ok(ComparisonReport {
        max_violation,
        mass_violation,
    })
}

/// A weighted distance series next to its theoretical envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub envelope: Vec<f64>,
}

impl ProfileSeries {
    /// Distance at the snapshot closest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map_or(0, |(k, _)| k);
        self.distance[k]
    }

    /// Smallest constant `C` with `distance ≤ C envelope` on `[t_lo, t_hi]`.
    pub fn envelope_constant(&self, t_lo: f64, t_hi: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.distance)
            .zip(&self.envelope)
            .filter(|((t, _), _)| (t_lo..=t_hi).contains(*t))
            .map(|((_, d), e)| d / e)
            .fold(0.0, f64::max)
    }
}

/// `(1+t)^{N(1−1/q)/2} ℰ_N(t) ‖u(t) − S(t)u_∞‖_q` at every snapshot, with
/// `S(t) u_∞` from a fresh linear evolution using the trajectory's step
/// policy.  The envelope column is `ℰ̃(t) + (1/t)∫₀ᵗℰ̃`.
pub fn profile_distance_s_u_infty(
    traj: &Trajectory,
    u_infty: &Field,
    q: f64,
    step_policy: &SolverConfig,
) -> Result<ProfileSeries> {
    let grid = traj.grid();
    if !grid.same_as(u_infty.grid()) {
        return Err(Error::GridMismatch("u_infty lives on a different grid".into()));
    }
    let p = traj.scheme().exponent().unwrap_or(f64::INFINITY);
    let times: Vec<f64> = traj.snapshots().iter().map(|s| s.t).collect();
    let cfg = SolverConfig {
        scheme: Scheme::Linear,
        t_end: *times.last().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?,
        output_times: times.clone(),
        record_steps: false,
        ..step_policy.clone()
    };
    let linear = evolve(u_infty, &cfg)?;
    let n = grid.dimension();
    let weight_rate = RatePair::new(n as f64 * (1.0 - 1.0 / q) / 2.0, 0.0).mul(&rate_e(n));
    let mut distance = Vec::with_capacity(times.len());
    let mut envelope = Vec::with_capacity(times.len());
    for (u, s) in traj.snapshots().iter().zip(linear.snapshots()) {
        let diff: Vec<f64> = u.values.iter().zip(&s.values).map(|(a, b)| a - b).collect();
        let norm = lq_norm_values(grid, &diff, q, None)?;
        distance.push(weight_rate.eval(u.t) * norm);
        envelope.push(if p.is_finite() {
            profile_envelope(n, p, u.t)
        } else {
            1.0
        });
    }
    Ok(ProfileSeries {
        times,
        distance,
        envelope,
    })
}

/// `t^{N(1−1/q)/2} ‖u(t) − M_∞ φ G(t,·)‖_q` at every snapshot.
pub fn profile_distance_gaussian(
    traj: &Trajectory,
    m_infty: f64,
    phi: &HarmonicWeight,
    q: f64,
) -> Result<ProfileSeries> {
    let grid = traj.grid();
    check_weight(grid, phi)?;
    let n = grid.dimension();
    let mut times = Vec::new();
    let mut distance = Vec::new();
    for s in traj.snapshots() {
        let diff = gaussian_residual(grid, phi, &s.values, m_infty, s.t);
        times.push(s.t);
        distance.push(s.t.powf(n as f64 * (1.0 - 1.0 / q) / 2.0) * lq_norm_values(grid, &diff, q, None)?);
    }
    let envelope = vec![1.0; times.len()];
    Ok(ProfileSeries {
        times,
        distance,
        envelope,
    })
}

fn gaussian_residual(grid: &RadialGrid, phi: &HarmonicWeight, u: &[f64], m: f64, t: f64) -> Vec<f64> {
    let n = grid.dimension();
    grid.nodes()
        .iter()
        .zip(phi.values())
        .zip(u)
        .map(|((&r, &f), &v)| v - m * f * gaussian_unchecked(n, t, r))
        .collect()
}

/// Gaussian-profile residual of an arbitrary field (for checks that bypass
/// a trajectory).
pub fn gaussian_profile_residual(u: &Field, m_infty: f64, t: f64, q: f64) -> Result<f64> {
    let grid = u.grid();
    let phi = HarmonicWeight::on_grid(grid);
    let diff = gaussian_residual(grid, &phi, u.values(), m_infty, t);
    lq_norm_values(grid, &diff, q, None)
}

/// Time variable of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAxis {
    /// Powers of `1 + t`, as in the decay tables.
    Shifted,
    /// Powers of `t`.
    Raw,
}

/// Model of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitModel {
    pub axis: TimeAxis,
    /// Also fit the exponent of `1 + ln(1 + t)`.
    pub log_factor: bool,
}

impl FitModel {
    pub const POWER: FitModel = FitModel {
        axis: TimeAxis::Shifted,
        log_factor: false,
    };
    pub const POWER_LOG: FitModel = FitModel {
        axis: TimeAxis::Shifted,
        log_factor: true,
    };
    pub const RAW_POWER: FitModel = FitModel {
        axis: TimeAxis::Raw,
        log_factor: false,
    };
}

/// Fitted `value ≈ c τ^a (1 + ln(1+t))^b`, `τ = 1 + t` or `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub a: f64,
    pub b: f64,
    pub log_c: f64,
    /// RMS residual in log space.
    pub residual: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub samples: usize,
}

/// Least squares fit in log coordinates over the samples with `t` in
/// `[t_lo, t_hi]`.  Needs at least 8 positive samples spanning a factor 10.
pub fn fit_rate(series: &[(f64, f64)], model: FitModel, t_lo: f64, t_hi: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, v)| {
            // window ends tolerate round-off in log-spaced sample times
            t >= t_lo * (1.0 - 1e-9) && t <= t_hi * (1.0 + 1e-9) && t > 0.0 && v > 0.0
        })
        .collect();
    if pts.len() < 8 {
        return Err(Error::IllConditionedFit(format!(
            "{} usable samples in [{t_lo}, {t_hi}], need 8",
            pts.len()
        )));
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi < 10.0 * lo * (1.0 - 1e-9) {
        return Err(Error::IllConditionedFit(format!(
            "window [{lo}, {hi}] spans less than a factor 10"
        )));
    }
    let x1 = |t: f64| match model.axis {
        TimeAxis::Shifted => (1.0 + t).ln(),
        TimeAxis::Raw => t.ln(),
    };
    let x2 = |t: f64| (1.0 + (1.0 + t).ln()).ln();
    let rows: Vec<([f64; 3], f64)> = pts
        .iter()
        .map(|&(t, v)| ([1.0, x1(t), if model.log_factor { x2(t) } else { 0.0 }], v.ln()))
        .collect();
    let k = if model.log_factor { 3 } else { 2 };
    let coef = least_squares(&rows, k)?;
    let residual = (rows
        .iter()
        .map(|(x, y)| {
            let fit: f64 = (0..k).map(|j| coef[j] * x[j]).sum();
            (y - fit).powi(2)
        })
        .sum::<f64>()
        / rows.len() as f64)
        .sqrt();
    Ok(RateFit {
        a: coef[1],
        b: if model.log_factor { coef[2] } else { 0.0 },
        log_c: coef[0],
        residual,
        t_lo: lo,
        t_hi: hi,
        samples: pts.len(),
    })
}

/// Solve the `k`-column least squares problem by Householder QR on
/// column-centred data (the constant column is eliminated first).
pub(crate) fn least_squares(rows: &[([f64; 3], f64)], k: usize) -> Result<[f64; 3]> {
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    let mut my = 0.0;
    for (x, y) in rows {
        for j in 1..k {
            mean[j] += x[j] / n;
        }
        my += y / n;
    }
    let m = k - 1;
    // centred design columns and response
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|j| rows.iter().map(|(x, _)| x[j + 1] - mean[j + 1]).collect())
        .collect();
    let mut b: Vec<f64> = rows.iter().map(|(_, y)| y - my).collect();
    let scale: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut r = vec![vec![0.0; m]; m];
    for j in 0..m {
        let norm: f64 = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-10 * scale[j].max(f64::MIN_POSITIVE)) {
            return Err(Error::IllConditionedFit("design columns are collinear".into()));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(j) {
            let dot: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, vi) in b[j..].iter_mut().zip(&v) {
            *c -= f * vi;
        }
        for (i, row) in r.iter_mut().enumerate().take(j + 1) {
            row[j] = a[j][i];
        }
    }
    let mut coef = [0.0; 3];
    for j in (0..m).rev() {
        let mut s = b[j];
        for i in j + 1..m {
            s -= r[j][i] * coef[i + 1];
        }
        coef[j + 1] = s / r[j][j];
    }
    coef[0] = my - (1..k).map(|j| coef[j] * mean[j]).sum::<f64>();
    Ok(coef)
}

/// Slope of `ln M` against `ln t` over the last decade of a series.
pub fn trend_slope(series: &[(f64, f64)]) -> Result<f64> {
    let t_end = series.last().map_or(0.0, |s| s.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.0 >= t_end / 10.0 && s.0 > 0.0 && s.1 > 0.0)
        .map(|s| (s.0.ln(), s.1.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::IllConditionedFit("fewer than 3 samples in the last decade".into()));
    }
    Ok(line_fit(&pts).1)
}

/// `(t, ‖u(t)‖_∞)` at every step after `t = 0`, using the refined peak.
pub fn sup_norm_series(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.steps()
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t, s.peak))
        .collect()
}

/// `‖u(t)‖_q` at every snapshot.
pub fn norm_series(traj: &Trajectory, q: f64) -> Result<Vec<(f64, f64)>> {
    traj.snapshots()
        .iter()
        .map(|s| Ok((s.t, lq_norm_values(traj.grid(), &s.values, q, None)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use crate::geometry::{make_grid, DomainSpec};

    fn grid(n: u32, r0: f64, r_max: f64, cells: usize) -> Arc<RadialGrid> {
        Arc::new(make_grid(DomainSpec::new(n, r0, r_max).unwrap(), cells).unwrap())
    }

    fn bump(center: f64, width: f64) -> impl Fn(f64) -> f64 {
        move |r| {
            let z = (r - center) / width;
            if z.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - z * z)).exp()
            } else {
                0.0
            }
        }
    }

    #[test]
    fn mass_of_indicators() {
        // node-sampled indicators converge at first order; use a fine grid
        let g = grid(1, 0.0, 4.0, 40_000);
        let phi = HarmonicWeight::on_grid(&g);
        let u = Field::from_fn(g.clone(), |r| if (1.0..=2.0).contains(&r) { 1.0 } else { 0.0 }).unwrap();
        assert!((mass_phi(&u, &phi).unwrap() - 1.5).abs() < 1e-3);

        let g = grid(3, 1.0, 4.0, 30_000);
        let phi = HarmonicWeight::on_grid(&g);
        let u = Field::from_fn(g.clone(), |r| if r <= 2.0 { 1.0 } else { 0.0 }).unwrap();
        let exact = 4.0 * std::f64::consts::PI * (7.0 / 3.0 - 1.5);
        assert!((mass_phi(&u, &phi).unwrap() - exact).abs() < 1e-3 * exact);

        assert_eq!(mass_phi(&Field::zeros(g.clone()), &phi).unwrap(), 0.0);
        let other = HarmonicWeight::on_grid(&grid(3, 1.0, 5.0, 100));
        assert!(mass_phi(&u, &other).is_err());
    }

    #[test]
    fn norms() {
        let g = grid(3, 1.0, 3.0, 200);
        let c = Field::new(g.clone(), vec![2.0; g.len()]).unwrap();
        let vol = g.domain().annulus_volume();
        // boundary nodes are zeroed, so compare against the interior weights
        let interior: f64 = g.weights()[1..g.len() - 1].iter().sum();
        assert!((lq_norm(&c, 1.0, None).unwrap() - 2.0 * interior).abs() < 1e-12 * vol);
        assert_eq!(lq_norm(&Field::zeros(g.clone()), 2.0, None).unwrap(), 0.0);
        assert_eq!(lq_norm(&c, f64::INFINITY, None).unwrap(), 2.0);
        assert!(lq_norm(&c, 0.5, None).is_err());

        // L² norm of a sampled Gaussian on the half-line
        let g = grid(1, 0.0, 20.0, 4000);
        let u = Field::from_fn(g, |x| x * (-x * x).exp()).unwrap();
        // ∫₀^∞ x² e^{-2x²} dx = √π / (4 · 2^{3/2})
        let exact = (std::f64::consts::PI.sqrt() / (4.0 * 2f64.powf(1.5))).sqrt();
        assert!((lq_norm(&u, 2.0, None).unwrap() - exact).abs() < 1e-5);
    }

    #[test]
    fn fit_recovers_exact_models() {
        let series: Vec<(f64, f64)> = (0..30).map(|k| {
            let t = 10f64.powf(1.0 + k as f64 / 14.5);
            (t, 3.0 * t.powf(-1.5))
        }).collect();
        let fit = fit_rate(&series, FitModel::RAW_POWER, 0.0, f64::INFINITY).unwrap();
        assert!((fit.a + 1.5).abs() < 1e-6 && fit.b == 0.0 && fit.residual < 1e-10);

        let series: Vec<(f64, f64)> = (0..30).map(|k| {
            let t = 10f64.powf(1.0 + k as f64 / 10.0);
            (t, RatePair::new(-1.0, -1.0).eval(t) * 0.7)
        }).collect();
        let fit = fit_rate(&series, FitModel::POWER_LOG, 0.0, f64::INFINITY).unwrap();
        assert!((fit.a + 1.0).abs() < 1e-8 && (fit.b + 1.0).abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn fit_rejects_narrow_windows() {
        let series: Vec<(f64, f64)> = (0..20).map(|k| (10.0 + k as f64, 1.0 / (10.0 + k as f64))).collect();
        assert!(matches!(
            fit_rate(&series, FitModel::POWER, 0.0, 100.0),
            Err(Error::IllConditionedFit(_))
        ));
        assert!(fit_rate(&series[..5], FitModel::POWER, 0.0, 100.0).is_err());
    }

    #[test]
    fn subsolution_factor_properties() {
        let g = grid(3, 1.0, 40.0, 400);
        let u0 = Field::from_fn(g, bump(3.0, 1.5)).unwrap();
        let traj = evolve(&u0, &SolverConfig::linear(20.0)).unwrap();
        let h = subsolution_factor(&traj, 2.0).unwrap();
        assert_eq!(h.values[0], 1.0);
        assert!(h.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(h.last() > 0.0 && h.last() < 1.0);
        // large p with data below one barely damps
        let small = Field::from_fn(traj.grid().clone(), |r| 0.5 * bump(3.0, 1.5)(r)).unwrap();
        let traj = evolve(&small, &SolverConfig::linear(20.0)).unwrap();
        assert!(subsolution_factor(&traj, 30.0).unwrap().last() > 0.999);
    }

    #[test]
    fn linear_hooks_are_identities() {
        let g = grid(3, 1.0, 40.0, 300);
        let u0 = Field::from_fn(g, bump(3.0, 1.5)).unwrap();
        let cfg = SolverConfig::linear(5.0).with_log_outputs(0.1, 6);
        let lin = evolve(&u0, &cfg).unwrap();
        let ui = compute_u_infty(&lin).unwrap();
        assert_eq!(ui.field.values(), u0.values());
        let one = SubsolutionFactor { times: vec![0.0], values: vec![1.0] };
        let c = comparison_check(&lin, &lin, &one).unwrap();
        assert_eq!(c.max_violation, 0.0);
        let d = profile_distance_s_u_infty(&lin, &ui.field, f64::INFINITY, &cfg).unwrap();
        assert!(d.distance.iter().all(|&x| x == 0.0));
        let res = energy_identity_residual(&lin, &HarmonicWeight::on_grid(lin.grid())).unwrap();
        assert_eq!(res[0].1, 0.0);
        assert!(res.iter().all(|r| r.1 < 1e-12));
    }

    #[test]
    fn zero_data_has_zero_u_infty() {
        let g = grid(1, 0.0, 30.0, 200);
        let cfg = SolverConfig::semilinear(2.0, 10.0).with_log_outputs(0.1, 10);
        let traj = evolve(&Field::zeros(g), &cfg).unwrap();
        let ui = compute_u_infty(&traj).unwrap();
        assert!(ui.field.values().iter().all(|&v| v == 0.0));
        assert_eq!(ui.mass, 0.0);
    }

    #[test]
    fn exact_gaussian_profile_has_zero_distance() {
        let g = grid(3, 1.0, 30.0, 300);
        let phi = HarmonicWeight::on_grid(&g);
        let t = 4.0;
        let u = Field::new(
            g.clone(),
            g.nodes().iter().zip(phi.values()).map(|(&r, &f)| 0.3 * f * gaussian_unchecked(3, t, r)).collect(),
        )
        .unwrap();
        assert!(gaussian_profile_residual(&u, 0.3, t, f64::INFINITY).unwrap() < 1e-15);
    }

    #[test]
    fn mass_limit_recovers_synthetic_tail() {
        let shape = kernels::rate_e_tilde(3, 2.5);
        let series: Vec<(f64, f64)> = crate::solver::log_spaced(1.0, 200.0, 40)
            .into_iter()
            .map(|t| (t, 0.8 + 0.3 * shape.eval(t)))
            .collect();
        let lim = extrapolate_mass_limit(3, 2.5, &series).unwrap();
        assert!((lim.value - 0.8).abs() < 1e-10 && lim.uncertainty < 1e-10);
        assert!(extrapolate_mass_limit(3, 1.5, &series).is_err());
    }
}
