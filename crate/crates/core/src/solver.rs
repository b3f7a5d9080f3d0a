//! Time stepping for the radial Dirichlet heat flow with optional
//! absorption `-u^p`.
//!
//! Diffusion uses a flux-form radial stencil: for interior node `i`
//!
//! ```text
//! (L u)_i = [κ_{i+½}(u_{i+1} − u_i) − κ_{i−½}(u_i − u_{i−1})] / w_i
//! ```
//!
//! with shell volumes `w_i` and face conductances `κ` from the grid.  The
//! stencil is second order, self-adjoint in the `w`-weighted inner product,
//! and annihilates the closed-form harmonic weight, so the discrete φ-mass
//! of the linear flow changes only through the outer truncation boundary.
//!
//! One step of size `dt`:
//! 1. predictor `(I − dt/2 L) u* = uⁿ − dt/2 g(uⁿ)`;
//! 2. corrector `(I − dt/2 L) uⁿ⁺¹ = (I + dt/2 L) uⁿ − dt g(u*)`;
//! 3. clamp to `[0, max uⁿ]`;
//!
//! where `g(u) = max(u, 0)^p`.  The linear flow skips steps 1 and 3.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{HarmonicWeight, RadialGrid};

/// Grid function at one time.  Boundary nodes always hold zero.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl Field {
    /// Wrap nodal values; the two boundary values are forced to zero.
    pub fn new(grid: Arc<RadialGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: i, t: 0.0 });
        }
        let last = values.len() - 1;
        values[0] = 0.0;
        values[last] = 0.0;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

pub(crate) fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Maximum of `|u|` refined by the parabola through the largest nodal value
/// and its neighbours; removes the grid-locking noise of the nodal maximum.
pub fn refined_peak(values: &[f64]) -> f64 {
    let Some((k, &top)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    else {
        return 0.0;
    };
    let top = top.abs();
    if k == 0 || k + 1 == values.len() {
        return top;
    }
    let (a, c) = (values[k - 1].abs(), values[k + 1].abs());
    let curvature = a - 2.0 * top + c;
    if curvature >= 0.0 {
        return top;
    }
    top - (c - a).powi(2) / (8.0 * curvature)
}

/// Which right-hand side is evolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// `∂ₜu = Δu`.
    Linear,
    /// `∂ₜu = Δu − u^p`.
    Semilinear { p: f64 },
}

impl Scheme {
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Scheme::Linear => None,
            Scheme::Semilinear { p } => Some(*p),
        }
    }
}

/// Time-stepping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt_initial: f64,
    /// Geometric growth factor applied to the step after each step.
    pub dt_growth: f64,
    /// Steps never exceed `dt_cap · (1 + t)`; at most 0.1.
    pub dt_cap: f64,
    pub t_end: f64,
    /// Snapshot times, increasing, inside `(0, t_end]`.
    pub output_times: Vec<f64>,
    /// Keep every step's field (needed for space-time functionals).
    pub record_steps: bool,
}

/// Default and largest admissible value of [`SolverConfig::dt_cap`].
pub const MAX_DT_CAP: f64 = 0.1;

/// Largest step allowed at time `t` by the default policy: `0.1 (1 + t)`.
pub fn step_cap(t: f64) -> f64 {
    MAX_DT_CAP * (1.0 + t)
}

impl SolverConfig {
    pub fn new(scheme: Scheme, t_end: f64) -> Self {
        Self {
            scheme,
            dt_initial: 1e-3,
            dt_growth: 1.05,
            dt_cap: MAX_DT_CAP,
            t_end,
            output_times: vec![t_end],
            record_steps: false,
        }
    }

    pub fn linear(t_end: f64) -> Self {
        Self::new(Scheme::Linear, t_end)
    }

    pub fn semilinear(p: f64, t_end: f64) -> Self {
        Self::new(Scheme::Semilinear { p }, t_end)
    }

    pub fn with_outputs(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    /// `count` log-spaced output times from `t_first` to `t_end`.
    pub fn with_log_outputs(mut self, t_first: f64, count: usize) -> Self {
        self.output_times = log_spaced(t_first, self.t_end, count);
        self
    }

    pub fn with_steps(mut self, dt_initial: f64, dt_growth: f64) -> Self {
        self.dt_initial = dt_initial;
        self.dt_growth = dt_growth;
        self
    }

    /// Uniformly refine the step policy by `factor` (initial step and cap
    /// divided, growth rate rooted).
    pub fn refined_steps(mut self, factor: f64) -> Self {
        self.dt_initial /= factor;
        self.dt_cap /= factor;
        self.dt_growth = self.dt_growth.powf(1.0 / factor);
        self
    }

    pub fn recording_steps(mut self) -> Self {
        self.record_steps = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Scheme::Semilinear { p } = self.scheme {
            if !(p > 1.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!("exponent p must exceed 1, got {p}")));
            }
        }
        if !(self.dt_initial > 0.0) || !self.dt_initial.is_finite() {
            return Err(Error::InvalidArgument("dt_initial must be positive".into()));
        }
        if !(self.dt_growth >= 1.0) || !self.dt_growth.is_finite() {
            return Err(Error::InvalidArgument("dt_growth must be >= 1".into()));
        }
        if !(self.dt_cap > 0.0 && self.dt_cap <= MAX_DT_CAP) {
            return Err(Error::InvalidArgument(format!(
                "dt_cap must lie in (0, {MAX_DT_CAP}]"
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument("t_end must be positive".into()));
        }
        let mut prev = 0.0;
        for &t in &self.output_times {
            if !(t > prev) || t > self.t_end * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "output times must increase inside (0, t_end], got {t}"
                )));
            }
            prev = t;
        }
        Ok(())
    }
}

/// `count` points from `a` to `b`, equally spaced in `ln t`.
pub fn log_spaced(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![b];
    }
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..count)
        .map(|k| (la + (lb - la) * k as f64 / (count - 1) as f64).exp())
        .collect();
    out[0] = a;
    out[count - 1] = b;
    out
}

/// Solution state recorded at one output time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
    /// `∫₀ᵗ u(s, r_i)^p ds` per node (zero for the linear flow).
    pub accumulator: Vec<f64>,
}

/// Per-step scalar log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Nodal maximum of `|u|`.
    pub sup_norm: f64,
    /// [`refined_peak`] of the field.
    pub peak: f64,
    pub phi_mass: f64,
    /// Cumulative φ-mass that left through the truncation boundary.
    pub leaked: f64,
}

/// Output of [`evolve`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Arc<RadialGrid>,
    scheme: Scheme,
    initial: Vec<f64>,
    snapshots: Vec<Snapshot>,
    steps: Vec<StepRecord>,
    dense: Vec<(f64, Vec<f64>)>,
    accumulator: Vec<f64>,
    max_clamp_fraction: f64,
    flux_warning_time: Option<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn initial_field(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.initial.clone(),
        }
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Every step's `(t, values)` including `t = 0`, when recorded.
    pub fn dense(&self) -> &[(f64, Vec<f64>)] {
        &self.dense
    }

    /// Accumulated `∫₀^{t_end} u^p ds` per node.
    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn final_time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t)
    }

    pub fn final_field(&self) -> Field {
        let values = self
            .snapshots
            .last()
            .map_or_else(|| self.initial.clone(), |s| s.values.clone());
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn snapshot_field(&self, k: usize) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.snapshots[k].values.clone(),
        }
    }

    /// Largest per-step clamped φ-mass relative to the current φ-mass.
    pub fn max_clamp_fraction(&self) -> f64 {
        self.max_clamp_fraction
    }

    /// First time the leak monitor exceeded its warning level, if ever.
    pub fn flux_warning_time(&self) -> Option<f64> {
        self.flux_warning_time
    }

    pub fn total_leaked(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.leaked)
    }
}

/// Leak warning threshold relative to the current φ-mass.
pub const FLUX_WARN: f64 = 1e-8;
/// Leak hard-error threshold relative to the current φ-mass.
pub const FLUX_ABORT: f64 = 1e-4;

/// `out_i = (L u)_i` at interior nodes; boundary entries are zero.
fn apply_diffusion(grid: &RadialGrid, u: &[f64], out: &mut [f64]) {
    let k = grid.face_conductance();
    let w = grid.weights();
    let n = u.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = (k[i] * (u[i + 1] - u[i]) - k[i - 1] * (u[i] - u[i - 1])) / w[i];
    }
}

/// Solve `(I − θ L) x = rhs` on interior nodes with zero boundary values.
fn solve_implicit(grid: &RadialGrid, theta: f64, rhs: &[f64]) -> Vec<f64> {
    let k = grid.face_conductance();
    let w = grid.weights();
    let n = rhs.len();
    let m = n - 2;
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    for j in 0..m {
        let i = j + 1;
        let lower = -theta * k[i - 1] / w[i];
        let upper = -theta * k[i] / w[i];
        let diag = 1.0 + theta * (k[i - 1] + k[i]) / w[i];
        let (denom, d_prev) = if j == 0 {
            (diag, 0.0)
        } else {
            (diag - lower * c_prime[j - 1], d_prime[j - 1])
        };
        debug_assert!(denom > 0.0, "tridiagonal pivot must stay positive");
        c_prime[j] = upper / denom;
        d_prime[j] = (rhs[i] - if j == 0 { 0.0 } else { lower * d_prev }) / denom;
    }
    let mut x = vec![0.0; n];
    for j in (0..m).rev() {
        let next = if j + 1 < m { x[j + 2] } else { 0.0 };
        x[j + 1] = d_prime[j] - c_prime[j] * next;
    }
    x
}

fn absorption(u: f64, p: f64) -> f64 {
    if u > 0.0 {
        u.powf(p)
    } else {
        0.0
    }
}

struct StepOutcome {
    values: Vec<f64>,
    clamped: Vec<f64>,
}

fn step_impl(grid: &RadialGrid, u: &[f64], dt: f64, scheme: Scheme, diffusion: bool) -> StepOutcome {
    let n = u.len();
    let theta = if diffusion { 0.5 * dt } else { 0.0 };
    let mut lu = vec![0.0; n];
    if diffusion {
        apply_diffusion(grid, u, &mut lu);
    }
    let implicit = |rhs: &[f64]| {
        if diffusion {
            solve_implicit(grid, theta, rhs)
        } else {
            let mut x = rhs.to_vec();
            x[0] = 0.0;
            x[n - 1] = 0.0;
            x
        }
    };
    match scheme {
        Scheme::Linear => {
            let rhs: Vec<f64> = u.iter().zip(&lu).map(|(a, b)| a + theta * b).collect();
            StepOutcome {
                values: implicit(&rhs),
                clamped: Vec::new(),
            }
        }
        Scheme::Semilinear { p } => {
            let predictor_rhs: Vec<f64> = u.iter().map(|&v| v - 0.5 * dt * absorption(v, p)).collect();
            let half = implicit(&predictor_rhs);
            let rhs: Vec<f64> = u
                .iter()
                .zip(&lu)
                .zip(&half)
                .map(|((&v, &l), &h)| v + theta * l - dt * absorption(h, p))
                .collect();
            let mut values = implicit(&rhs);
            let cap = sup_norm(u);
            let mut clamped = vec![0.0; n];
            for (v, c) in values.iter_mut().zip(clamped.iter_mut()) {
                if *v < 0.0 {
                    *c = -*v;
                    *v = 0.0;
                } else if *v > cap {
                    *c = *v - cap;
                    *v = cap;
                }
            }
            StepOutcome { values, clamped }
        }
    }
}

/// Advance one step of size `dt`.
pub fn step(u: &Field, dt: f64, cfg: &SolverConfig) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step needs dt > 0, got {dt}")));
    }
    let out = step_impl(&u.grid, &u.values, dt, cfg.scheme, true);
    if let Some(i) = out.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node: i, t: dt });
    }
    Ok(Field {
        grid: u.grid.clone(),
        values: out.values,
    })
}

fn weighted_phi_sum(grid: &RadialGrid, phi: &[f64], values: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(phi)
        .zip(values)
        .map(|((w, f), v)| w * f * v)
        .sum()
}

/// Evolve `u0` to `cfg.t_end`, recording snapshots at the output times.
///
/// Steps grow geometrically from `dt_initial`, are capped by
/// [`step_cap`] and, for the absorption flow, by `0.5 / (p ‖u‖^{p−1})`,
/// and are shortened to land exactly on output times.
pub fn evolve(u0: &Field, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = u0.grid.clone();
    let phi = HarmonicWeight::on_grid(&grid);
    let phi = phi.values();
    let n = grid.len();
    let k = grid.face_conductance();
    let outer_phi = phi[n - 1];
    let outer_k = k[n - 2];

    if cfg.scheme != Scheme::Linear && !u0.is_nonnegative() {
        return Err(Error::InvalidArgument(
            "absorption flow needs nonnegative initial data".into(),
        ));
    }
    check_support_margin(&grid, &u0.values, cfg.t_end);

    let mut u = u0.values.clone();
    let mut t = 0.0;
    let mut dt = cfg.dt_initial;
    let mut accumulator = vec![0.0; n];
    let mut absorbed_now: Vec<f64> = match cfg.scheme {
        Scheme::Semilinear { p } => u.iter().map(|&v| absorption(v, p)).collect(),
        Scheme::Linear => vec![0.0; n],
    };
    let mut leaked = 0.0;
    let mut max_clamp_fraction: f64 = 0.0;
    let mut flux_warning_time = None;

    let m0 = weighted_phi_sum(&grid, phi, &u);
    let mut steps = vec![StepRecord {
        t: 0.0,
        sup_norm: sup_norm(&u),
        peak: refined_peak(&u),
        phi_mass: m0,
        leaked: 0.0,
    }];
    let mut dense = Vec::new();
    if cfg.record_steps {
        dense.push((0.0, u.clone()));
    }
    let mut snapshots = Vec::with_capacity(cfg.output_times.len());
    let mut next_output = 0;

    while next_output < cfg.output_times.len() {
        let target = cfg.output_times[next_output];
        let mut h = dt.min(cfg.dt_cap * (1.0 + t));
        if let Scheme::Semilinear { p } = cfg.scheme {
            let s = sup_norm(&u);
            if s > 0.0 {
                // stability limit of the explicit absorption, refined with the cap
                h = h.min(0.5 * (cfg.dt_cap / MAX_DT_CAP) / (p * s.powf(p - 1.0)));
            }
        }
        let landing = t + h >= target * (1.0 - 1e-12);
        if landing {
            h = target - t;
        }

        let out = step_impl(&grid, &u, h, cfg.scheme, true);
        if let Some(i) = out.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: i, t: t + h });
        }
        leaked += 0.5 * h * outer_k * outer_phi * (u[n - 2] + out.values[n - 2]);
        u = out.values;
        t = if landing { target } else { t + h };

        if let Scheme::Semilinear { p } = cfg.scheme {
            for (i, a) in accumulator.iter_mut().enumerate() {
                let g_new = absorption(u[i], p);
                *a += 0.5 * h * (absorbed_now[i] + g_new);
                absorbed_now[i] = g_new;
            }
        }

        let mass = weighted_phi_sum(&grid, phi, &u);
        if !out.clamped.is_empty() && mass > 0.0 {
            let clamped = weighted_phi_sum(&grid, phi, &out.clamped);
            max_clamp_fraction = max_clamp_fraction.max(clamped / mass);
        }
        if mass > 0.0 {
            let rel = leaked / mass;
            if rel > FLUX_ABORT {
                return Err(Error::BoundaryFlux { t, leak: rel });
            }
            if rel > FLUX_WARN && flux_warning_time.is_none() {
                log::warn!("truncation boundary leak {rel:.2e} of phi-mass at t = {t}");
                flux_warning_time = Some(t);
            }
        }

        steps.push(StepRecord {
            t,
            sup_norm: sup_norm(&u),
            peak: refined_peak(&u),
            phi_mass: mass,
            leaked,
        });
        if cfg.record_steps {
            dense.push((t, u.clone()));
        }
        if landing {
            snapshots.push(Snapshot {
                t,
                values: u.clone(),
                accumulator: accumulator.clone(),
            });
            next_output += 1;
        } else {
            dt *= cfg.dt_growth;
        }
    }

    Ok(Trajectory {
        grid,
        scheme: cfg.scheme,
        initial: u0.values.clone(),
        snapshots,
        steps,
        dense,
        accumulator,
        max_clamp_fraction,
        flux_warning_time,
    })
}

fn check_support_margin(grid: &RadialGrid, values: &[f64], t_end: f64) {
    let r = grid.nodes();
    let r_max = grid.domain().truncation_radius();
    // Values below 1e-12 of the peak carry no measurable mass.
    let floor = 1e-12 * sup_norm(values);
    if let Some(last) = values.iter().rposition(|&v| v.abs() > floor) {
        let margin = r_max - r[last];
        if margin < 6.0 * t_end.sqrt() {
            log::warn!(
                "initial support ends {margin:.3} from the truncation radius; \
                 recommended margin is {:.3}",
                6.0 * t_end.sqrt()
            );
        }
    }
}

/// `S(t) u0` for the linear Dirichlet flow.
pub fn apply_semigroup(u0: &Field, t: f64) -> Result<Field> {
    if t == 0.0 {
        return Ok(u0.clone());
    }
    apply_semigroup_with(u0, SolverConfig::linear(t))
}

/// `S(t) u0` with explicit step parameters (`cfg.t_end` is the target time).
pub fn apply_semigroup_with(u0: &Field, mut cfg: SolverConfig) -> Result<Field> {
    cfg.scheme = Scheme::Linear;
    cfg.output_times = vec![cfg.t_end];
    Ok(evolve(u0, &cfg)?.final_field())
}

/// Discrepancy between `S(t) 𝟙` (indicator truncated at `R_max`) and the
/// harmonic weight, maximised over probe nodes in `[r0, r0 + 2]`.
pub fn indicator_limit_check(grid: &Arc<RadialGrid>, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let domain = *grid.domain();
    if domain.dimension() < 3 {
        return Err(Error::InvalidArgument(
            "the indicator flow converges to the harmonic weight only for N >= 3".into(),
        ));
    }
    let traj = indicator_flow(grid, times)?;
    let phi = HarmonicWeight::on_grid(grid);
    let r0 = domain.inner_radius();
    let probes: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.nodes()[i] <= r0 + 2.0)
        .collect();
    Ok(traj
        .snapshots()
        .iter()
        .map(|s| {
            let worst = probes
                .iter()
                .map(|&i| (s.values[i] - phi.values()[i]).abs())
                .fold(0.0, f64::max);
            (s.t, worst)
        })
        .collect())
}

/// Linear flow of the indicator of the whole window, sampled at `times`.
pub fn indicator_flow(grid: &Arc<RadialGrid>, times: &[f64]) -> Result<Trajectory> {
    let t_end = *times
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty time list".into()))?;
    let ones = Field::from_fn(grid.clone(), |_| 1.0)?;
    let cfg = SolverConfig::linear(t_end)
        .with_outputs(times.to_vec())
        .with_steps(1e-4, 1.05);
    cfg.validate()?;
    evolve_unmonitored(&ones, &cfg)
}

/// Evolution for data that fills the window (the truncated indicator),
/// where the leak monitor is meaningless.
fn evolve_unmonitored(u0: &Field, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut dt = cfg.dt_initial;
    let mut snapshots = Vec::new();
    for &target in &cfg.output_times {
        while t < target {
            let mut h = dt.min(cfg.dt_cap * (1.0 + t));
            let landing = t + h >= target * (1.0 - 1e-12);
            if landing {
                h = target - t;
            }
            u = step(&u, h, cfg)?;
            t = if landing { target } else { t + h };
            if !landing {
                dt *= cfg.dt_growth;
            }
        }
        snapshots.push(Snapshot {
            t,
            values: u.values.clone(),
            accumulator: vec![0.0; u.values.len()],
        });
    }
    Ok(Trajectory {
        grid: u0.grid.clone(),
        scheme: cfg.scheme,
        initial: u0.values.clone(),
        snapshots,
        steps: Vec::new(),
        dense: Vec::new(),
        accumulator: vec![0.0; u0.values.len()],
        max_clamp_fraction: 0.0,
        flux_warning_time: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn refined_peak_is_exact_for_parabolas() {
        let v: Vec<f64> = (0..20).map(|i| 3.0 - (i as f64 * 0.1 - 0.87).powi(2)).collect();
        assert!((refined_peak(&v) - 3.0).abs() < 1e-12);
        assert_eq!(refined_peak(&[0.0, 1.0]), 1.0);
        assert_eq!(refined_peak(&[]), 0.0);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = grid(3, 1.0, 10.0, 64);
        let u = Field::zeros(g);
        for scheme in [Scheme::Linear, Scheme::Semilinear { p: 2.0 }] {
            let cfg = SolverConfig::new(scheme, 1.0);
            let v = step(&u, 0.1, &cfg).unwrap();
            assert!(v.values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn diffusion_free_step_follows_the_ode() {
        // u' = -u^p with u(0) = c: u(t) = (c^{1-p} + (p-1) t)^{-1/(p-1)}.
        let g = grid(1, 0.0, 1.0, 16);
        let (c, p): (f64, f64) = (0.8, 2.5);
        let exact = |t: f64| (c.powf(1.0 - p) + (p - 1.0) * t).powf(-1.0 / (p - 1.0));
        let u: Vec<f64> = vec![c; g.len()];
        let err = |dt: f64| {
            let out = step_impl(&g, &u, dt, Scheme::Semilinear { p }, false);
            (out.values[5] - exact(dt)).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        // local error is third order
        assert!(e1 < 1e-3 && e1 / e2 > 6.0, "{e1} {e2}");
    }

    #[test]
    fn linear_step_conserves_discrete_phi_mass() {
        for n in [1, 2, 3, 5] {
            let g = grid(n, 1.0, 30.0, 300);
            let phi = HarmonicWeight::on_grid(&g);
            let u = Field::from_fn(g.clone(), bump(5.0, 2.0)).unwrap();
            let m0 = weighted_phi_sum(&g, phi.values(), u.values());
            let cfg = SolverConfig::linear(1.0);
            let mut v = u;
            for _ in 0..20 {
                v = step(&v, 0.05, &cfg).unwrap();
            }
            let m1 = weighted_phi_sum(&g, phi.values(), v.values());
            assert!(((m1 - m0) / m0).abs() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn diffusion_operator_annihilates_phi() {
        for n in [1, 2, 3, 4, 5] {
            let g = grid(n, 1.3, 9.0, 80);
            let phi = HarmonicWeight::on_grid(&g);
            let mut out = vec![0.0; g.len()];
            apply_diffusion(&g, phi.values(), &mut out);
            assert!(out.iter().all(|x| x.abs() < 1e-10), "N={n}");
        }
    }

    #[test]
    fn tridiagonal_solve_inverts_the_operator() {
        let g = grid(3, 1.0, 5.0, 40);
        let x: Vec<f64> = g.sample(|r| (r - 1.0) * (5.0 - r) * r.sin());
        let theta = 0.37;
        let mut lx = vec![0.0; x.len()];
        apply_diffusion(&g, &x, &mut lx);
        let rhs: Vec<f64> = x.iter().zip(&lx).map(|(a, b)| a - theta * b).collect();
        let y = solve_implicit(&g, theta, &rhs);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn evolve_lands_on_output_times() {
        let g = grid(1, 0.0, 40.0, 400);
        let u0 = Field::from_fn(g, bump(4.0, 2.0)).unwrap();
        let cfg = SolverConfig::semilinear(2.0, 5.0).with_outputs(vec![0.3, 1.0, 2.5, 5.0]);
        let traj = evolve(&u0, &cfg).unwrap();
        let ts: Vec<f64> = traj.snapshots().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.3, 1.0, 2.5, 5.0]);
        for w in traj.steps().windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].t - w[0].t <= step_cap(w[0].t) * (1.0 + 1e-12));
        }
        for w in traj.snapshots().windows(2) {
            for (a, b) in w[0].accumulator.iter().zip(&w[1].accumulator) {
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn semilinear_flow_stays_between_zero_and_initial_max() {
        let g = grid(2, 1.0, 60.0, 600);
        let u0 = Field::from_fn(g, |r| 3.0 * bump(4.0, 2.0)(r)).unwrap();
        let cfg = SolverConfig::semilinear(1.5, 20.0).with_log_outputs(0.1, 12);
        let traj = evolve(&u0, &cfg).unwrap();
        let top = u0.sup_norm();
        let mut prev = top;
        for s in traj.steps() {
            assert!(s.sup_norm <= prev + 1e-15 && s.sup_norm <= top);
            prev = s.sup_norm;
        }
        for snap in traj.snapshots() {
            assert!(snap.values.iter().all(|&v| (0.0..=top).contains(&v)));
        }
        assert!(traj.max_clamp_fraction() <= 1e-12, "{}", traj.max_clamp_fraction());
    }

    #[test]
    fn rejects_bad_configs() {
        let g = grid(1, 0.0, 10.0, 64);
        let u0 = Field::from_fn(g.clone(), bump(3.0, 1.0)).unwrap();
        assert!(evolve(&u0, &SolverConfig::semilinear(1.0, 1.0)).is_err());
        assert!(evolve(&u0, &SolverConfig::linear(1.0).with_outputs(vec![0.5, 0.2])).is_err());
        assert!(evolve(&u0, &SolverConfig::linear(1.0).with_outputs(vec![2.0])).is_err());
        assert!(evolve(&u0, &SolverConfig::linear(1.0).with_steps(0.0, 1.0)).is_err());
        let neg = Field::from_fn(g, |r| -bump(3.0, 1.0)(r)).unwrap();
        assert!(evolve(&neg, &SolverConfig::semilinear(2.0, 1.0)).is_err());
        assert!(step(&u0, 0.0, &SolverConfig::linear(1.0)).is_err());
    }

    #[test]
    fn leaking_data_is_a_hard_error() {
        let g = grid(1, 0.0, 6.0, 120);
        let u0 = Field::from_fn(g, bump(3.0, 2.0)).unwrap();
        let err = evolve(&u0, &SolverConfig::linear(30.0)).unwrap_err();
        assert!(matches!(err, Error::BoundaryFlux { .. }), "{err:?}");
    }

    #[test]
    fn semigroup_identity_at_zero() {
        let g = grid(3, 1.0, 20.0, 100);
        let u0 = Field::from_fn(g, bump(4.0, 1.5)).unwrap();
        let v = apply_semigroup(&u0, 0.0).unwrap();
        assert_eq!(v.values(), u0.values());
    }

    #[test]
    fn indicator_check_needs_three_dimensions() {
        let g = grid(2, 1.0, 20.0, 100);
        assert!(indicator_limit_check(&g, &[1.0]).is_err());
    }
}
