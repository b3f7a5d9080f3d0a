//! Exterior-domain geometry: radial windows, uniform radial grids with
//! exact shell-volume quadrature, and the positive harmonic weight that
//! vanishes on the obstacle.
//!
//! Only ball obstacles (and the half-line for `N = 1`) are supported, so the
//! harmonic weight is available in closed form:
//!
//! | N   | weight                  |
//! |-----|-------------------------|
//! | 1   | `r`                     |
//! | 2   | `ln(r / r0)`            |
//! | ≥ 3 | `1 - (r0 / r)^(N - 2)`  |

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radial description of an exterior domain truncated at `truncation_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    dimension: u32,
    inner_radius: f64,
    truncation_radius: f64,
}

impl DomainSpec {
    /// Exterior of the ball `B(0, r0)` in `R^N`, truncated at `r_max`.
    ///
    /// For `N = 1` the inner radius is ignored and the domain is `(0, r_max)`.
    pub fn new(dimension: u32, inner_radius: f64, truncation_radius: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Geometry("dimension must be >= 1".into()));
        }
        let r0 = if dimension == 1 { 0.0 } else { inner_radius };
        if !r0.is_finite() || !truncation_radius.is_finite() {
            return Err(Error::Geometry("radii must be finite".into()));
        }
        if dimension >= 2 && r0 <= 0.0 {
            return Err(Error::Geometry(format!(
                "inner radius must be positive for N = {dimension}, got {r0}"
            )));
        }
        if truncation_radius - r0 <= 0.0 {
            return Err(Error::Geometry(format!(
                "truncation radius {truncation_radius} must exceed inner radius {r0}"
            )));
        }
        Ok(Self {
            dimension,
            inner_radius: r0,
            truncation_radius,
        })
    }

    pub fn half_line(truncation_radius: f64) -> Result<Self> {
        Self::new(1, 0.0, truncation_radius)
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Volume of `{r0 < |x| < r_max}`; for `N = 1` the length of `(0, r_max)`.
    pub fn annulus_volume(&self) -> f64 {
        shell_volume(self.dimension, self.inner_radius, self.truncation_radius)
    }

    /// Harmonic weight at radius `r`; see [`phi_weight`].
    pub fn phi(&self, r: f64) -> Result<f64> {
        phi_weight(self, r)
    }
}

/// Surface area of the unit sphere in `R^N`, `2 π^{N/2} / Γ(N/2)`.
pub fn unit_sphere_area(dimension: u32) -> f64 {
    2.0 * PI.powf(dimension as f64 / 2.0) / gamma_half_integer(dimension)
}

/// `Γ(n / 2)` for a positive integer `n`, by the exact recursion from
/// `Γ(1/2) = √π` and `Γ(1) = 1`.
pub fn gamma_half_integer(n: u32) -> f64 {
    assert!(n >= 1, "gamma_half_integer needs n >= 1");
    let (mut value, mut k) = if n % 2 == 0 { (1.0, 2) } else { (PI.sqrt(), 1) };
    while k < n {
        value *= k as f64 / 2.0;
        k += 2;
    }
    value
}

/// Angular factor of the radial volume element `c_N r^{N-1} dr`.
///
/// The half-line (`N = 1`) carries factor 1, not the two-point "sphere".
pub fn measure_factor(dimension: u32) -> f64 {
    if dimension == 1 {
        1.0
    } else {
        unit_sphere_area(dimension)
    }
}

/// Volume of the shell `{a < |x| < b}` with the measure of [`measure_factor`].
pub fn shell_volume(dimension: u32, a: f64, b: f64) -> f64 {
    let n = dimension as f64;
    measure_factor(dimension) * (b.powf(n) - a.powf(n)) / n
}

/// Explicit reference profile vanishing on the unit sphere (`N ≥ 2`) or at
/// the origin (`N = 1`).
pub fn phi_reference(dimension: u32, r: f64) -> f64 {
    match dimension {
        1 => r,
        2 => r.ln(),
        n => 1.0 - r.powi(2 - n as i32),
    }
}

/// Positive harmonic function of the exterior domain vanishing on the
/// obstacle and normalised like the reference profile at infinity.
pub fn phi_weight(domain: &DomainSpec, r: f64) -> Result<f64> {
    let r0 = domain.inner_radius;
    if !(r >= r0) {
        return Err(Error::OutsideDomain { r, r0 });
    }
    Ok(match domain.dimension {
        1 => r,
        2 => (r / r0).ln(),
        n => 1.0 - (r0 / r).powi(n as i32 - 2),
    })
}

/// Radial derivative of [`phi_weight`].
pub fn phi_weight_derivative(domain: &DomainSpec, r: f64) -> f64 {
    let r0 = domain.inner_radius;
    match domain.dimension {
        1 => 1.0,
        2 => 1.0 / r,
        n => {
            let k = n as i32 - 2;
            k as f64 * r0.powi(k) / r.powi(k + 1)
        }
    }
}

/// Uniform grid in the radial coordinate with shell-volume weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    domain: DomainSpec,
    nodes: Vec<f64>,
    spacing: f64,
    weights: Vec<f64>,
    face_conductance: Vec<f64>,
}

/// Build a uniform radial grid of `num_cells` cells on the domain window.
///
/// Node `i` carries the volume of its dual shell
/// `[r_{i-1/2}, r_{i+1/2}]` (clipped to the window), so the weights sum to
/// the annulus volume exactly.  Face `i` (between nodes `i` and `i+1`)
/// carries the conductance `c_N / ∫ s^{1-N} ds`, which makes radial
/// harmonic functions exact null vectors of the diffusion stencil.
pub fn make_grid(domain: DomainSpec, num_cells: usize) -> Result<RadialGrid> {
    if num_cells < 8 {
        return Err(Error::Geometry(format!(
            "need at least 8 cells, got {num_cells}"
        )));
    }
    let r0 = domain.inner_radius;
    let r_max = domain.truncation_radius;
    let h = (r_max - r0) / num_cells as f64;
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Geometry("non-finite grid spacing".into()));
    }
    let n = domain.dimension;
    let mut nodes: Vec<f64> = (0..=num_cells).map(|i| r0 + i as f64 * h).collect();
    nodes[num_cells] = r_max;

    let weights = (0..=num_cells)
        .map(|i| {
            let lo = if i == 0 { r0 } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let hi = if i == num_cells {
                r_max
            } else {
                0.5 * (nodes[i] + nodes[i + 1])
            };
            shell_volume(n, lo, hi)
        })
        .collect();

    let c = measure_factor(n);
    let face_conductance = nodes
        .windows(2)
        .map(|w| c / inverse_area_integral(n, w[0], w[1]))
        .collect();

    Ok(RadialGrid {
        domain,
        nodes,
        spacing: h,
        weights,
        face_conductance,
    })
}

/// `∫_a^b s^{1-N} ds`.
fn inverse_area_integral(dimension: u32, a: f64, b: f64) -> f64 {
    match dimension {
        1 => b - a,
        2 => (b / a).ln(),
        n => {
            let k = n as i32 - 2;
            (a.powi(-k) - b.powi(-k)) / k as f64
        }
    }
}

impl RadialGrid {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dimension(&self) -> u32 {
        self.domain.dimension
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Conductance of the face between node `i` and node `i + 1`.
    pub fn face_conductance(&self) -> &[f64] {
        &self.face_conductance
    }

    pub fn num_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True when both grids describe the same nodes on the same domain.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.domain == other.domain && self.nodes.len() == other.nodes.len())
    }

    /// Sample a function on the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// Index of the node closest to `r`.
    pub fn nearest_node(&self, r: f64) -> usize {
        let x = ((r - self.domain.inner_radius) / self.spacing).round();
        (x.max(0.0) as usize).min(self.num_cells())
    }
}

/// Harmonic weight sampled on a grid, with the reference profile kept
/// alongside for comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicWeight {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl HarmonicWeight {
    pub fn on_grid(grid: &RadialGrid) -> Self {
        let domain = *grid.domain();
        let values = grid
            .nodes()
            .iter()
            .map(|&r| phi_weight(&domain, r).expect("grid nodes lie in the domain"))
            .collect();
        Self { domain, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Reference profile `φ₀` evaluated at `r`.
    pub fn reference_profile(&self, r: f64) -> f64 {
        phi_reference(self.domain.dimension, r)
    }
}

/// Second-order central radial Laplacian `u'' + (N-1)/r u'` at interior
/// nodes.  Index `k` of the result corresponds to node `k + 1`.
pub fn radial_laplacian_central(grid: &RadialGrid, values: &[f64]) -> Vec<f64> {
    let h = grid.spacing();
    let nm1 = grid.dimension() as f64 - 1.0;
    let r = grid.nodes();
    (1..r.len() - 1)
        .map(|i| {
            let second = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h);
            let first = (values[i + 1] - values[i - 1]) / (2.0 * h);
            second + nm1 / r[i] * first
        })
        .collect()
}

/// Largest violation over the grid of `φ₀(r/R₀) ≤ φ(r) ≤ φ₀(r/r₀)`.
///
/// For a ball obstacle `R₀ = r₀` and both bounds coincide with `φ`.
pub fn phi_sandwich_check(domain: &DomainSpec, grid: &RadialGrid) -> Result<f64> {
    if domain.dimension < 2 {
        return Err(Error::InvalidArgument(
            "sandwich bounds are stated for N >= 2".into(),
        ));
    }
    if grid.domain() != domain {
        return Err(Error::GridMismatch("grid built on another domain".into()));
    }
    let r0 = domain.inner_radius;
    let outer_obstacle_radius = r0;
    let mut worst = 0.0_f64;
    for &r in grid.nodes() {
        let phi = phi_weight(domain, r)?;
        let lower = phi_reference(domain.dimension, r / outer_obstacle_radius);
        let upper = phi_reference(domain.dimension, r / r0);
        worst = worst.max(lower - phi).max(phi - upper);
    }
    Ok(worst.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn half_line_grid_is_uniform() {
        let d = DomainSpec::half_line(1.0).unwrap();
        let g = make_grid(d, 10).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        for (i, &r) in g.nodes().iter().enumerate() {
            assert!((r - 0.1 * i as f64).abs() < 1e-14);
        }
        assert_eq!(g.nodes()[10], 1.0);
        // trapezoid end corrections
        assert!((g.weights()[0] - 0.05).abs() < 1e-15);
        assert!((g.weights()[5] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shell_weights_sum_to_annulus_volume() {
        let d = DomainSpec::new(3, 1.0, 2.0).unwrap();
        let g = make_grid(d, 100).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 4.0 * PI / 3.0 * 7.0).abs() < 1e-10);

        let d = DomainSpec::new(2, 1.0, 3.0).unwrap();
        for cells in [64, 128, 256] {
            let g = make_grid(d, cells).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!(rel(total, PI * 8.0) < 1e-12, "cells {cells}: {total}");
        }
    }

    #[test]
    fn trapezoid_weights_converge_to_annulus_area() {
        // Independent check: trapezoid on 2π r dr with Richardson extrapolation
        // reproduces the closed-form area the shell weights give exactly.
        let trap = |n: usize| {
            let h = 2.0 / n as f64;
            let f = |r: f64| 2.0 * PI * r;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * h * f(1.0 + i as f64 * h)
                })
                .sum::<f64>()
        };
        let rich = (4.0 * trap(128) - trap(64)) / 3.0;
        let g = make_grid(DomainSpec::new(2, 1.0, 3.0).unwrap(), 64).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!(rel(rich, total) < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(DomainSpec::new(0, 1.0, 2.0).is_err());
        assert!(DomainSpec::new(3, 2.0, 2.0).is_err());
        assert!(DomainSpec::new(3, 0.0, 2.0).is_err());
        assert!(DomainSpec::new(2, 1.0, f64::NAN).is_err());
        let d = DomainSpec::new(3, 1.0, 2.0).unwrap();
        assert!(make_grid(d, 7).is_err());
        // N = 1 ignores the inner radius
        let d = DomainSpec::new(1, 5.0, 2.0).unwrap();
        assert_eq!(d.inner_radius(), 0.0);
    }

    #[test]
    fn phi_closed_forms() {
        let d1 = DomainSpec::half_line(10.0).unwrap();
        assert_eq!(phi_weight(&d1, 2.5).unwrap(), 2.5);
        let d3 = DomainSpec::new(3, 1.0, 10.0).unwrap();
        assert_eq!(phi_weight(&d3, 1.0).unwrap(), 0.0);
        assert!((phi_weight(&d3, 2.0).unwrap() - 0.5).abs() < 1e-15);
        let d2 = DomainSpec::new(2, 1.0, 10.0).unwrap();
        assert!((phi_weight(&d2, std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            phi_weight(&d3, 0.5),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn phi_is_positive_monotone_and_bounded() {
        for n in [1, 2, 3, 5] {
            let d = DomainSpec::new(n, 1.0, 30.0).unwrap();
            let g = make_grid(d, 300).unwrap();
            let phi = HarmonicWeight::on_grid(&g);
            let v = phi.values();
            assert_eq!(v[0], 0.0);
            for w in v.windows(2) {
                assert!(w[1] > w[0]);
            }
            if n >= 3 {
                assert!(v[1..].iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }
    }

    #[test]
    fn phi_is_discretely_harmonic_to_second_order() {
        for n in [1, 2, 3, 5] {
            let residual = |cells: usize| {
                let d = DomainSpec::new(n, 1.0, 5.0).unwrap();
                let g = make_grid(d, cells).unwrap();
                let phi = HarmonicWeight::on_grid(&g);
                radial_laplacian_central(&g, phi.values())
                    .iter()
                    .fold(0.0_f64, |m, x| m.max(x.abs()))
            };
            let coarse = residual(100);
            let fine = residual(200);
            if n == 1 || n == 3 {
                // exact for φ = r; for N = 3 the h² terms cancel on 1 - 1/r
                assert!(coarse < 1e-8 && fine < 1e-8, "N = {n}: {coarse} {fine}");
            } else {
                let ratio = coarse / fine;
                assert!((3.5..=4.5).contains(&ratio), "N = {n}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn sandwich_degenerates_for_ball_obstacles() {
        let d = DomainSpec::new(3, 1.0, 20.0).unwrap();
        let g = make_grid(d, 100).unwrap();
        assert!(phi_sandwich_check(&d, &g).unwrap() <= 1e-12);
        let d = DomainSpec::new(5, 1.0, 20.0).unwrap();
        let g = make_grid(d, 200).unwrap();
        assert!(phi_sandwich_check(&d, &g).unwrap() <= 1e-12);
        let d = DomainSpec::new(2, 2.0, 20.0).unwrap();
        assert!((phi_weight(&d, 4.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let g = make_grid(d, 100).unwrap();
        assert!(phi_sandwich_check(&d, &g).unwrap() <= 1e-12);
        let d1 = DomainSpec::half_line(3.0).unwrap();
        assert!(phi_sandwich_check(&d1, &make_grid(d1, 10).unwrap()).is_err());
    }
}
