//! Randomised invariants of the solver, the diagnostics and the config
//! format.

use std::sync::Arc;

use proptest::prelude::*;

use exterior_heat::config::{InitialData, Scenario, ScenarioConfig};
use exterior_heat::diagnostics::{fit_rate, mass_phi, FitModel};
use exterior_heat::geometry::{make_grid, DomainSpec, HarmonicWeight, RadialGrid};
use exterior_heat::output::fmt_csv;
use exterior_heat::solver::{evolve, Field, SolverConfig};

fn bump(c: f64, w: f64, a: f64) -> impl Fn(f64) -> f64 {
    move |r| {
        let z = (r - c) / w;
        if z.abs() < 1.0 {
            a * (1.0 - 1.0 / (1.0 - z * z)).exp()
        } else {
            0.0
        }
    }
}

fn grid(n: u32) -> Arc<RadialGrid> {
    let r0 = if n == 1 { 0.0 } else { 1.0 };
    Arc::new(make_grid(DomainSpec::new(n, r0, r0 + 30.0).unwrap(), 300).unwrap())
}

/// `(center offset, width, amplitude)` of a bump inside `[r0, r0 + 8]`.
fn bump_params() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.6f64..3.0, 0.5f64..2.0, 0.1f64..2.0).prop_map(|(w, c, a)| (w + c, w, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_smooth_data_stay_ordered(
        n in 1u32..=3,
        p in 1.2f64..3.0,
        base in proptest::collection::vec(bump_params(), 1..3),
        extra in bump_params(),
    ) {
        let g = grid(n);
        let r0 = g.domain().inner_radius();
        let lower = |r: f64| base.iter().map(|&(c, w, a)| bump(r0 + c, w, a)(r)).sum::<f64>();
        let u0 = Field::from_fn(g.clone(), lower).unwrap();
        let (c, w, a) = extra;
        let v0 = Field::from_fn(g.clone(), |r| lower(r) + bump(r0 + c, w, a)(r)).unwrap();
        for cfg in [SolverConfig::linear(5.0), SolverConfig::semilinear(p, 5.0)] {
            let cfg = cfg.with_log_outputs(0.05, 12);
            let tu = evolve(&u0, &cfg).unwrap();
            let tv = evolve(&v0, &cfg).unwrap();
            let scale = v0.sup_norm();
            for (su, sv) in tu.snapshots().iter().zip(tv.snapshots()) {
                for (x, y) in su.values.iter().zip(&sv.values) {
                    prop_assert!(*x <= *y + 1e-12 * scale, "t = {}: {} > {}", su.t, x, y);
                }
            }
        }
    }

    #[test]
    fn linear_flow_conserves_phi_mass(
        n in 1u32..=4,
        params in proptest::collection::vec(bump_params(), 1..4),
    ) {
        let g = grid(n);
        let r0 = g.domain().inner_radius();
        let u0 = Field::from_fn(g.clone(), |r| {
            params.iter().map(|&(c, w, a)| bump(r0 + c, w, a)(r)).sum()
        }).unwrap();
        let phi = HarmonicWeight::on_grid(&g);
        let m0 = mass_phi(&u0, &phi).unwrap();
        let traj = evolve(&u0, &SolverConfig::linear(10.0).with_log_outputs(0.1, 10)).unwrap();
        // Mass plus the monitored outflow is conserved to round-off.
        for rec in traj.steps() {
            let balance = rec.phi_mass + rec.leaked - m0;
            prop_assert!(balance.abs() <= 1e-12 * m0, "t = {}: imbalance {}", rec.t, balance);
        }
        prop_assert!(traj.total_leaked() <= 1e-6 * m0);
        for s in traj.snapshots() {
            prop_assert!(s.values.iter().all(|&v| v >= -1e-14 * u0.sup_norm()));
        }
    }

    #[test]
    fn rate_fit_is_scale_and_sampling_invariant(
        a in -3.0f64..0.5,
        b in -2.0f64..2.0,
        c in -20.0f64..20.0,
        count in 12usize..60,
    ) {
        let series: Vec<(f64, f64)> = (0..count)
            .map(|k| {
                let t = 10f64.powf(1.0 + 2.0 * k as f64 / (count - 1) as f64);
                let v = c.exp() * (1.0 + t).powf(a) * (1.0 + (1.0 + t).ln()).powf(b);
                (t, v)
            })
            .collect();
        let fit = fit_rate(&series, FitModel::POWER_LOG, 10.0, 1000.0).unwrap();
        prop_assert!((fit.a - a).abs() < 1e-6 && (fit.b - b).abs() < 1e-5);
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, 7.5 * v)).collect();
        let fit2 = fit_rate(&scaled, FitModel::POWER_LOG, 10.0, 1000.0).unwrap();
        prop_assert!((fit2.a - fit.a).abs() < 1e-9);
        prop_assert!((fit2.log_c - fit.log_c - 7.5f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn configs_round_trip(
        scenario in 0usize..11,
        n in 1u32..6,
        p in 1.01f64..6.0,
        q in prop_oneof![Just(f64::INFINITY), 1.0f64..10.0],
        cells in 10usize..5000,
        t_end in 0.5f64..500.0,
        center in proptest::option::of(2.5f64..9.0),
        width in 0.1f64..1.5,
    ) {
        let mut cfg = ScenarioConfig::preset(Scenario::ALL[scenario]);
        cfg.dimension = n;
        cfg.p = p;
        cfg.q = q;
        cfg.num_cells = cells;
        cfg.t_end = t_end;
        cfg.output_first = t_end / 100.0;
        cfg.data = InitialData::Bump { center, width, amplitude: 1.0 / 3.0 };
        prop_assert_eq!(ScenarioConfig::parse(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn csv_floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
        let s = fmt_csv(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        prop_assert!(!s.contains(','));
    }
}
