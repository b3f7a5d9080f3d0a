//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys may appear in any order but at most once.  Unknown keys and keys
//! that do not apply to the chosen initial data are rejected.
//! [`ScenarioConfig::serialize`] writes a canonical form that parses back
//! to an identical value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{make_grid, DomainSpec, RadialGrid};
use crate::solver::{Field, SolverConfig, MAX_DT_CAP};

/// Preset experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    LinearConservation,
    LinearRates,
    IndicatorLimit,
    EnergyIdentity,
    Dichotomy,
    Subsolution,
    AsymptoticProfile,
    GaussianProfile,
    TestfnSuite,
    OracleConvergence,
    IntegralLemmas,
}

impl Scenario {
    pub const ALL: [Scenario; 11] = [
        Scenario::LinearConservation,
        Scenario::LinearRates,
        Scenario::IndicatorLimit,
        Scenario::EnergyIdentity,
        Scenario::Dichotomy,
        Scenario::Subsolution,
        Scenario::AsymptoticProfile,
        Scenario::GaussianProfile,
        Scenario::TestfnSuite,
        Scenario::OracleConvergence,
        Scenario::IntegralLemmas,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Scenario::LinearConservation => "linear-conservation",
            Scenario::LinearRates => "linear-rates",
            Scenario::IndicatorLimit => "indicator-limit",
            Scenario::EnergyIdentity => "energy-identity",
            Scenario::Dichotomy => "dichotomy",
            Scenario::Subsolution => "subsolution",
            Scenario::AsymptoticProfile => "asymptotic-profile",
            Scenario::GaussianProfile => "gaussian-profile",
            Scenario::TestfnSuite => "testfn-suite",
            Scenario::OracleConvergence => "oracle-convergence",
            Scenario::IntegralLemmas => "integral-lemmas",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::LinearConservation => "phi-mass of the linear flow is invariant",
            Scenario::LinearRates => "decay exponent of the L^q norm of the linear flow",
            Scenario::IndicatorLimit => "S(t) applied to the indicator tends to phi (N >= 3)",
            Scenario::EnergyIdentity => "mass balance M(t) + absorbed = M(0) and its refinement order",
            Scenario::Dichotomy => "vanishing or positive limit of the phi-mass",
            Scenario::Subsolution => "u >= h(t) S(t) u0 and the maximum principle",
            Scenario::AsymptoticProfile => "weighted distance between u(t) and S(t) u_inf",
            Scenario::GaussianProfile => "weighted distance between u(t) and M_inf phi G(t)",
            Scenario::TestfnSuite => "cut-off bound, Theta exponents and the Y inequality",
            Scenario::OracleConvergence => "solver against image-kernel solutions, with refinement",
            Scenario::IntegralLemmas => "power-log time integrals: equality case and calibrated bounds",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|k| k.key() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (see list-scenarios)"))
    }
}

/// Initial datum descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `amplitude · exp(1 − 1/(1 − z²))`, `z = (r − center)/width`.  An
    /// absent center means `r0 + width`.
    Bump {
        center: Option<f64>,
        width: f64,
        amplitude: f64,
    },
    /// `1` on `[lo, hi]`, zero elsewhere.
    Indicator { lo: f64, hi: f64 },
    /// Two columns `r value`, linearly interpolated, zero outside.
    Table { path: PathBuf },
}

impl InitialData {
    pub fn reference_bump() -> Self {
        InitialData::Bump {
            center: None,
            width: 1.0,
            amplitude: 1.0,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            InitialData::Bump { .. } => "bump",
            InitialData::Indicator { .. } => "indicator",
            InitialData::Table { .. } => "table",
        }
    }

    /// Largest radius where the datum may be nonzero.
    fn outer_extent(&self, r0: f64) -> Option<f64> {
        match self {
            InitialData::Bump { center, width, .. } => Some(center.unwrap_or(r0 + width) + width),
            InitialData::Indicator { hi, .. } => Some(*hi),
            InitialData::Table { .. } => None,
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub dimension: u32,
    /// Obstacle radius; absent means 0 for `N = 1` and 1 otherwise.
    pub inner_radius: Option<f64>,
    /// Outer cut; absent means `extent + 8 √t_end` past the datum support.
    pub truncation_radius: Option<f64>,
    pub num_cells: usize,
    pub p: f64,
    pub q: f64,
    pub t_end: f64,
    pub dt_initial: f64,
    pub dt_growth: f64,
    pub dt_cap: f64,
    pub output_first: f64,
    pub output_count: usize,
    pub data: InitialData,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Reference settings for a preset: 2000 cells, `t_end = 200`,
    /// 81 log-spaced snapshots from 0.02, unit bump next to the obstacle.
    pub fn preset(scenario: Scenario) -> Self {
        let p = match scenario {
            Scenario::AsymptoticProfile | Scenario::GaussianProfile => 2.5,
            Scenario::EnergyIdentity => 1.5,
            _ => 2.0,
        };
        let (t_end, output_count) = match scenario {
            Scenario::IndicatorLimit => (100.0, 41),
            Scenario::OracleConvergence => (1.0, 1),
            _ => (200.0, 81),
        };
        // The refinement-order check needs the step policy refined once
        // before it reaches its asymptotic regime.
        let (dt_initial, dt_growth, dt_cap) = match scenario {
            Scenario::EnergyIdentity => (5e-4, 1.05f64.sqrt(), MAX_DT_CAP / 2.0),
            _ => (1e-3, 1.05, MAX_DT_CAP),
        };
        Self {
            scenario,
            dimension: 3,
            inner_radius: None,
            truncation_radius: None,
            num_cells: 2000,
            p,
            q: f64::INFINITY,
            t_end,
            dt_initial,
            dt_growth,
            dt_cap,
            output_first: 0.02,
            output_count,
            data: InitialData::reference_bump(),
            output: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            pairs.push((line, key.trim().to_string(), value.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Build from `(line, key, value)` triples; line 0 denotes an override
    /// that did not come from a file.
    pub fn from_pairs(pairs: Vec<(usize, String, String)>) -> Result<Self> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (line, key, value) in pairs {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if let Some((first, _)) = map.get(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            map.insert(key, (line, value));
        }
        let mut r = Reader { map };
        let scenario: Scenario = r
            .take("scenario")?
            .ok_or(Error::Config {
                line: 0,
                msg: "missing required key `scenario`".into(),
            })?;
        let mut cfg = Self::preset(scenario);
        r.set(&mut cfg.dimension, "dimension")?;
        cfg.inner_radius = r.take_f64("inner_radius")?.or(cfg.inner_radius);
        cfg.truncation_radius = r.take_f64("truncation_radius")?.or(cfg.truncation_radius);
        r.set(&mut cfg.num_cells, "num_cells")?;
        r.set_f64(&mut cfg.p, "p")?;
        r.set_f64(&mut cfg.q, "q")?;
        r.set_f64(&mut cfg.t_end, "t_end")?;
        r.set_f64(&mut cfg.dt_initial, "dt_initial")?;
        r.set_f64(&mut cfg.dt_growth, "dt_growth")?;
        r.set_f64(&mut cfg.dt_cap, "dt_cap")?;
        r.set_f64(&mut cfg.output_first, "output_first")?;
        r.set(&mut cfg.output_count, "output_count")?;
        let kind_line = r.line("data");
        let kind: String = r.take("data")?.unwrap_or_else(|| "bump".to_string());
        cfg.data = match kind.as_str() {
            "bump" => InitialData::Bump {
                center: r.take_f64("bump_center")?,
                width: r.take_f64("bump_width")?.unwrap_or(1.0),
                amplitude: r.take_f64("bump_amplitude")?.unwrap_or(1.0),
            },
            "indicator" => InitialData::Indicator {
                lo: r.require_f64("indicator_lo", kind_line)?,
                hi: r.require_f64("indicator_hi", kind_line)?,
            },
            "table" => InitialData::Table {
                path: PathBuf::from(r.require::<String>("table_path", kind_line)?),
            },
            other => {
                return Err(Error::Config {
                    line: kind_line,
                    msg: format!("`data` must be bump, indicator or table, got `{other}`"),
                })
            }
        };
        cfg.output = r.take::<String>("output")?.map(PathBuf::from);
        if let Some((key, (line, _))) = r.map.into_iter().next() {
            return Err(Error::Config {
                line,
                msg: format!("key `{key}` does not apply to data = {kind}"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `(key, value)` pairs; only keys with a value are listed.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("scenario", self.scenario.key().to_string()),
            ("dimension", self.dimension.to_string()),
        ];
        if let Some(r0) = self.inner_radius {
            out.push(("inner_radius", fmt_f64(r0)));
        }
        if let Some(rm) = self.truncation_radius {
            out.push(("truncation_radius", fmt_f64(rm)));
        }
        out.push(("num_cells", self.num_cells.to_string()));
        out.push(("p", fmt_f64(self.p)));
        out.push(("q", fmt_f64(self.q)));
        out.push(("t_end", fmt_f64(self.t_end)));
        out.push(("dt_initial", fmt_f64(self.dt_initial)));
        out.push(("dt_growth", fmt_f64(self.dt_growth)));
        out.push(("dt_cap", fmt_f64(self.dt_cap)));
        out.push(("output_first", fmt_f64(self.output_first)));
        out.push(("output_count", self.output_count.to_string()));
        out.push(("data", self.data.kind().to_string()));
        match &self.data {
            InitialData::Bump {
                center,
                width,
                amplitude,
            } => {
                if let Some(c) = center {
                    out.push(("bump_center", fmt_f64(*c)));
                }
                out.push(("bump_width", fmt_f64(*width)));
                out.push(("bump_amplitude", fmt_f64(*amplitude)));
            }
            InitialData::Indicator { lo, hi } => {
                out.push(("indicator_lo", fmt_f64(*lo)));
                out.push(("indicator_hi", fmt_f64(*hi)));
            }
            InitialData::Table { path } => {
                out.push(("table_path", path.display().to_string()));
            }
        }
        if let Some(o) = &self.output {
            out.push(("output", o.display().to_string()));
        }
        out
    }

    pub fn serialize(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Copy with one key replaced, as a sweep axis does.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = self
            .to_pairs()
            .into_iter()
            .filter(|(k, _)| *k != key)
            .map(|(k, v)| (0, k.to_string(), v))
            .collect();
        if key == "data" {
            // Parameters of the previous datum no longer apply.
            pairs.retain(|(_, k, _)| !DATA_KEYS.contains(&k.as_str()));
        }
        pairs.push((0, key.to_string(), value.to_string()));
        Self::from_pairs(pairs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if self.dimension == 0 {
            return bad("dimension must be at least 1".into());
        }
        if self.num_cells < 4 {
            return bad("num_cells must be at least 4".into());
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p must be a finite number above 1, got {}", self.p));
        }
        if !(self.q >= 1.0) {
            return bad(format!("q must be at least 1, got {}", self.q));
        }
        if self.output_count == 0 {
            return bad("output_count must be positive".into());
        }
        if !(self.output_first > 0.0 && self.output_first <= self.t_end) {
            return bad("output_first must lie in (0, t_end]".into());
        }
        match &self.data {
            InitialData::Bump {
                center,
                width,
                amplitude,
            } => {
                if !(*width > 0.0) || !amplitude.is_finite() || *amplitude < 0.0 {
                    return bad("bump needs width > 0 and amplitude >= 0".into());
                }
                if let Some(c) = center {
                    if c - width < self.r0() {
                        return bad("bump support reaches inside the obstacle".into());
                    }
                }
            }
            InitialData::Indicator { lo, hi } => {
                if !(hi > lo) {
                    return bad("indicator needs indicator_lo < indicator_hi".into());
                }
            }
            InitialData::Table { .. } => {}
        }
        self.solver(crate::solver::Scheme::Linear)
            .validate()
            .map_err(|e| Error::Config {
                line: 0,
                msg: e.to_string(),
            })?;
        self.domain().map_err(|e| Error::Config {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(())
    }

    pub fn r0(&self) -> f64 {
        self.inner_radius
            .unwrap_or(if self.dimension == 1 { 0.0 } else { 1.0 })
    }

    pub fn r_max(&self) -> f64 {
        self.truncation_radius.unwrap_or_else(|| {
            let extent = self.datum_extent().unwrap_or(self.r0() + 2.0);
            extent + 8.0 * self.t_end.sqrt()
        })
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.dimension, self.r0(), self.r_max())
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(make_grid(self.domain()?, self.num_cells)?))
    }

    /// Step policy and log-spaced snapshot times for `scheme`.
    pub fn solver(&self, scheme: crate::solver::Scheme) -> SolverConfig {
        let mut cfg = SolverConfig::new(scheme, self.t_end)
            .with_log_outputs(self.output_first, self.output_count)
            .with_steps(self.dt_initial, self.dt_growth);
        cfg.dt_cap = self.dt_cap;
        cfg
    }

    /// Initial datum sampled on `grid`.
    pub fn initial_field(&self, grid: &Arc<RadialGrid>) -> Result<Field> {
        Field::from_fn(grid.clone(), self.datum()?)
    }

    /// Initial datum as a function of the radius.
    pub fn datum(&self) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        let r0 = self.r0();
        Ok(match &self.data {
            InitialData::Bump {
                center,
                width,
                amplitude,
            } => {
                let c = center.unwrap_or(r0 + width);
                let (w, a) = (*width, *amplitude);
                Box::new(move |r| {
                    let z = (r - c) / w;
                    if z.abs() < 1.0 {
                        a * (1.0 - 1.0 / (1.0 - z * z)).exp()
                    } else {
                        0.0
                    }
                })
            }
            InitialData::Indicator { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                Box::new(move |r| if r >= lo && r <= hi { 1.0 } else { 0.0 })
            }
            InitialData::Table { path } => {
                let table = read_table(path)?;
                Box::new(move |r| interpolate(&table, r))
            }
        })
    }

    /// Radius beyond which the datum vanishes.
    pub fn datum_extent(&self) -> Result<f64> {
        match (&self.data, self.data.outer_extent(self.r0())) {
            (_, Some(e)) => Ok(e),
            (InitialData::Table { path }, None) => {
                Ok(read_table(path)?.last().map_or(self.r0(), |row| row.0))
            }
            _ => Ok(self.r0()),
        }
    }
}

const DATA_KEYS: [&str; 6] = [
    "bump_center",
    "bump_width",
    "bump_amplitude",
    "indicator_lo",
    "indicator_hi",
    "table_path",
];

/// Every key the parser accepts.
pub const KEYS: [&str; 21] = [
    "scenario",
    "dimension",
    "inner_radius",
    "truncation_radius",
    "num_cells",
    "p",
    "q",
    "t_end",
    "dt_initial",
    "dt_growth",
    "dt_cap",
    "output_first",
    "output_count",
    "data",
    "bump_center",
    "bump_width",
    "bump_amplitude",
    "indicator_lo",
    "indicator_hi",
    "table_path",
    "output",
];

/// Shortest decimal form that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x:?}")
    }
}

pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        _ => {
            let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
            if v.is_nan() {
                Err("NaN is not allowed".into())
            } else {
                Ok(v)
            }
        }
    }
}

struct Reader {
    map: BTreeMap<String, (usize, String)>,
}

impl Reader {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Config {
                line,
                msg: format!("key `{key}`: {e}"),
            }),
        }
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) => parse_f64(&v).map(Some).map_err(|e| Error::Config {
                line,
                msg: format!("key `{key}`: {e}"),
            }),
        }
    }

    fn set<T: FromStr>(&mut self, slot: &mut T, key: &str) -> Result<()>
    where
        T::Err: fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn set_f64(&mut self, slot: &mut f64, key: &str) -> Result<()> {
        if let Some(v) = self.take_f64(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn require<T: FromStr>(&mut self, key: &str, line: usize) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.take(key)?.ok_or_else(|| Error::Config {
            line,
            msg: format!("missing key `{key}`"),
        })
    }

    fn require_f64(&mut self, key: &str, line: usize) -> Result<f64> {
        self.take_f64(key)?.ok_or_else(|| Error::Config {
            line,
            msg: format!("missing key `{key}`"),
        })
    }
}

fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let cols: Vec<&str> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<(f64, f64)> = match cols.as_slice() {
            [r, v] => r.parse().ok().zip(v.parse().ok()),
            _ => None,
        };
        let (r, v) = parsed.ok_or_else(|| Error::Config {
            line: k + 1,
            msg: format!("{}: expected two numeric columns", path.display()),
        })?;
        if rows.last().is_some_and(|&(prev, _)| r <= prev) || !v.is_finite() {
            return Err(Error::Config {
                line: k + 1,
                msg: format!("{}: radii must increase and values be finite", path.display()),
            });
        }
        rows.push((r, v));
    }
    if rows.len() < 2 {
        return Err(Error::Config {
            line: 0,
            msg: format!("{}: need at least two rows", path.display()),
        });
    }
    Ok(rows)
}

fn interpolate(table: &[(f64, f64)], r: f64) -> f64 {
    let k = table.partition_point(|&(x, _)| x <= r);
    if k == 0 || k == table.len() && r > table[k - 1].0 {
        return 0.0;
    }
    if k == table.len() {
        return table[k - 1].1;
    }
    let (x0, y0) = table[k - 1];
    let (x1, y1) = table[k];
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_preset() {
        for s in Scenario::ALL {
            let cfg = ScenarioConfig::preset(s);
            let again = ScenarioConfig::parse(&cfg.serialize()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(s.key().parse::<Scenario>().unwrap(), s);
        }
    }

    #[test]
    fn round_trip_with_every_datum() {
        let mut cfg = ScenarioConfig::preset(Scenario::Dichotomy);
        cfg.q = 2.0;
        cfg.p = 5.0 / 3.0;
        cfg.inner_radius = Some(0.3);
        cfg.truncation_radius = Some(123.456);
        cfg.output = Some("out dir/x".into());
        for data in [
            InitialData::Bump {
                center: Some(2.1),
                width: 0.7,
                amplitude: 0.1 + 0.2,
            },
            InitialData::Indicator { lo: 0.5, hi: 4.0 },
            InitialData::Table {
                path: "data/u0.txt".into(),
            },
        ] {
            cfg.data = data;
            assert_eq!(ScenarioConfig::parse(&cfg.serialize()).unwrap(), cfg);
        }
    }

    #[test]
    fn comments_blank_lines_and_defaults() {
        let cfg = ScenarioConfig::parse(
            "# header\n\nscenario = linear-rates   # trailing\ndimension = 1\nq = inf\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::LinearRates);
        assert_eq!(cfg.r0(), 0.0);
        assert_eq!(cfg.q, f64::INFINITY);
        assert!((cfg.r_max() - (2.0 + 8.0 * 200f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = ScenarioConfig::parse("scenario = dichotomy\n\nfoo = 3\n").unwrap_err();
        assert_eq!(
            e,
            Error::Config {
                line: 3,
                msg: "unknown key `foo`".into()
            }
        );
        let e = ScenarioConfig::parse("scenario = dichotomy\np = two\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, ref msg } if msg.contains("`p`")));
        let e = ScenarioConfig::parse("scenario = dichotomy\np = 2\np = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }));
        let e = ScenarioConfig::parse("scenario = dichotomy\njust words\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let e = ScenarioConfig::parse("dimension = 3\n").unwrap_err();
        assert!(e.to_string().contains("scenario"));
        let e = ScenarioConfig::parse("scenario = dichotomy\nindicator_lo = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, ref msg } if msg.contains("does not apply")));
        let e = ScenarioConfig::parse("scenario = dichotomy\ndt_cap = 0.5\n").unwrap_err();
        assert!(e.to_string().contains("dt_cap"));
    }

    #[test]
    fn override_switches_datum() {
        let cfg = ScenarioConfig::preset(Scenario::LinearRates);
        let q = cfg.with_override("q", "1").unwrap();
        assert_eq!(q.q, 1.0);
        let ind = ScenarioConfig::parse(
            "scenario = linear-rates\ndata = indicator\nindicator_lo = 1\nindicator_hi = 2\n",
        )
        .unwrap();
        let b = ind.with_override("data", "bump").unwrap();
        assert_eq!(b.data, InitialData::reference_bump());
        assert!(cfg.with_override("nope", "1").is_err());
    }

    #[test]
    fn table_interpolation() {
        let t = [(1.0, 0.0), (2.0, 2.0), (3.0, 0.0)];
        assert_eq!(interpolate(&t, 0.5), 0.0);
        assert_eq!(interpolate(&t, 1.5), 1.0);
        assert_eq!(interpolate(&t, 3.0), 0.0);
        assert_eq!(interpolate(&t, 3.5), 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u0.txt");
        std::fs::write(&path, "# r u\n1.5 0\n2.0, 1.0\n2.5 0\n").unwrap();
        let mut cfg = ScenarioConfig::preset(Scenario::LinearConservation);
        cfg.data = InitialData::Table { path };
        cfg.truncation_radius = Some(5.0);
        cfg.num_cells = 400;
        let g = cfg.grid().unwrap();
        let u = cfg.initial_field(&g).unwrap();
        assert!((u.sup_norm() - 1.0).abs() < 0.02);
    }
}
