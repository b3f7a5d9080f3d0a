//! CSV artifacts and run manifests.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! rows end in `\n`, and every file starts with a header row.  Time series
//! use the columns `t,value` or `t,value,envelope`; tables over another
//! axis (radius, scale) name that axis in the first column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

/// `x` with 17 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn fmt_csv(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// One cell of a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_csv(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// A named CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// `t,value` series.
    pub fn series(name: &str, points: &[(f64, f64)]) -> Self {
        let mut t = Self::new(name, &["t", "value"]);
        for &(a, b) in points {
            t.push_floats(&[a, b]);
        }
        t
    }

    /// `t,value,envelope` series; `envelope` is evaluated at each `t`.
    pub fn series_with_envelope(
        name: &str,
        points: &[(f64, f64)],
        envelope: impl Fn(f64) -> f64,
    ) -> Self {
        let mut t = Self::new(name, &["t", "value", "envelope"]);
        for &(a, b) in points {
            t.push_floats(&[a, b, envelope(a)]);
        }
        t
    }

    pub fn push_floats(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|&x| Cell::Float(x)).collect());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(&self.name), self.render())?;
        Ok(())
    }
}

/// Header of the sweep aggregate.
pub const AGGREGATE_HEADER: [&str; 9] = [
    "N", "p", "q", "scenario", "fitted_a", "fitted_b", "residual", "t_lo", "t_hi",
];

/// Plain-text manifest: `key = value` lines grouped under `#` headings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Manifest {
    pub fn section(&mut self, title: &str) -> &mut Vec<(String, String)> {
        self.sections.push((title.to_string(), Vec::new()));
        &mut self.sections.last_mut().expect("just pushed").1
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, (title, entries)) in self.sections.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# {title}");
            for (key, value) in entries {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.txt"), self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_csv(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_csv(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_csv(f64::INFINITY), "inf");
        assert_eq!(fmt_csv(f64::NAN), "nan");
        for x in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, 5e-324] {
            assert_eq!(fmt_csv(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn series_layout() {
        let t = Table::series_with_envelope("a.csv", &[(1.0, 2.0), (3.0, 4.0)], |t| 2.0 * t);
        let text = t.render();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "t,value,envelope");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
        assert_eq!(lines[2].split(',').nth(2).unwrap(), fmt_csv(6.0));
    }

    #[test]
    fn manifest_sections() {
        let mut m = Manifest::default();
        m.section("config").push(("scenario".into(), "dichotomy".into()));
        m.section("checks").push(("check.x".into(), "pass".into()));
        assert_eq!(
            m.render(),
            "# config\nscenario = dichotomy\n\n# checks\ncheck.x = pass\n"
        );
    }
}
