//! Pass/fail bookkeeping shared by every suite.

use std::fmt::Write as _;

use serde::Serialize;

use crate::series::{LinearFit, ObservableSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `measured <= bound`
    AtMost,
    /// `measured >= bound`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub name: String,
    pub slope: f64,
    pub width: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

impl RateReport {
    pub fn new(name: impl Into<String>, fit: &LinearFit, window: (f64, f64)) -> Self {
        Self { name: name.into(), slope: fit.slope, width: fit.width, samples: fit.samples, window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub name: String,
    pub reason: String,
}

/// Outcome of one suite: checks with their measured/bound pairs, fitted
/// rates, warnings and the series that were produced along the way.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub theorem: String,
    pub checks: Vec<Check>,
    pub fits: Vec<RateReport>,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub series: Vec<ObservableSeries>,
}

impl EstimateReport {
    pub fn new(theorem: impl Into<String>) -> Self {
        Self {
            theorem: theorem.into(),
            checks: Vec::new(),
            fits: Vec::new(),
            skipped: Vec::new(),
            warnings: Vec::new(),
            series: Vec::new(),
        }
    }

    /// Records `measured <= bound`. NaN never passes.
    pub fn at_most(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        let pass = measured <= bound;
        self.checks.push(Check { name: name.into(), measured, bound, relation: Relation::AtMost, pass });
        pass
    }

    /// Records `measured >= bound`. NaN never passes.
    pub fn at_least(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        let pass = measured >= bound;
        self.checks.push(Check { name: name.into(), measured, bound, relation: Relation::AtLeast, pass });
        pass
    }

    /// `lo <= measured <= hi`, stored as two checks.
    pub fn within(&mut self, name: &str, measured: f64, lo: f64, hi: f64) -> bool {
        let a = self.at_least(format!("{name} (lower)"), measured, lo);
        let b = self.at_most(format!("{name} (upper)"), measured, hi);
        a && b
    }

    pub fn fit(&mut self, name: impl Into<String>, fit: &LinearFit, window: (f64, f64)) {
        self.fits.push(RateReport::new(name, fit, window));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn skip(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.skipped.push(Skipped { name: name.into(), reason: reason.into() });
    }

    pub fn push_series(&mut self, series: ObservableSeries) {
        self.series.push(series);
    }

    /// Folds another report's checks, fits, skips and warnings into this one.
    pub fn absorb(&mut self, other: EstimateReport) {
        self.checks.extend(other.checks);
        self.fits.extend(other.fits);
        self.skipped.extend(other.skipped);
        self.warnings.extend(other.warnings);
        self.series.extend(other.series);
    }

    /// True when every recorded check passed. Skipped items do not fail a suite.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{verdict}] {}", self.theorem);
        for c in &self.checks {
            let op = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let mark = if c.pass { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "  {mark} {:<58} {:>13.6e} {op} {:<13.6e}", c.name, c.measured, c.bound);
        }
        for f in &self.fits {
            let _ = writeln!(
                out,
                "  fit  {:<58} slope {:+.4} ± {:.4} on [{:.3}, {:.3}] ({} samples)",
                f.name, f.slope, f.width, f.window.0, f.window.1, f.samples
            );
        }
        for s in &self.skipped {
            let _ = writeln!(out, "  skip {}: {}", s.name, s.reason);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "  warn {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_and_rendering() {
        let mut r = EstimateReport::new("demo");
        assert!(r.at_most("small", 1.0, 2.0));
        assert!(r.passed());
        assert!(!r.at_least("big", 1.0, 2.0));
        assert!(!r.at_most("nan", f64::NAN, 1.0));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 2);
        let fail = r.check("big").unwrap();
        assert_eq!((fail.measured, fail.bound), (1.0, 2.0));
        r.skip("later", "no data");
        let text = r.render();
        assert!(text.starts_with("[FAIL] demo"));
        assert!(text.contains("skip later"));
    }

    #[test]
    fn absorbing_keeps_failures() {
        let mut a = EstimateReport::new("a");
        a.at_most("x", 0.0, 1.0);
        let mut b = EstimateReport::new("b");
        b.within("y", 5.0, 0.0, 1.0);
        b.warn("w");
        a.absorb(b);
        assert!(!a.passed());
        assert_eq!(a.checks.len(), 3);
        assert_eq!(a.warnings, vec!["w".to_string()]);
    }
}
