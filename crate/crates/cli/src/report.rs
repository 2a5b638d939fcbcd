//! Thresholded metric tables written as `report.csv` and `report.txt`.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// value < threshold
    Below,
    /// value <= threshold
    AtMost,
    /// value >= threshold
    AtLeast,
    /// reported only
    Info,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Self::Below => "<",
            Self::AtMost => "<=",
            Self::AtLeast => ">=",
            Self::Info => "info",
        }
    }

    fn holds(self, value: f64, threshold: f64) -> Option<bool> {
        match self {
            Self::Below => Some(value < threshold),
            Self::AtMost => Some(value <= threshold),
            Self::AtLeast => Some(value >= threshold),
            Self::Info => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    /// `None` for informational rows. NaN values never pass.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub title: String,
    pub rows: Vec<MetricRow>,
    /// `(key, value)` lines describing the run (seed, grids, sizes).
    pub stamp: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: f64,
        comparison: Comparison,
        threshold: f64,
    ) -> bool {
        let pass = comparison
            .holds(value, threshold)
            .map(|p| p && !value.is_nan());
        self.rows.push(MetricRow {
            name: name.into(),
            value,
            threshold,
            comparison,
            pass,
        });
        pass.unwrap_or(true)
    }

    pub fn info(&mut self, name: impl Into<String>, value: f64) {
        self.check(name, value, Comparison::Info, f64::NAN);
    }

    pub fn stamp(&mut self, key: impl Into<String>, value: impl ToString) {
        self.stamp.push((key.into(), value.to_string()));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn failures(&self) -> Vec<&MetricRow> {
        self.rows.iter().filter(|r| r.pass == Some(false)).collect()
    }

    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.row(name).map(|r| r.value)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.rows.extend(other.rows);
        self.stamp.extend(other.stamp);
        self.notes.extend(other.notes);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,threshold,comparison,pass\n");
        for r in &self.rows {
            let pass = match r.pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            let threshold = if r.comparison == Comparison::Info {
                String::new()
            } else {
                r.threshold.to_string()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.name,
                r.value,
                threshold,
                r.comparison.symbol(),
                pass
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(
            out,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        let _ = writeln!(out);
        for (k, v) in &self.stamp {
            let _ = writeln!(out, "{k:<22} {v}");
        }
        let _ = writeln!(out);
        for r in &self.rows {
            let status = match r.pass {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "info",
            };
            if r.comparison == Comparison::Info {
                let _ = writeln!(out, "[{status}] {:<34} {:.6e}", r.name, r.value);
            } else {
                let _ = writeln!(
                    out,
                    "[{status}] {:<34} {:.6e} {} {:.3e}",
                    r.name,
                    r.value,
                    r.comparison.symbol(),
                    r.threshold
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(out);
            let _ = writeln!(out, "{n}");
        }
        out
    }
}
