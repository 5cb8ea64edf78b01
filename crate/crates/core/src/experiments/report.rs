use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::persist::write_text;

pub const SCHEMA_VERSION: u32 = 1;

/// How a metric is judged.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Tolerance {
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    Within { target: f64, abs: f64 },
    Relative { target: f64, rel: f64 },
    /// Boolean outcome; `value` is 1 for true.
    Holds,
    /// Reported, not judged.
    Advisory,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: Tolerance,
    /// Module and operation that produced the value.
    pub provenance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Metric {
    pub fn new(name: &str, value: f64, tolerance: Tolerance, provenance: &str) -> Self {
        let pass = match tolerance {
            Tolerance::AtMost { bound } => Some(value <= bound),
            Tolerance::AtLeast { bound } => Some(value >= bound),
            Tolerance::Within { target, abs } => Some((value - target).abs() <= abs),
            Tolerance::Relative { target, rel } => Some((value - target).abs() <= rel * target.abs()),
            Tolerance::Holds => Some(value == 1.0),
            Tolerance::Advisory => None,
        };
        Metric {
            name: name.into(),
            value,
            tolerance,
            provenance: provenance.into(),
            pass,
            note: String::new(),
        }
    }

    pub fn holds(name: &str, ok: bool, provenance: &str) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Tolerance::Holds, provenance)
    }

    pub fn advisory(name: &str, value: f64, provenance: &str) -> Self {
        Self::new(name, value, Tolerance::Advisory, provenance)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    #[serde(rename = "metric")]
    pub metrics: Vec<Metric>,
}

impl RunReport {
    pub fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            seed,
            pass: true,
            error: None,
            artifacts: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn push(&mut self, m: Metric) {
        self.metrics.push(m);
        self.refresh();
    }

    pub fn fail_with(&mut self, err: impl ToString) {
        self.error = Some(err.to_string());
        self.pass = false;
    }

    fn refresh(&mut self) {
        self.pass = self.error.is_none() && !self.metrics.iter().any(Metric::failed);
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }
}

/// Gnuplot script plotting `y` against `x` from each CSV, log scale on y.
pub fn gnuplot_script(title: &str, series: &[(&str, &str, &str)], logy: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\n"));
    if logy {
        s.push_str("set logscale y\n");
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(file, x, y)| format!("'{file}' using '{x}':'{y}' with linespoints title '{file}:{y}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_tracks_metrics() {
        let mut r = RunReport::new("verify", "abc", 1);
        r.push(Metric::new("slope", -0.49, Tolerance::Within { target: -0.5, abs: 0.05 }, "semigroup"));
        r.push(Metric::advisory("beta", 9.0, "experiments"));
        assert!(r.pass);
        r.push(Metric::new("res", 2e-6, Tolerance::AtMost { bound: 1e-6 }, "solvers"));
        assert!(!r.pass);
        let text = r.to_text();
        assert!(text.starts_with("schema_version = 1\n"));
        assert!(text.contains("[[metric]]"));
        assert!(text.contains("provenance = \"semigroup\""));
        let parsed: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(parsed["metric"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn error_fails_report() {
        let mut r = RunReport::new("blowup", "x", 0);
        r.fail_with("boom");
        r.push(Metric::holds("ok", true, "t"));
        assert!(!r.pass);
    }
}
