//! Machine-readable run reports, one JSON object per line.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evolve::RunTrace;
use crate::signals::Metrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iters: usize,
    pub converged: bool,
    pub dt_used: f64,
    pub wall_seconds: f64,
    pub final_lambda: Option<f64>,
    pub final_fidelity: Option<f64>,
}

impl From<&RunTrace> for TraceSummary {
    fn from(t: &RunTrace) -> Self {
        Self {
            iters: t.iters_run,
            converged: t.converged,
            dt_used: t.dt_used,
            wall_seconds: t.wall_seconds,
            final_lambda: t.final_lambda(),
            final_fidelity: t.final_fidelity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub method: String,
    pub params: Map<String, Value>,
    /// Present whenever a clean reference is known.
    pub metrics_noisy: Option<Metrics>,
    pub metrics_restored: Option<Metrics>,
    pub trace_summary: TraceSummary,
    pub artifact_paths: Vec<String>,
}

impl RunReport {
    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Append one line to `path`, creating the file if needed.
    pub fn append_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let line = self.to_json_line()?;
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

/// Serialize `value` (a struct) into a flat key-value map.
pub fn params_map<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map,
        Ok(other) => Map::from_iter([("value".to_string(), other)]),
        Err(e) => Map::from_iter([("error".to_string(), Value::String(e.to_string()))]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nl_filter::FilterParams;

    #[test]
    fn report_lines_parse_back() {
        let report = RunReport {
            command: "denoise1d".into(),
            method: "nl".into(),
            params: params_map(&FilterParams::default()),
            metrics_noisy: None,
            metrics_restored: Some(Metrics {
                rel_err: 0.1,
                rmse: 0.2,
                psnr_db: None,
                plateau_fraction: 0.5,
                curvature_mass: 3.0,
            }),
            trace_summary: TraceSummary::from(&RunTrace::default()),
            artifact_paths: vec!["out.csv".into()],
        };
        assert_eq!(report.params["epsilon"], Value::from(1e-2));
        assert_eq!(report.params["solver"], Value::from("explicit-euler"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        report.append_to(&path).unwrap();
        report.append_to(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let back: RunReport = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(back, report);
    }
}
