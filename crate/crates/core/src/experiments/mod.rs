//! Experiment runners and their file outputs.

pub mod artifacts;
pub mod bobench;
pub mod config;
pub mod convergence;
pub mod output;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::BoError;
use crate::diagnostics::DiagnosticsError;

use crate::mso::MsoError;
use crate::objectives::ObjectiveError;
use crate::qn::SolverError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mso(#[from] MsoError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Bo(#[from] BoError),
}

/// Outcome of one unit of work inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub id: String,
    pub ok: bool,
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

/// Lists every run of an experiment and the ones that failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub runs: Vec<RunStatus>,
    pub failed: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            ..Self::default()
        }
    }

    pub fn ok(&mut self, id: impl Into<String>, outputs: Vec<String>) {
        self.runs.push(RunStatus {
            id: id.into(),
            ok: true,
            error: None,
            outputs,
        });
    }

    pub fn fail(&mut self, id: impl Into<String>, error: impl ToString) {
        let id = id.into();
        self.failed.push(id.clone());
        self.runs.push(RunStatus {
            id,
            ok: false,
            error: Some(error.to_string()),
            outputs: Vec::new(),
        });
    }

    pub fn all_ok(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn write(&self, path: &Path, meta: &output::Metadata) -> Result<(), ExperimentError> {
        output::write_json(path, meta, self)?;
        Ok(())
    }
}

/// Timing keys blanked by deterministic runs.
pub const TIMING_KEYS: [&str; 6] = ["runtime", "acq_runtime", "fit_seconds", "acq_seconds", "wall_clock", "eval_seconds"];

/// Sets every timing key in `v` (at any depth) to null.
pub fn null_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map.iter_mut() {
                if TIMING_KEYS.contains(&k.as_str()) {
                    *child = serde_json::Value::Null;
                } else {
                    null_timings(child);
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(null_timings),
        _ => {}
    }
}

/// Linear-interpolation quantile (`p` in `[0, 1]`); NaN for empty input.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn timings_nulled_at_depth() {
        let mut v = serde_json::json!({"runtime": 1.0, "trials": [{"acq_seconds": 2.0, "value": 3.0}]});
        null_timings(&mut v);
        assert_eq!(v, serde_json::json!({"runtime": null, "trials": [{"acq_seconds": null, "value": 3.0}]}));
    }

    #[test]
    fn manifest_tracks_failures() {
        let mut m = Manifest::new("x");
        m.ok("a", vec![]);
        assert!(m.all_ok());
        m.fail("b", "boom");
        assert_eq!(m.failed, vec!["b".to_string()]);
        assert!(!m.all_ok());
    }
}
