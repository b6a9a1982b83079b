//! Convergence of the coupled solver as the number of stacked restarts grows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{positive_list, Settings};
use super::output::{fmt_f64, fmt_opt, write_csv, write_json, JsonLines, Metadata};
use super::{quantile, ExperimentError, Manifest};
use crate::mso::{mean_objective_trace, run_cbe, MsoConfig, NegatedObjective};
use crate::numerics::Rng;
use crate::objectives::{Objective, ObjectiveId};
use crate::par::Exec;
use crate::qn::{Bounds, SolverConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub dim: usize,
    pub restarts: Vec<usize>,
    /// Total restarts per `B`; a `B` column gets `budget / B` repetitions.
    pub budget: usize,
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            restarts: vec![1, 2, 5, 10],
            budget: 200,
            memory: 10,
            max_iters: 200,
            grad_tol: 0.0,
            threshold: 1e-12,
            seed: 0,
        }
    }
}

impl ConvergenceConfig {
    /// `reps` sets the budget; `--paper-scale` raises its default to 1000.
    pub fn from_settings(s: &Settings) -> Result<Self, ExperimentError> {
        let d = Self::default();
        match s.objectives()? {
            None => {}
            Some(v) if v == [ObjectiveId::Rosenbrock] => {}
            Some(_) => return Err(ExperimentError::Config("convergence runs on rosenbrock only".into())),
        }
        let dim = match s.dims() {
            None => d.dim,
            Some(v) if v.len() == 1 && v[0] >= 2 => v[0],
            Some(_) => return Err(ExperimentError::Config("convergence takes a single dim >= 2".into())),
        };
        let restarts = match s.restart_list() {
            None => d.restarts,
            Some(r) => positive_list(r, "restarts")?,
        };
        let budget = s.reps.unwrap_or(if s.paper_scale() { 1000 } else { d.budget });
        if budget == 0 {
            return Err(ExperimentError::Config("reps must be >= 1".into()));
        }
        Ok(Self {
            dim,
            restarts,
            budget,
            memory: s.memory.unwrap_or(d.memory),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            grad_tol: s.grad_tol.unwrap_or(d.grad_tol),
            threshold: d.threshold,
            seed: s.seed(),
        })
    }

    pub fn reps(&self, b: usize) -> usize {
        (self.budget / b).max(1)
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            memory: self.memory,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ftol: 0.0,
            ..SolverConfig::default()
        }
    }
}

/// Traces and summary for one `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceColumn {
    pub restarts: usize,
    /// `reps × (max_iters + 1)` mean-objective traces.
    pub traces: Vec<Vec<f64>>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    /// First iteration at which the median curve is at or below the
    /// threshold.
    pub iters_to_threshold: Option<usize>,
}

/// Mean objective trace of one coupled run, padded to `max_iters + 1`.
pub fn coupled_trace(
    objective: &Objective,
    starts: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<Vec<f64>, ExperimentError> {
    let bounds = Bounds::new(objective.lower.clone(), objective.upper.clone())?;
    let acq = NegatedObjective::new(objective.clone());
    let mso = MsoConfig {
        solver: *cfg,
        variant: Variant::LbfgsB,
        record_iterates: false,
    };
    let out = run_cbe(&acq, starts, &bounds, &mso)?;
    let mut trace: Vec<f64> = mean_objective_trace(&out.per_restart)?
        .into_iter()
        .map(|v| -v)
        .collect();
    let last = *trace.last().expect("trace has the start value");
    trace.resize(cfg.max_iters + 1, last);
    Ok(trace)
}

fn start_points(seed: u64, b: usize, rep: usize, obj: &Objective) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed).split(((b as u64) << 32) | rep as u64);
    (0..b)
        .map(|_| rng.uniform_in_box(&obj.lower, &obj.upper))
        .collect()
}

pub fn first_at_or_below(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v <= threshold)
}

pub fn run_column(
    cfg: &ConvergenceConfig,
    b: usize,
    exec: Exec,
) -> Result<ConvergenceColumn, ExperimentError> {
    let obj = Objective::rosenbrock(cfg.dim);
    let solver = cfg.solver();
    let traces = exec
        .map_range(cfg.reps(b), |rep| {
            coupled_trace(&obj, &start_points(cfg.seed, b, rep, &obj), &solver)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let len = cfg.max_iters + 1;
    let column = |p: f64| -> Vec<f64> {
        (0..len)
            .map(|t| {
                let vals: Vec<f64> = traces.iter().map(|tr| tr[t]).collect();
                quantile(&vals, p)
            })
            .collect()
    };
    let median = column(0.5);
    let iters_to_threshold = first_at_or_below(&median, cfg.threshold);
    Ok(ConvergenceColumn {
        restarts: b,
        q25: column(0.25),
        q75: column(0.75),
        median,
        traces,
        iters_to_threshold,
    })
}

pub fn run_convergence(
    cfg: &ConvergenceConfig,
    exec: Exec,
) -> Result<Vec<ConvergenceColumn>, ExperimentError> {
    if cfg.restarts.is_empty() || cfg.restarts.contains(&0) {
        return Err(ExperimentError::Config(
            "restart list must be non-empty and positive".into(),
        ));
    }
    cfg.restarts.iter().map(|&b| run_column(cfg, b, exec)).collect()
}

#[derive(Serialize)]
struct Crossing {
    #[serde(rename = "B")]
    restarts: usize,
    reps: usize,
    iters_to_threshold: Option<usize>,
}

#[derive(Serialize)]
struct ConvergenceReport<'a> {
    config: &'a ConvergenceConfig,
    columns: Vec<Crossing>,
}

/// Runs the sweep and writes `curves.csv` (long format), `traces.jsonl`
/// (one record per repetition) and `report.json`.
pub fn write_convergence(
    cfg: &ConvergenceConfig,
    exec: Exec,
    out: &Path,
) -> Result<(Vec<ConvergenceColumn>, Manifest), ExperimentError> {
    let meta = Metadata::new("convergence", cfg, cfg.seed);
    let mut manifest = Manifest::new("convergence");
    if cfg.restarts.is_empty() || cfg.restarts.contains(&0) {
        return Err(ExperimentError::Config("restart list must be non-empty and positive".into()));
    }
    let mut columns = Vec::new();
    for &b in &cfg.restarts {
        match run_column(cfg, b, exec) {
            Ok(c) => {
                manifest.ok(format!("B{b}"), vec![]);
                columns.push(c);
            }
            Err(e) => manifest.fail(format!("B{b}"), e),
        }
    }
    let mut rows = Vec::new();
    for c in &columns {
        for t in 0..c.median.len() {
            rows.push(vec![
                c.restarts.to_string(),
                t.to_string(),
                fmt_f64(c.median[t]),
                fmt_f64(c.q25[t]),
                fmt_f64(c.q75[t]),
            ]);
        }
    }
    write_csv(&out.join("curves.csv"), &meta, &["B", "iteration", "median", "q25", "q75"], &rows)?;

    let mut jl = JsonLines::create(&out.join("traces.jsonl"), &meta)?;
    for c in &columns {
        for (rep, trace) in c.traces.iter().enumerate() {
            jl.push(&serde_json::json!({"B": c.restarts, "rep": rep, "trace": trace}))?;
        }
    }
    jl.finish()?;

    let report = ConvergenceReport {
        config: cfg,
        columns: columns
            .iter()
            .map(|c| Crossing {
                restarts: c.restarts,
                reps: c.traces.len(),
                iters_to_threshold: c.iters_to_threshold,
            })
            .collect(),
    };
    write_json(&out.join("report.json"), &meta, &report)?;
    let crossings: Vec<Vec<String>> = report
        .columns
        .iter()
        .map(|c| vec![c.restarts.to_string(), c.reps.to_string(), fmt_opt(c.iters_to_threshold)])
        .collect();
    write_csv(&out.join("crossings.csv"), &meta, &["B", "reps", "iters_to_threshold"], &crossings)?;
    manifest.write(&out.join("manifest.json"), &meta)?;
    Ok((columns, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_index() {
        assert_eq!(first_at_or_below(&[3.0, 1.0, 1e-13, 0.0], 1e-12), Some(2));
        assert_eq!(first_at_or_below(&[3.0, 1.0], 1e-12), None);
    }

    #[test]
    fn settings_resolution() {
        let c = ConvergenceConfig::from_settings(&Settings::default()).unwrap();
        assert_eq!(c, ConvergenceConfig::default());
        let p = Settings { paper_scale: Some(true), ..Settings::default() };
        assert_eq!(ConvergenceConfig::from_settings(&p).unwrap().budget, 1000);
        let r = Settings { reps: Some(40), paper_scale: Some(true), ..Settings::default() };
        assert_eq!(ConvergenceConfig::from_settings(&r).unwrap().budget, 40);
        let bad = Settings::from_toml_str("objective = \"sphere\"\n").unwrap();
        assert!(ConvergenceConfig::from_settings(&bad).is_err());
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ConvergenceConfig {
            dim: 2,
            restarts: vec![1, 2],
            budget: 4,
            max_iters: 10,
            ..ConvergenceConfig::default()
        };
        let (cols, m) = write_convergence(&cfg, Exec::Sequential, dir.path()).unwrap();
        assert!(m.all_ok());
        assert_eq!(cols.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 11);
        let jl = std::fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
        assert!(jl.lines().next().unwrap().starts_with("{\"meta\""));
        assert_eq!(jl.lines().count(), 1 + 4 + 2);
    }

    #[test]
    fn exec_modes_agree() {
        let cfg = ConvergenceConfig {
            restarts: vec![2],
            budget: 8,
            max_iters: 30,
            ..ConvergenceConfig::default()
        };
        let a = run_column(&cfg, 2, Exec::Sequential).unwrap();
        let b = run_column(&cfg, 2, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.traces.len(), 4);
        assert!(a.traces.iter().all(|t| t.len() == 31));
    }
}
