//! BO benchmark grid over objectives, dimensions, seeds and schemes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{positive_list, Settings};
use super::output::{fmt_f64, write_csv, write_json, JsonLines, Metadata};
use super::{null_timings, ExperimentError, Manifest};
use crate::bo::{run_bo, summarize, BoConfig, BoTrace, SummaryRow};
use crate::mso::Scheme;
use crate::objectives::ObjectiveId;
use crate::qn::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoBenchConfig {
    pub objectives: Vec<ObjectiveId>,
    pub dims: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub restarts: usize,
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub trials: usize,
    pub n_init: usize,
    pub seed: u64,
    /// Number of seeds; run `k` uses `seed + k`.
    pub reps: usize,
    pub deterministic: bool,
}

impl Default for BoBenchConfig {
    fn default() -> Self {
        let base = BoConfig::new(ObjectiveId::Rastrigin, 5, Scheme::Seq, 0);
        Self {
            objectives: vec![ObjectiveId::Rastrigin],
            dims: vec![5],
            schemes: Scheme::ALL.to_vec(),
            restarts: base.restarts,
            memory: base.solver.memory,
            max_iters: base.solver.max_iters,
            grad_tol: base.solver.grad_tol,
            trials: base.n_trials,
            n_init: base.n_init,
            seed: 0,
            reps: 5,
            deterministic: false,
        }
    }
}

impl BoBenchConfig {
    /// `--paper-scale` raises the trial and seed defaults to 300 and 20.
    pub fn from_settings(s: &Settings) -> Result<Self, ExperimentError> {
        let d = Self::default();
        let large = s.paper_scale();
        let restarts = match s.restart_list() {
            None => d.restarts,
            Some(r) => {
                let r = positive_list(r, "restarts")?;
                if r.len() != 1 {
                    return Err(ExperimentError::Config("bobench takes a single restart count".into()));
                }
                r[0]
            }
        };
        Ok(Self {
            objectives: s.objectives()?.unwrap_or(d.objectives),
            dims: s.dims().map(|v| positive_list(v, "dim")).transpose()?.unwrap_or(d.dims),
            schemes: s.schemes()?.unwrap_or(d.schemes),
            restarts,
            memory: s.memory.unwrap_or(d.memory),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            grad_tol: s.grad_tol.unwrap_or(d.grad_tol),
            trials: s.trials.unwrap_or(if large { 300 } else { d.trials }),
            n_init: d.n_init,
            seed: s.seed(),
            reps: s.reps.unwrap_or(if large { 20 } else { d.reps }),
            deterministic: s.deterministic(),
        })
    }

    /// Run configs in execution order: seeds outermost within a cell so the
    /// schemes of one seed run back to back.
    pub fn runs(&self) -> Vec<BoConfig> {
        let mut out = Vec::new();
        for &objective in &self.objectives {
            for &dim in &self.dims {
                for k in 0..self.reps as u64 {
                    for &scheme in &self.schemes {
                        out.push(BoConfig {
                            n_trials: self.trials,
                            n_init: self.n_init.min(self.trials),
                            restarts: self.restarts,
                            solver: SolverConfig {
                                memory: self.memory,
                                max_iters: self.max_iters,
                                grad_tol: self.grad_tol,
                                ..SolverConfig::default()
                            },
                            ..BoConfig::new(objective, dim, scheme, self.seed + k)
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn run_id(c: &BoConfig) -> String {
    format!("{}_D{}_s{}_{}", c.objective, c.dim, c.seed, c.scheme)
}

#[derive(Serialize)]
struct SummaryReport<'a> {
    config: &'a BoBenchConfig,
    rows: &'a [SummaryRow],
}

/// Runs the grid and writes `traces.jsonl`, `summary.csv` and
/// `summary.json`. Deterministic runs write every timing as null.
pub fn run_bobench(
    cfg: &BoBenchConfig,
    out: &Path,
) -> Result<(Vec<BoTrace>, Vec<SummaryRow>, Manifest), ExperimentError> {
    let runs = cfg.runs();
    if runs.is_empty() {
        return Err(ExperimentError::Config("empty benchmark grid".into()));
    }
    for r in &runs {
        r.validate()?;
    }
    let meta = Metadata::new("bobench", cfg, cfg.seed);
    let mut manifest = Manifest::new("bobench");
    let mut jl = JsonLines::create(&out.join("traces.jsonl"), &meta)?;
    let mut traces = Vec::new();
    for r in &runs {
        let id = run_id(r);
        match run_bo(r) {
            Ok(trace) => {
                let mut v = serde_json::to_value(&trace)?;
                if cfg.deterministic {
                    null_timings(&mut v);
                }
                jl.push(&v)?;
                manifest.ok(id, vec![]);
                traces.push(trace);
            }
            Err(e) => manifest.fail(id, e),
        }
    }
    jl.finish()?;

    let rows = summarize(&traces);
    let timing = |v: f64| if cfg.deterministic { String::new() } else { fmt_f64(v) };
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.objective.to_string(),
                r.dim.to_string(),
                r.method.to_string(),
                fmt_f64(r.best_value),
                timing(r.runtime),
                fmt_f64(r.iters),
            ]
        })
        .collect();
    write_csv(
        &out.join("summary.csv"),
        &meta,
        &["Objective", "D", "Method", "BestValue", "Runtime", "Iters"],
        &csv_rows,
    )?;
    let mut report = serde_json::to_value(SummaryReport { config: cfg, rows: &rows })?;
    if cfg.deterministic {
        null_timings(&mut report);
    }
    write_json(&out.join("summary.json"), &meta, &report)?;
    manifest.write(&out.join("manifest.json"), &meta)?;
    Ok((traces, rows, manifest))
}
