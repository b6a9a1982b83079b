//! Inverse-Hessian artifact runs: one case per (variant, B), each written as
//! three matrix CSVs and a JSON report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{positive_list, Settings};
use super::output::{fmt_f64, write_csv, write_json, Metadata};
use super::{ExperimentError, Manifest};
use crate::diagnostics::{artifact_experiment, artifact_solver_config, ArtifactReport};
use crate::numerics::{Mat, Rng};
use crate::objectives::{Objective, ObjectiveId};
use crate::qn::{SolverConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactsConfig {
    pub objective: ObjectiveId,
    pub dim: usize,
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub cases: Vec<(Variant, usize)>,
}

impl Default for ArtifactsConfig {
    fn default() -> Self {
        let base = artifact_solver_config(10);
        Self {
            objective: ObjectiveId::Rosenbrock,
            dim: 5,
            memory: base.memory,
            max_iters: base.max_iters,
            grad_tol: base.grad_tol,
            seed: 0,
            cases: vec![(Variant::LbfgsB, 3), (Variant::DenseBfgs, 3), (Variant::DenseBfgs, 10)],
        }
    }
}

impl ArtifactsConfig {
    /// Explicit restarts or variants replace the default case list with
    /// their cross product.
    pub fn from_settings(s: &Settings) -> Result<Self, ExperimentError> {
        let d = Self::default();
        let objective = match s.objectives()? {
            None => d.objective,
            Some(v) if v.len() == 1 => v[0],
            Some(_) => return Err(ExperimentError::Config("artifacts take a single objective".into())),
        };
        if !objective.has_hessian() {
            return Err(ExperimentError::Config(format!("{objective} has no analytic Hessian")));
        }
        let dim = match s.dims() {
            None => d.dim,
            Some(v) if v.len() == 1 && v[0] > 0 => v[0],
            Some(_) => return Err(ExperimentError::Config("artifacts take a single positive dim".into())),
        };
        let variants = s.variants()?;
        let restarts = s.restart_list().map(|r| positive_list(r, "restarts")).transpose()?;
        let cases = if variants.is_none() && restarts.is_none() {
            d.cases
        } else {
            let vs = variants.unwrap_or_else(|| vec![Variant::LbfgsB, Variant::DenseBfgs]);
            let bs = restarts.unwrap_or_else(|| vec![3]);
            vs.iter().flat_map(|&v| bs.iter().map(move |&b| (v, b))).collect()
        };
        Ok(Self {
            objective,
            dim,
            memory: s.memory.unwrap_or(d.memory),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            grad_tol: s.grad_tol.unwrap_or(d.grad_tol),
            seed: s.seed(),
            cases,
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..artifact_solver_config(self.memory)
        }
    }

    pub fn instance(&self) -> Objective {
        if self.objective == ObjectiveId::Rosenbrock {
            Objective::rosenbrock(self.dim)
        } else {
            Objective::bbob(self.objective, self.dim, &mut Rng::new(self.seed).split(0))
        }
    }
}

pub fn case_id(variant: Variant, b: usize) -> String {
    format!("{variant}_B{b}")
}

pub fn write_matrix(path: &Path, meta: &Metadata, m: &Mat) -> std::io::Result<()> {
    let names: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect())
        .collect();
    write_csv(path, meta, &cols, &rows)
}

/// Runs every case, writing `<out>/<case>/{h_true,h_seq,h_cbe}.csv` and
/// `report.json`. Failed cases are recorded in the manifest.
pub fn run_artifacts(
    cfg: &ArtifactsConfig,
    out: &Path,
) -> Result<(Vec<ArtifactReport>, Manifest), ExperimentError> {
    if cfg.cases.is_empty() {
        return Err(ExperimentError::Config("no artifact cases".into()));
    }
    let meta = Metadata::new("artifacts", cfg, cfg.seed);
    let obj = cfg.instance();
    let solver = cfg.solver();
    solver.validate()?;
    let mut manifest = Manifest::new("artifacts");
    let mut reports = Vec::new();
    for &(variant, b) in &cfg.cases {
        let id = case_id(variant, b);
        let result = artifact_experiment(&obj, b, &solver, variant, cfg.seed)
            .map_err(ExperimentError::from)
            .and_then(|report| {
                let dir = out.join(&id);
                let mut outputs = Vec::new();
                for (name, m) in [("h_true", &report.h_true), ("h_seq", &report.h_seq), ("h_cbe", &report.h_cbe)] {
                    let p = dir.join(format!("{name}.csv"));
                    write_matrix(&p, &meta, m)?;
                    outputs.push(p.display().to_string());
                }
                let p = dir.join("report.json");
                write_json(&p, &meta, &report)?;
                outputs.push(p.display().to_string());
                Ok((report, outputs))
            });
        match result {
            Ok((report, outputs)) => {
                manifest.ok(id, outputs);
                reports.push(report);
            }
            Err(e) => manifest.fail(id, e),
        }
    }
    manifest.write(&out.join("manifest.json"), &meta)?;
    Ok((reports, manifest))
}
