//! Bayesian optimization: fit a GP, maximize log-EI with one of the
//! multi-start schemes, evaluate, repeat.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::median;
use crate::gp::{FitOptions, GpError, GpModel, LogEiAcquisition};
use crate::mso::{run, MsoConfig, MsoError, Scheme};
use crate::numerics::{norm_inf, sub, Rng};
use crate::objectives::{Objective, ObjectiveError, ObjectiveId};
use crate::qn::{Bounds, SolverConfig, SolverError, Variant};

/// Two points closer than this (sup-norm) count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BoError {
    #[error("invalid BO configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mso(#[from] MsoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub objective: ObjectiveId,
    pub dim: usize,
    pub n_trials: usize,
    pub n_init: usize,
    pub restarts: usize,
    pub scheme: Scheme,
    pub solver: SolverConfig,
    pub fit_restarts: usize,
    pub fit_max_iters: usize,
    pub seed: u64,
}

impl BoConfig {
    pub fn new(objective: ObjectiveId, dim: usize, scheme: Scheme, seed: u64) -> Self {
        Self {
            objective,
            dim,
            n_trials: 60,
            n_init: 10,
            restarts: 10,
            scheme,
            solver: SolverConfig {
                memory: 10,
                max_iters: 200,
                grad_tol: 1e-2,
                ..SolverConfig::default()
            },
            fit_restarts: 4,
            fit_max_iters: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BoError> {
        if self.dim == 0 {
            return Err(BoError::Config("dim must be >= 1".into()));
        }
        if self.n_init < 2 {
            return Err(BoError::Config("n_init must be >= 2".into()));
        }
        if self.n_trials < self.n_init {
            return Err(BoError::Config("n_trials must be >= n_init".into()));
        }
        if self.restarts == 0 {
            return Err(BoError::Config("restarts must be >= 1".into()));
        }
        self.solver.validate()?;
        Ok(())
    }

    /// The objective instance (shift included) this config runs on.
    pub fn instance(&self) -> Objective {
        let mut rng = Rng::new(self.seed).split(0);
        Objective::bbob(self.objective, self.dim, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialKind {
    /// Initial design point.
    Random,
    /// Chosen by maximizing log-EI.
    Acquisition,
    /// GP fit failed; a random point was used instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub kind: TrialKind,
    pub x: Vec<f64>,
    pub value: f64,
    pub best_value: f64,
    /// Accepted iterations of each restart (empty for non-acquisition trials).
    pub iterations: Vec<usize>,
    pub acq_value: Option<f64>,
    pub acq_evals: usize,
    pub acq_batches: usize,
    pub fit_seconds: Option<f64>,
    pub acq_seconds: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub config: BoConfig,
    pub shift: Option<Vec<f64>>,
    pub trials: Vec<TrialRecord>,
    pub best_value: f64,
    pub runtime: f64,
    pub fit_seconds: f64,
    pub acq_seconds: f64,
    /// Median accepted iterations over acquisition trials × restarts.
    pub median_iters: f64,
}

impl BoTrace {
    pub fn chosen_points(&self) -> Vec<&[f64]> {
        self.trials.iter().map(|t| t.x.as_slice()).collect()
    }
}

fn is_duplicate(x: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter().any(|s| norm_inf(&sub(x, s)) < DUPLICATE_TOL)
}

pub fn run_bo(cfg: &BoConfig) -> Result<BoTrace, BoError> {
    cfg.validate()?;
    let started = Instant::now();
    let obj = cfg.instance();
    let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone())?;
    let root = Rng::new(cfg.seed);
    let mut init_rng = root.split(1);
    let mut start_rng = root.split(2);
    let mut spare_rng = root.split(3);
    let mso = MsoConfig {
        solver: cfg.solver,
        variant: Variant::LbfgsB,
        record_iterates: false,
    };

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_trials);
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.n_trials);
    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut best = f64::INFINITY;
    let (mut fit_total, mut acq_total) = (0.0, 0.0);
    let mut all_iters: Vec<f64> = Vec::new();

    for t in 0..cfg.n_trials {
        let mut rec = TrialRecord {
            trial: t,
            kind: TrialKind::Random,
            x: Vec::new(),
            value: f64::NAN,
            best_value: f64::NAN,
            iterations: Vec::new(),
            acq_value: None,
            acq_evals: 0,
            acq_batches: 0,
            fit_seconds: None,
            acq_seconds: None,
            notes: Vec::new(),
        };
        let x = if t < cfg.n_init {
            init_rng.uniform_in_box(&obj.lower, &obj.upper)
        } else {
            let fit_start = Instant::now();
            let opts = FitOptions {
                restarts: cfg.fit_restarts,
                max_iters: cfg.fit_max_iters,
                seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(t as u64),
            };
            let model = match GpModel::fit(&xs, &ys, &obj.lower, &obj.upper, &opts) {
                Ok(m) => Ok(m),
                Err(GpError::DegenerateData) => {
                    rec.notes.push("degenerate targets: prior-only model".into());
                    Ok(GpModel::prior(&obj.lower, &obj.upper, ys[0]))
                }
                Err(e) => Err(e),
            };
            let fit_s = fit_start.elapsed().as_secs_f64();
            rec.fit_seconds = Some(fit_s);
            fit_total += fit_s;
            // Drawn before the branch so every scheme consumes the same stream.
            let starts: Vec<Vec<f64>> = (0..cfg.restarts)
                .map(|_| start_rng.uniform_in_box(&obj.lower, &obj.upper))
                .collect();
            match model {
                Ok(model) => {
                    let f_best = ys
                        .iter()
                        .map(|&y| model.standardize_y(y))
                        .fold(f64::INFINITY, f64::min);
                    let acq = LogEiAcquisition::new(&model, f_best);
                    let acq_start = Instant::now();
                    let out = run(cfg.scheme, &acq, &starts, &bounds, &mso)?;
                    let acq_s = acq_start.elapsed().as_secs_f64();
                    rec.acq_seconds = Some(acq_s);
                    acq_total += acq_s;
                    rec.kind = TrialKind::Acquisition;
                    rec.iterations = out.iteration_counts();
                    all_iters.extend(rec.iterations.iter().map(|&v| v as f64));
                    rec.acq_value = Some(out.f_best);
                    rec.acq_evals = out.total_evals;
                    rec.acq_batches = out.total_batches;
                    out.x_best
                }
                Err(e) => {
                    rec.kind = TrialKind::Fallback;
                    rec.notes.push(format!("GP fit failed: {e}"));
                    spare_rng.uniform_in_box(&obj.lower, &obj.upper)
                }
            }
        };
        let x = if is_duplicate(&x, &xs) {
            rec.notes.push("duplicate point re-drawn".into());
            spare_rng.uniform_in_box(&obj.lower, &obj.upper)
        } else {
            x
        };
        let y = obj.value(&x)?;
        best = best.min(y);
        rec.x = x.clone();
        rec.value = y;
        rec.best_value = best;
        xs.push(x);
        ys.push(y);
        trials.push(rec);
    }

    Ok(BoTrace {
        config: cfg.clone(),
        shift: obj.shift.clone(),
        trials,
        best_value: best,
        runtime: started.elapsed().as_secs_f64(),
        fit_seconds: fit_total,
        acq_seconds: acq_total,
        median_iters: median(&all_iters),
    })
}

/// Best of `n_trials` uniform draws on the same instance.
pub fn random_search(cfg: &BoConfig) -> Result<f64, BoError> {
    let obj = cfg.instance();
    let mut rng = Rng::new(cfg.seed).split(4);
    let mut best = f64::INFINITY;
    for _ in 0..cfg.n_trials {
        best = best.min(obj.value(&rng.uniform_in_box(&obj.lower, &obj.upper))?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub objective: ObjectiveId,
    pub dim: usize,
    pub method: Scheme,
    pub best_value: f64,
    pub runtime: f64,
    pub acq_runtime: f64,
    pub iters: f64,
    pub runs: usize,
}

/// Per (objective, dim, scheme) medians over runs, in first-seen order.
pub fn summarize(traces: &[BoTrace]) -> Vec<SummaryRow> {
    let mut keys: Vec<(ObjectiveId, usize, Scheme)> = Vec::new();
    for t in traces {
        let k = (t.config.objective, t.config.dim, t.config.scheme);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(objective, dim, method)| {
            let group: Vec<&BoTrace> = traces
                .iter()
                .filter(|t| (t.config.objective, t.config.dim, t.config.scheme) == (objective, dim, method))
                .collect();
            let col = |f: fn(&BoTrace) -> f64| median(&group.iter().map(|t| f(t)).collect::<Vec<_>>());
            SummaryRow {
                objective,
                dim,
                method,
                best_value: col(|t| t.best_value),
                runtime: col(|t| t.runtime),
                acq_runtime: col(|t| t.acq_seconds),
                iters: col(|t| t.median_iters),
                runs: group.len(),
            }
        })
        .collect()
}
