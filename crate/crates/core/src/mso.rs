//! Multi-start drivers: sequential restarts, one coupled solver over the
//! stacked summed objective (C-BE), and independent solvers whose pending
//! requests are served by one batched call per round (D-BE).
//!
//! Objectives are *maximized* here. Each solver minimizes the negation.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::Objective;
use crate::par::Exec;
use crate::qn::{
    projected_grad_norm, Bounds, Request, Solver, SolverConfig, SolverError, TerminationReason,
    Variant,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MsoError {
    #[error("no start points given")]
    NoStarts,
    #[error("start {index} has {got} coordinates, expected {expected}")]
    StartDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("batch objective returned {got} results for {expected} points")]
    BatchLength { expected: usize, got: usize },
    #[error("every restart failed")]
    AllRestartsFailed,
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Value and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Evaluates a list of points in one call. Results come back in input order.
pub trait BatchObjective {
    fn dim(&self) -> usize;
    fn evaluate(&self, points: &[Vec<f64>]) -> Vec<Evaluation>;
}

impl<T: BatchObjective + ?Sized> BatchObjective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, points: &[Vec<f64>]) -> Vec<Evaluation> {
        (**self).evaluate(points)
    }
}

/// Batch objective built from a point-wise closure.
pub struct Pointwise<F> {
    dim: usize,
    f: F,
    exec: Exec,
}

impl<F> Pointwise<F>
where
    F: Fn(&[f64]) -> Evaluation + Sync + Send,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            exec: Exec::Sequential,
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

impl<F> BatchObjective for Pointwise<F>
where
    F: Fn(&[f64]) -> Evaluation + Sync + Send,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, points: &[Vec<f64>]) -> Vec<Evaluation> {
        self.exec.map(points, |x| (self.f)(x))
    }
}

/// A benchmark objective to be minimized, exposed under the maximization
/// convention as `−f`.
#[derive(Debug, Clone)]
pub struct NegatedObjective {
    objective: Objective,
    exec: Exec,
}

impl NegatedObjective {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            exec: Exec::Sequential,
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }
}

impl BatchObjective for NegatedObjective {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn evaluate(&self, points: &[Vec<f64>]) -> Vec<Evaluation> {
        self.exec.map(points, |x| match self.objective.evaluate(x, true, false) {
            Ok(out) => Evaluation {
                value: -out.value,
                gradient: out
                    .gradient
                    .map(|g| g.into_iter().map(|v| -v).collect())
                    .unwrap_or_else(|| vec![f64::NAN; x.len()]),
            },
            Err(_) => Evaluation {
                value: f64::NAN,
                gradient: vec![f64::NAN; x.len()],
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Seq,
    Cbe,
    Dbe,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Seq, Scheme::Cbe, Scheme::Dbe];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Seq => "seq",
            Scheme::Cbe => "cbe",
            Scheme::Dbe => "dbe",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seq" => Ok(Scheme::Seq),
            "cbe" | "c-be" => Ok(Scheme::Cbe),
            "dbe" | "d-be" => Ok(Scheme::Dbe),
            other => Err(format!("unknown scheme '{other}' (expected seq, cbe or dbe)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsoConfig {
    pub solver: SolverConfig,
    pub variant: Variant,
    /// Keep every accepted iterate in the run records.
    pub record_iterates: bool,
}

impl From<SolverConfig> for MsoConfig {
    fn from(solver: SolverConfig) -> Self {
        Self {
            solver,
            variant: Variant::LbfgsB,
            record_iterates: false,
        }
    }
}

/// Per-restart trace. Entry 0 is the start point, entry `t` the `t`-th
/// accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub restart: usize,
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Cumulative evaluation count (of this restart) at each entry.
    pub evals: Vec<usize>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub reason: TerminationReason,
    pub failed: bool,
    pub x_final: Vec<f64>,
    pub f_final: f64,
}

impl RunRecord {
    fn new(restart: usize, record_iterates: bool) -> Self {
        Self {
            restart,
            values: Vec::new(),
            grad_norms: Vec::new(),
            evals: Vec::new(),
            iterates: record_iterates.then(Vec::new),
            iterations: 0,
            reason: TerminationReason::LineSearchFailed,
            failed: false,
            x_final: Vec::new(),
            f_final: f64::NAN,
        }
    }

    fn observe(&mut self, x: &[f64], value: f64, grad_norm: f64, evals: usize) {
        self.values.push(value);
        self.grad_norms.push(grad_norm);
        self.evals.push(evals);
        if let Some(it) = &mut self.iterates {
            it.push(x.to_vec());
        }
    }
}

#[derive(Debug, Clone)]
pub struct MsoOutcome {
    pub scheme: Scheme,
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub per_restart: Vec<RunRecord>,
    pub total_evals: usize,
    pub total_batches: usize,
    /// Number of points in each batch call, in call order.
    pub batch_sizes: Vec<usize>,
    pub wall_clock: f64,
    /// Seconds spent inside the batch objective.
    pub eval_seconds: f64,
    /// Final solver states: one per restart, or the single stacked solver
    /// for C-BE.
    pub solvers: Vec<Solver>,
}

impl MsoOutcome {
    pub fn iteration_counts(&self) -> Vec<usize> {
        self.per_restart.iter().map(|r| r.iterations).collect()
    }
}

struct Meter {
    evals: usize,
    batches: usize,
    sizes: Vec<usize>,
    seconds: f64,
}

impl Meter {
    fn new() -> Self {
        Self {
            evals: 0,
            batches: 0,
            sizes: Vec::new(),
            seconds: 0.0,
        }
    }

    fn call<A: BatchObjective + ?Sized>(
        &mut self,
        acq: &A,
        points: &[Vec<f64>],
    ) -> Result<Vec<Evaluation>, MsoError> {
        let t = Instant::now();
        let out = acq.evaluate(points);
        self.seconds += t.elapsed().as_secs_f64();
        if out.len() != points.len() {
            return Err(MsoError::BatchLength {
                expected: points.len(),
                got: out.len(),
            });
        }
        self.evals += points.len();
        self.batches += 1;
        self.sizes.push(points.len());
        Ok(out)
    }
}

fn check_starts(starts: &[Vec<f64>], bounds: &Bounds) -> Result<(), MsoError> {
    if starts.is_empty() {
        return Err(MsoError::NoStarts);
    }
    for (index, s) in starts.iter().enumerate() {
        if s.len() != bounds.dim() {
            return Err(MsoError::StartDimension {
                index,
                expected: bounds.dim(),
                got: s.len(),
            });
        }
    }
    Ok(())
}

fn negate(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Independent restart: solver plus its record.
struct Restart {
    solver: Solver,
    record: RunRecord,
    pending: Option<Vec<f64>>,
}

impl Restart {
    fn start(b: usize, x0: &[f64], bounds: &Bounds, cfg: &MsoConfig) -> Result<Self, MsoError> {
        let (solver, req) = Solver::new(x0, bounds, cfg.solver, cfg.variant)?;
        Ok(Self {
            solver,
            record: RunRecord::new(b, cfg.record_iterates),
            pending: req.point().map(<[f64]>::to_vec),
        })
    }

    /// Feeds one evaluation. Returns `true` while the restart still needs
    /// points.
    fn feed(&mut self, ev: &Evaluation) -> bool {
        let point = self.pending.take().expect("fed a restart with no pending point");
        let iters_before = self.solver.iterations();
        let initial = self.solver.evaluations() == 0;
        let result = self.solver.step(-ev.value, &negate(&ev.gradient));
        let accepted = ev.value.is_finite()
            && (initial || self.solver.iterations() > iters_before);
        if accepted {
            self.record.observe(
                &point,
                ev.value,
                self.solver.projected_grad_norm(),
                self.solver.evaluations(),
            );
        }
        match result {
            Ok(Request::Evaluate(x)) => {
                self.pending = Some(x);
                true
            }
            Ok(Request::Finished(fin)) => {
                self.finish(fin.reason, false);
                false
            }
            Err(_) => {
                self.finish(TerminationReason::LineSearchFailed, true);
                false
            }
        }
    }

    fn finish(&mut self, reason: TerminationReason, failed: bool) {
        let r = &mut self.record;
        r.reason = reason;
        r.failed = failed;
        r.iterations = self.solver.iterations();
        r.x_final = self.solver.x().to_vec();
        r.f_final = r.values.last().copied().unwrap_or(f64::NAN);
    }
}

fn best_of(records: &[RunRecord]) -> Result<(Vec<f64>, f64), MsoError> {
    let mut best: Option<&RunRecord> = None;
    for r in records {
        if !r.f_final.is_finite() {
            continue;
        }
        // Strict comparison keeps the lowest index on ties.
        if best.is_none_or(|b| r.f_final > b.f_final) {
            best = Some(r);
        }
    }
    best.map(|r| (r.x_final.clone(), r.f_final))
        .ok_or(MsoError::AllRestartsFailed)
}

#[allow(clippy::too_many_arguments)]
fn outcome(
    scheme: Scheme,
    records: Vec<RunRecord>,
    meter: Meter,
    started: Instant,
    solvers: Vec<Solver>,
) -> Result<MsoOutcome, MsoError> {
    let (x_best, f_best) = best_of(&records)?;
    Ok(MsoOutcome {
        scheme,
        x_best,
        f_best,
        per_restart: records,
        total_evals: meter.evals,
        total_batches: meter.batches,
        batch_sizes: meter.sizes,
        wall_clock: started.elapsed().as_secs_f64(),
        eval_seconds: meter.seconds,
        solvers,
    })
}

/// Restarts one after another, one point per batch call.
pub fn run_seq<A: BatchObjective + ?Sized>(
    acq: &A,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    cfg: &MsoConfig,
) -> Result<MsoOutcome, MsoError> {
    check_starts(starts, bounds)?;
    let started = Instant::now();
    let mut meter = Meter::new();
    let mut records = Vec::with_capacity(starts.len());
    let mut solvers = Vec::with_capacity(starts.len());
    for (b, x0) in starts.iter().enumerate() {
        let mut r = Restart::start(b, x0, bounds, cfg)?;
        while let Some(p) = r.pending.clone() {
            let ev = meter.call(acq, std::slice::from_ref(&p))?;
            r.feed(&ev[0]);
        }
        records.push(r.record);
        solvers.push(r.solver);
    }
    outcome(Scheme::Seq, records, meter, started, solvers)
}

/// Independent solvers; every round issues one batch call holding the
/// pending point of each active restart. Finished restarts leave the
/// active set.
pub fn run_dbe<A: BatchObjective + ?Sized>(
    acq: &A,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    cfg: &MsoConfig,
) -> Result<MsoOutcome, MsoError> {
    check_starts(starts, bounds)?;
    let started = Instant::now();
    let mut meter = Meter::new();
    let mut restarts = starts
        .iter()
        .enumerate()
        .map(|(b, x0)| Restart::start(b, x0, bounds, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut active: Vec<usize> = (0..restarts.len()).collect();
    while !active.is_empty() {
        let points: Vec<Vec<f64>> = active
            .iter()
            .map(|&b| restarts[b].pending.clone().expect("active restart without request"))
            .collect();
        let evs = meter.call(acq, &points)?;
        let mut still = Vec::with_capacity(active.len());
        for (&b, ev) in active.iter().zip(&evs) {
            if restarts[b].feed(ev) {
                still.push(b);
            }
        }
        active = still;
    }
    let (records, solvers) = restarts.into_iter().map(|r| (r.record, r.solver)).unzip();
    outcome(Scheme::Dbe, records, meter, started, solvers)
}

/// One solver over the stacked `B·D`-dimensional problem maximizing
/// `Σ_b α(x⁽ᵇ⁾)`. Every evaluation is one batch call of `B` points.
pub fn run_cbe<A: BatchObjective + ?Sized>(
    acq: &A,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    cfg: &MsoConfig,
) -> Result<MsoOutcome, MsoError> {
    check_starts(starts, bounds)?;
    let started = Instant::now();
    let nb = starts.len();
    let d = bounds.dim();
    let stacked_bounds = bounds.stacked(nb);
    let x0: Vec<f64> = starts.concat();
    let mut meter = Meter::new();
    let mut records: Vec<RunRecord> = (0..nb)
        .map(|b| RunRecord::new(b, cfg.record_iterates))
        .collect();
    let (mut solver, mut req) = Solver::new(&x0, &stacked_bounds, cfg.solver, cfg.variant)?;
    let mut failed = false;

    let finish = loop {
        let point = match req {
            Request::Evaluate(x) => x,
            Request::Finished(fin) => break fin.reason,
        };
        let blocks: Vec<Vec<f64>> = point.chunks(d).map(<[f64]>::to_vec).collect();
        let evs = meter.call(acq, &blocks)?;
        let mut total = evs[0].value;
        for ev in &evs[1..] {
            total += ev.value;
        }
        let grad: Vec<f64> = evs.iter().flat_map(|ev| ev.gradient.iter().map(|g| -g)).collect();

        let iters_before = solver.iterations();
        let initial = solver.evaluations() == 0;
        let result = solver.step(-total, &grad);
        if total.is_finite() && (initial || solver.iterations() > iters_before) {
            for (b, ev) in evs.iter().enumerate() {
                let xb = &point[b * d..(b + 1) * d];
                let gb = &grad[b * d..(b + 1) * d];
                let gn = projected_grad_norm(xb, gb, bounds);
                records[b].observe(xb, ev.value, gn, solver.evaluations());
            }
        }
        req = match result {
            Ok(r) => r,
            Err(_) => {
                failed = true;
                break TerminationReason::LineSearchFailed;
            }
        };
    };

    let x = solver.x();
    for (b, r) in records.iter_mut().enumerate() {
        r.reason = finish;
        r.failed = failed;
        r.iterations = solver.iterations();
        r.x_final = x[b * d..(b + 1) * d].to_vec();
        r.f_final = r.values.last().copied().unwrap_or(f64::NAN);
    }
    outcome(Scheme::Cbe, records, meter, started, vec![solver])
}

pub fn run<A: BatchObjective + ?Sized>(
    scheme: Scheme,
    acq: &A,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    cfg: &MsoConfig,
) -> Result<MsoOutcome, MsoError> {
    match scheme {
        Scheme::Seq => run_seq(acq, starts, bounds, cfg),
        Scheme::Cbe => run_cbe(acq, starts, bounds, cfg),
        Scheme::Dbe => run_dbe(acq, starts, bounds, cfg),
    }
}

/// Mean over restarts of the recorded value at each iteration; shorter
/// traces are padded with their last value.
pub fn mean_objective_trace(records: &[RunRecord]) -> Result<Vec<f64>, MsoError> {
    if records.is_empty() || records.iter().any(|r| r.values.is_empty()) {
        return Err(MsoError::EmptyInput);
    }
    let len = records.iter().map(|r| r.values.len()).max().unwrap_or(0);
    let n = records.len() as f64;
    Ok((0..len)
        .map(|t| {
            records
                .iter()
                .map(|r| *r.values.get(t).unwrap_or_else(|| r.values.last().unwrap()))
                .sum::<f64>()
                / n
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn concave(center: Vec<f64>) -> impl Fn(&[f64]) -> Evaluation + Sync + Send {
        move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&center).map(|(a, c)| a - c).collect();
            Evaluation {
                value: -d.iter().map(|v| v * v).sum::<f64>(),
                gradient: d.iter().map(|v| -2.0 * v).collect(),
            }
        }
    }

    fn starts(rng: &mut Rng, b: usize, bounds: &Bounds) -> Vec<Vec<f64>> {
        (0..b)
            .map(|_| rng.uniform_in_box(bounds.lower(), bounds.upper()))
            .collect()
    }

    fn record(values: &[f64]) -> RunRecord {
        let mut r = RunRecord::new(0, false);
        for v in values {
            r.observe(&[], *v, 0.0, 0);
        }
        r
    }

    #[test]
    fn trace_mean_and_padding() {
        assert_eq!(mean_objective_trace(&[record(&[1.0, 2.0])]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            mean_objective_trace(&[record(&[2.0, 2.0]), record(&[4.0, 4.0])]).unwrap(),
            vec![3.0, 3.0]
        );
        let t = mean_objective_trace(&[record(&[1.0, 1.0, 1.0]), record(&[3.0; 5])]).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t[4], 2.0);
        assert_eq!(mean_objective_trace(&[]), Err(MsoError::EmptyInput));
    }

    #[test]
    fn concave_quadratic_all_restarts_agree() {
        let bounds = Bounds::uniform(3, -2.0, 2.0).unwrap();
        let acq = Pointwise::new(3, concave(vec![0.3, -0.7, 1.1]));
        let mut rng = Rng::new(11);
        let s = starts(&mut rng, 5, &bounds);
        let cfg = MsoConfig::from(SolverConfig {
            grad_tol: 1e-9,
            ..SolverConfig::default()
        });
        for scheme in Scheme::ALL {
            let out = run(scheme, &acq, &s, &bounds, &cfg).unwrap();
            for r in &out.per_restart {
                for (a, c) in r.x_final.iter().zip([0.3, -0.7, 1.1]) {
                    assert!((a - c).abs() < 1e-6, "{scheme}: {:?}", r.x_final);
                }
                assert!(out.f_best >= r.f_final - 1e-12);
            }
        }
    }

    #[test]
    fn single_restart_schemes_coincide() {
        let obj = Objective::rosenbrock(4);
        let acq = NegatedObjective::new(obj.clone());
        let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone()).unwrap();
        let s = vec![vec![2.1, 0.4, 1.3, 2.9]];
        let cfg = MsoConfig::from(SolverConfig::default());
        let a = run_seq(&acq, &s, &bounds, &cfg).unwrap();
        let b = run_cbe(&acq, &s, &bounds, &cfg).unwrap();
        let c = run_dbe(&acq, &s, &bounds, &cfg).unwrap();
        assert_eq!(a.per_restart, b.per_restart);
        assert_eq!(a.per_restart, c.per_restart);
        assert_eq!(a.total_evals, b.total_evals);
    }

    #[test]
    fn dbe_matches_seq_and_batches() {
        let obj = Objective::rosenbrock(5);
        let acq = NegatedObjective::new(obj.clone());
        let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone()).unwrap();
        let mut rng = Rng::new(3);
        let s = starts(&mut rng, 6, &bounds);
        let cfg = MsoConfig::from(SolverConfig::default());
        let seq = run_seq(&acq, &s, &bounds, &cfg).unwrap();
        let dbe = run_dbe(&acq, &s, &bounds, &cfg).unwrap();
        assert_eq!(seq.per_restart, dbe.per_restart);
        assert_eq!(seq.total_evals, dbe.total_evals);
        assert!(dbe.total_batches < dbe.total_evals);
        let longest = dbe.per_restart.iter().map(|r| *r.evals.last().unwrap()).max().unwrap();
        assert!(dbe.total_batches <= longest);
        assert!(dbe.batch_sizes.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn cbe_batches_stay_full() {
        let obj = Objective::rosenbrock(3);
        let acq = NegatedObjective::new(obj.clone());
        let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone()).unwrap();
        let mut rng = Rng::new(5);
        let s = starts(&mut rng, 4, &bounds);
        let out = run_cbe(&acq, &s, &bounds, &MsoConfig::from(SolverConfig::default())).unwrap();
        assert!(out.batch_sizes.iter().all(|&n| n == 4));
        assert_eq!(out.total_evals, 4 * out.total_batches);
    }

    #[test]
    fn failed_restart_is_recorded_not_fatal() {
        let bounds = Bounds::uniform(1, -1.0, 1.0).unwrap();
        let acq = Pointwise::new(1, |x: &[f64]| {
            if x[0] > 0.5 {
                Evaluation {
                    value: f64::NAN,
                    gradient: vec![f64::NAN],
                }
            } else {
                Evaluation {
                    value: -(x[0] + 0.5).powi(2),
                    gradient: vec![-2.0 * (x[0] + 0.5)],
                }
            }
        });
        let s = vec![vec![0.9], vec![0.0]];
        for scheme in [Scheme::Seq, Scheme::Dbe] {
            let out = run(scheme, &acq, &s, &bounds, &MsoConfig::from(SolverConfig::default())).unwrap();
            assert!(out.per_restart[0].failed);
            assert!((out.x_best[0] + 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let bounds = Bounds::uniform(1, -1.0, 1.0).unwrap();
        let acq = Pointwise::new(1, concave(vec![0.0]));
        let s = vec![vec![0.0], vec![0.0]];
        let out = run_dbe(&acq, &s, &bounds, &MsoConfig::from(SolverConfig::default())).unwrap();
        assert_eq!(out.f_best, 0.0);
        assert_eq!(out.per_restart.len(), 2);
    }
}
