//! Bound-constrained quasi-Newton solvers driven by reverse communication.
//!
//! A [`Solver`] never calls the objective. [`Solver::new`] and
//! [`Solver::step`] return a [`Request`]: either a point to evaluate or the
//! final verdict. The caller evaluates the point however it likes (alone, or
//! batched with the pending points of other solvers) and feeds `(f, ∇f)`
//! back through `step`. Every line-search trial is its own request.
//!
//! Solvers minimize; multi-start drivers negate at their boundary.

mod bfgs;
mod lbfgsb;
pub mod line_search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{dot, norm2, Mat};
use bfgs::DenseInverse;
use lbfgsb::{cauchy_point, subspace_minimum, CompactMemory};
use line_search::{LineSearchParams, MoreThuente, SearchStatus};

/// Stored pairs must satisfy `sᵀy > SKIP_THRESHOLD·‖s‖‖y‖`.
pub const SKIP_THRESHOLD: f64 = 1e-12;
/// Interval-width tolerance of the line search.
pub const LINE_SEARCH_XTOL: f64 = 0.1;
const BIG_STEP: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid bounds at dimension {dim}: lower {lower} must be < upper {upper}")]
    InvalidBounds { dim: usize, lower: f64, upper: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective returned a non-finite value or gradient")]
    NonFiniteInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of stored curvature pairs (L-BFGS-B only).
    pub memory: usize,
    /// Cap on accepted iterations.
    pub max_iters: usize,
    /// Sup-norm threshold on the projected gradient.
    pub grad_tol: f64,
    /// Relative function-decrease threshold; 0 disables the test.
    pub ftol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search_trials: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            grad_tol: 1e-5,
            ftol: 2.2e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_trials: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.memory == 0 {
            return Err(SolverError::InvalidConfig("memory must be >= 1".into()));
        }
        if !(self.grad_tol >= 0.0) || !(self.ftol >= 0.0) {
            return Err(SolverError::InvalidConfig(
                "tolerances must be non-negative".into(),
            ));
        }
        if self.max_line_search_trials == 0 {
            return Err(SolverError::InvalidConfig(
                "max_line_search_trials must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Box constraints; infinite entries mean "unbounded on that side".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SolverError> {
        if lower.len() != upper.len() {
            return Err(SolverError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (dim, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) {
                return Err(SolverError::InvalidBounds {
                    dim,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self, SolverError> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*l).min(*u);
        }
    }

    /// Bounds repeated `copies` times, for a stacked problem.
    pub fn stacked(&self, copies: usize) -> Bounds {
        Bounds {
            lower: self.lower.repeat(copies),
            upper: self.upper.repeat(copies),
        }
    }

    fn any_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|v| v.is_finite())
    }

    fn all_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    LbfgsB,
    DenseBfgs,
}

impl std::str::FromStr for Variant {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lbfgsb" | "l-bfgs-b" => Ok(Variant::LbfgsB),
            "bfgs" | "dense-bfgs" => Ok(Variant::DenseBfgs),
            other => Err(SolverError::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::LbfgsB => "lbfgsb",
            Variant::DenseBfgs => "bfgs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    GradTol,
    MaxIters,
    FTol,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finished {
    pub x: Vec<f64>,
    pub f: f64,
    pub reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Evaluate(Vec<f64>),
    Finished(Finished),
}

impl Request {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Request::Evaluate(x) => Some(x),
            Request::Finished(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverWarning {
    /// The start point was outside the box and got projected.
    ClampedStart { dims: Vec<usize> },
    /// A line search failed; the curvature memory was discarded.
    MemoryReset { iteration: usize },
    NonFiniteInput { evaluation: usize },
}

/// Record of one accepted step, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStep {
    pub f_before: f64,
    pub f_after: f64,
    pub step: f64,
    /// Directional derivative at the step origin.
    pub slope: f64,
    pub pair_stored: bool,
}

#[derive(Debug, Clone)]
enum Curvature {
    Limited(CompactMemory),
    Dense(DenseInverse),
}

impl Curvature {
    fn is_empty(&self) -> bool {
        match self {
            Curvature::Limited(m) => m.is_empty(),
            Curvature::Dense(h) => h.is_fresh(),
        }
    }

    fn reset(&mut self) {
        match self {
            Curvature::Limited(m) => m.reset(),
            Curvature::Dense(h) => h.reset(),
        }
    }
}

#[derive(Debug, Clone)]
struct LineSearch {
    d: Vec<f64>,
    /// Point reached at unit step (exact target of the subspace step).
    unit_point: Vec<f64>,
    search: MoreThuente,
    trials: usize,
    slope: f64,
    trial: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Phase {
    AwaitingInitialEval,
    InLineSearch(Box<LineSearch>),
    Done(TerminationReason),
}

/// Complete state of one bound-constrained quasi-Newton run.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SolverConfig,
    variant: Variant,
    bounds: Bounds,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    curvature: Curvature,
    phase: Phase,
    iter_count: usize,
    eval_count: usize,
    warnings: Vec<SolverWarning>,
    last_step: Option<AcceptedStep>,
}

impl Solver {
    /// Creates a solver at `x0` (projected into the box if needed) and asks
    /// for the first evaluation.
    pub fn new(
        x0: &[f64],
        bounds: &Bounds,
        cfg: SolverConfig,
        variant: Variant,
    ) -> Result<(Solver, Request), SolverError> {
        cfg.validate()?;
        if x0.len() != bounds.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: bounds.dim(),
                got: x0.len(),
            });
        }
        let bounds = Bounds::new(bounds.lower.clone(), bounds.upper.clone())?;
        let mut x = x0.to_vec();
        let mut warnings = Vec::new();
        let clamped: Vec<usize> = (0..x.len())
            .filter(|&i| !(bounds.lower[i] <= x[i] && x[i] <= bounds.upper[i]))
            .collect();
        bounds.project(&mut x);
        if !clamped.is_empty() {
            warnings.push(SolverWarning::ClampedStart { dims: clamped });
        }
        let n = x.len();
        let curvature = match variant {
            Variant::LbfgsB => Curvature::Limited(CompactMemory::new(cfg.memory)),
            Variant::DenseBfgs => Curvature::Dense(DenseInverse::new(n)),
        };
        let request = Request::Evaluate(x.clone());
        Ok((
            Solver {
                cfg,
                variant,
                bounds,
                x,
                f: f64::NAN,
                g: vec![0.0; n],
                curvature,
                phase: Phase::AwaitingInitialEval,
                iter_count: 0,
                eval_count: 0,
                warnings,
                last_step: None,
            },
            request,
        ))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Current (last accepted) iterate.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    /// Accepted quasi-Newton iterations so far.
    pub fn iterations(&self) -> usize {
        self.iter_count
    }

    pub fn evaluations(&self) -> usize {
        self.eval_count
    }

    pub fn warnings(&self) -> &[SolverWarning] {
        &self.warnings
    }

    pub fn last_step(&self) -> Option<AcceptedStep> {
        self.last_step
    }

    pub fn termination(&self) -> Option<TerminationReason> {
        match self.phase {
            Phase::Done(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Done(_))
    }

    /// Number of stored curvature pairs (dense BFGS reports 0 or 1 for
    /// fresh / updated).
    pub fn memory_len(&self) -> usize {
        match &self.curvature {
            Curvature::Limited(m) => m.len(),
            Curvature::Dense(h) => usize::from(!h.is_fresh()),
        }
    }

    /// Sup-norm of the projected gradient at the current iterate.
    pub fn projected_grad_norm(&self) -> f64 {
        projected_grad_norm(&self.x, &self.g, &self.bounds)
    }

    /// Dense inverse-Hessian approximation currently held by the solver.
    pub fn approx_inverse_hessian(&self) -> Mat {
        match &self.curvature {
            Curvature::Limited(m) => m.inverse_hessian(self.dim()),
            Curvature::Dense(h) => h.matrix().clone(),
        }
    }

    fn finished(&self) -> Request {
        let reason = self.termination().unwrap_or(TerminationReason::LineSearchFailed);
        Request::Finished(Finished {
            x: self.x.clone(),
            f: self.f,
            reason,
        })
    }

    fn finish(&mut self, reason: TerminationReason) -> Request {
        self.phase = Phase::Done(reason);
        self.finished()
    }

    /// Consumes the evaluation `(f, g)` at the most recently requested point
    /// and returns the next request.
    ///
    /// Non-finite input terminates the run (reason `LineSearchFailed`) and is
    /// reported as `Err(NonFiniteInput)`; later calls keep returning the
    /// final verdict.
    pub fn step(&mut self, f: f64, g: &[f64]) -> Result<Request, SolverError> {
        if g.len() != self.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: self.dim(),
                got: g.len(),
            });
        }
        let phase = std::mem::replace(&mut self.phase, Phase::AwaitingInitialEval);
        match phase {
            Phase::Done(r) => {
                self.phase = Phase::Done(r);
                Ok(self.finished())
            }
            Phase::AwaitingInitialEval => {
                self.eval_count += 1;
                if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    self.warnings.push(SolverWarning::NonFiniteInput {
                        evaluation: self.eval_count,
                    });
                    self.f = f;
                    self.finish(TerminationReason::LineSearchFailed);
                    return Err(SolverError::NonFiniteInput);
                }
                self.f = f;
                self.g.copy_from_slice(g);
                if self.projected_grad_norm() <= self.cfg.grad_tol {
                    return Ok(self.finish(TerminationReason::GradTol));
                }
                if self.cfg.max_iters == 0 {
                    return Ok(self.finish(TerminationReason::MaxIters));
                }
                Ok(self.begin_iteration())
            }
            Phase::InLineSearch(mut ls) => {
                self.eval_count += 1;
                if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    self.warnings.push(SolverWarning::NonFiniteInput {
                        evaluation: self.eval_count,
                    });
                    self.finish(TerminationReason::LineSearchFailed);
                    return Err(SolverError::NonFiniteInput);
                }
                ls.trials += 1;
                let gd = dot(g, &ls.d);
                match ls.search.next(f, gd) {
                    SearchStatus::Evaluate(stp) => {
                        if ls.trials >= self.cfg.max_line_search_trials {
                            return Ok(self.line_search_failed());
                        }
                        ls.trial = self.trial_point(&ls.d, &ls.unit_point, stp);
                        let req = Request::Evaluate(ls.trial.clone());
                        self.phase = Phase::InLineSearch(ls);
                        Ok(req)
                    }
                    SearchStatus::Converged => Ok(self.accept(*ls, f, g)),
                    SearchStatus::Warning(_) => {
                        if ls.search.armijo_holds(f) && ls.search.stp() > 0.0 {
                            Ok(self.accept(*ls, f, g))
                        } else {
                            Ok(self.line_search_failed())
                        }
                    }
                }
            }
        }
    }

    fn trial_point(&self, d: &[f64], unit_point: &[f64], stp: f64) -> Vec<f64> {
        let mut t = if stp == 1.0 {
            unit_point.to_vec()
        } else {
            self.x.iter().zip(d).map(|(x, d)| x + stp * d).collect()
        };
        self.bounds.project(&mut t);
        t
    }

    fn accept(&mut self, ls: LineSearch, f: f64, g: &[f64]) -> Request {
        let f_before = self.f;
        let s: Vec<f64> = ls.trial.iter().zip(&self.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&self.g).map(|(a, b)| a - b).collect();
        self.x = ls.trial;
        self.f = f;
        self.g.copy_from_slice(g);
        self.iter_count += 1;

        let sy = dot(&s, &y);
        let store = sy > SKIP_THRESHOLD * norm2(&s) * norm2(&y);
        if store {
            match &mut self.curvature {
                Curvature::Limited(m) => {
                    if !m.push(s, y) {
                        self.warnings.push(SolverWarning::MemoryReset {
                            iteration: self.iter_count,
                        });
                    }
                }
                Curvature::Dense(h) => h.update(&s, &y),
            }
        }
        self.last_step = Some(AcceptedStep {
            f_before,
            f_after: f,
            step: ls.search.stp(),
            slope: ls.slope,
            pair_stored: store,
        });

        if self.projected_grad_norm() <= self.cfg.grad_tol {
            return self.finish(TerminationReason::GradTol);
        }
        let scale = f_before.abs().max(f.abs()).max(1.0);
        if f_before - f <= self.cfg.ftol * scale {
            return self.finish(TerminationReason::FTol);
        }
        if self.iter_count >= self.cfg.max_iters {
            return self.finish(TerminationReason::MaxIters);
        }
        self.begin_iteration()
    }

    /// Restores the last accepted iterate (never overwritten during the
    /// search) and either restarts with empty memory or gives up.
    fn line_search_failed(&mut self) -> Request {
        if self.curvature.is_empty() {
            return self.finish(TerminationReason::LineSearchFailed);
        }
        self.curvature.reset();
        self.warnings.push(SolverWarning::MemoryReset {
            iteration: self.iter_count,
        });
        self.begin_iteration()
    }

    fn begin_iteration(&mut self) -> Request {
        let (d, unit_point, stpmax, stp0) = match &self.curvature {
            Curvature::Limited(mem) => self.lbfgsb_direction(mem),
            Curvature::Dense(h) => self.bfgs_direction(h),
        };
        let slope = dot(&self.g, &d);
        if !(slope < 0.0) || !slope.is_finite() || !(stpmax > 0.0) {
            return self.line_search_failed();
        }
        let params = LineSearchParams {
            ftol: self.cfg.c1,
            gtol: self.cfg.c2,
            xtol: LINE_SEARCH_XTOL,
        };
        let stp0 = stp0.min(stpmax);
        let search = match MoreThuente::start(self.f, slope, stp0, params, 0.0, stpmax) {
            Ok(s) => s,
            Err(_) => return self.line_search_failed(),
        };
        let trial = self.trial_point(&d, &unit_point, stp0);
        let req = Request::Evaluate(trial.clone());
        self.phase = Phase::InLineSearch(Box::new(LineSearch {
            d,
            unit_point,
            search,
            trials: 0,
            slope,
            trial,
        }));
        req
    }

    /// Returns `(d, x̄, stpmax, initial step)`.
    fn lbfgsb_direction(&self, mem: &CompactMemory) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let (lower, upper) = (self.bounds.lower(), self.bounds.upper());
        let constrained = self.bounds.any_finite();
        let xbar = if !constrained && !mem.is_empty() {
            // Unconstrained with curvature information: plain L-BFGS step.
            let cp = lbfgsb::CauchyPoint {
                xcp: self.x.clone(),
                c: vec![0.0; 2 * mem.len()],
                free: vec![true; self.dim()],
            };
            subspace_minimum(&self.x, &self.g, lower, upper, &cp, mem)
        } else {
            let cp = cauchy_point(&self.x, &self.g, lower, upper, mem);
            subspace_minimum(&self.x, &self.g, lower, upper, &cp, mem)
        };
        let d: Vec<f64> = xbar.iter().zip(&self.x).map(|(a, b)| a - b).collect();
        let first = self.iter_count == 0;
        let stpmax = if !constrained {
            BIG_STEP
        } else if first {
            1.0
        } else {
            max_feasible_step(&self.x, &d, lower, upper)
        };
        let stp0 = if first && !self.bounds.all_finite() {
            (1.0 / norm2(&d)).min(stpmax)
        } else {
            1.0
        };
        (d, xbar, stpmax, stp0)
    }

    fn bfgs_direction(&self, h: &DenseInverse) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let (lower, upper) = (self.bounds.lower(), self.bounds.upper());
        let n = self.dim();
        // Variables held at a bound by the gradient stay fixed; the rest
        // move along −H_FF g_F. A free variable whose step would leave the
        // box joins the fixed set.
        let mut fixed: Vec<bool> = (0..n)
            .map(|i| {
                (self.x[i] <= lower[i] && self.g[i] > 0.0) || (self.x[i] >= upper[i] && self.g[i] < 0.0)
            })
            .collect();
        let mut d = vec![0.0; n];
        for _ in 0..=n {
            let gf: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { self.g[i] }).collect();
            d = h.newton_direction(&gf);
            for i in 0..n {
                if fixed[i] {
                    d[i] = 0.0;
                }
            }
            let leaving: Vec<usize> = (0..n)
                .filter(|&i| (self.x[i] <= lower[i] && d[i] < 0.0) || (self.x[i] >= upper[i] && d[i] > 0.0))
                .collect();
            if leaving.is_empty() {
                break;
            }
            leaving.into_iter().for_each(|i| fixed[i] = true);
        }
        freeze_active(&self.x, &mut d, lower, upper);
        if !(dot(&d, &self.g) < 0.0) {
            d = self.g.iter().map(|v| -v).collect();
            freeze_active(&self.x, &mut d, lower, upper);
        }
        let stpmax = max_feasible_step(&self.x, &d, lower, upper);
        let stp0 = if self.iter_count == 0 {
            1.0 / norm2(&d)
        } else {
            1.0
        };
        let unit: Vec<f64> = self.x.iter().zip(&d).map(|(x, d)| x + d).collect();
        (d, unit, stpmax, stp0.min(stpmax))
    }
}

/// Zeroes direction components that would leave the box from an active bound.
fn freeze_active(x: &[f64], d: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        if (x[i] <= lower[i] && d[i] < 0.0) || (x[i] >= upper[i] && d[i] > 0.0) {
            d[i] = 0.0;
        }
    }
}

/// Largest step along `d` that stays inside the box, capped at 1e10.
fn max_feasible_step(x: &[f64], d: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut stpmx = BIG_STEP;
    for i in 0..x.len() {
        let a1 = d[i];
        if a1 < 0.0 && lower[i].is_finite() {
            let a2 = lower[i] - x[i];
            if a2 >= 0.0 {
                stpmx = 0.0;
            } else if a1 * stpmx < a2 {
                stpmx = a2 / a1;
            }
        } else if a1 > 0.0 && upper[i].is_finite() {
            let a2 = upper[i] - x[i];
            if a2 <= 0.0 {
                stpmx = 0.0;
            } else if a1 * stpmx > a2 {
                stpmx = a2 / a1;
            }
        }
    }
    stpmx
}

/// Sup-norm of the gradient projected onto the box.
pub fn projected_grad_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let gi = if g[i] < 0.0 {
            (x[i] - bounds.upper[i]).max(g[i])
        } else {
            (x[i] - bounds.lower[i]).min(g[i])
        };
        norm = norm.max(gi.abs());
    }
    norm
}

/// Runs a solver to completion against a point-wise objective. Convenience
/// for callers that do not batch.
pub fn minimize<F>(
    mut fg: F,
    x0: &[f64],
    bounds: &Bounds,
    cfg: SolverConfig,
    variant: Variant,
) -> Result<(Solver, Finished), SolverError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut solver, mut req) = Solver::new(x0, bounds, cfg, variant)?;
    loop {
        match req {
            Request::Evaluate(x) => {
                let (f, g) = fg(&x);
                req = match solver.step(f, &g) {
                    Ok(r) => r,
                    Err(SolverError::NonFiniteInput) => solver.finished(),
                    Err(e) => return Err(e),
                };
            }
            Request::Finished(fin) => return Ok((solver, fin)),
        }
    }
}
