//! Gaussian-process regression with an ARD Matérn-5/2 kernel.
//!
//! Inputs are normalized to the unit cube and outputs standardized before
//! fitting. Posterior and acquisition methods take unit-cube points;
//! [`LogEiAcquisition`] wraps a model as a batch objective over original
//! coordinates.

pub mod logei;

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mso::{BatchObjective, Evaluation};
use crate::numerics::{cholesky_with_jitter, solve_triangular_multi, LinalgError, Mat, Rng};
use crate::qn::{minimize, Bounds, SolverConfig, Variant};
use logei::log_expected_improvement;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower bound on the noise variance.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Lower bound on the posterior variance.
pub const VAR_FLOOR: f64 = 1e-16;

/// `(lower, upper)` for log-lengthscale, log signal variance, log noise.
pub const LOG_LENGTHSCALE_RANGE: (f64, f64) = (-3.0 * LN_10, LN_10);
pub const LOG_SIGNAL_RANGE: (f64, f64) = (-3.0 * LN_10, 3.0 * LN_10);
pub const LOG_NOISE_RANGE: (f64, f64) = (-8.0 * LN_10, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("need at least {needed} training points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("training targets have zero variance")]
    DegenerateData,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite training data")]
    NonFinite,
    #[error("hyperparameter fit failed: {0}")]
    FitFailed(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
            noise_variance,
        }
    }

    /// `[log ℓ_1, …, log ℓ_D, log σ², log noise]`
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.max(NOISE_FLOOR).ln());
        v
    }

    pub fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|l| l.exp()).collect(),
            signal_variance: v[d].exp(),
            noise_variance: v[d + 1].exp().max(NOISE_FLOOR),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// Scaled distance `‖(x − z)/ℓ‖₂`.
fn scaled_distance(x: &[f64], z: &[f64], ls: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .zip(ls)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

fn matern_from_r(r: f64, signal: f64) -> f64 {
    let s = SQRT5 * r;
    signal * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `σ²(5/3)(1 + √5r)e^{−√5r}`; the common factor of all kernel derivatives.
fn matern_deriv_factor(r: f64, signal: f64) -> f64 {
    let s = SQRT5 * r;
    signal * (5.0 / 3.0) * (1.0 + s) * (-s).exp()
}

/// Matérn-5/2 kernel with per-dimension lengthscales.
pub fn kernel(x: &[f64], z: &[f64], p: &KernelParams) -> f64 {
    matern_from_r(scaled_distance(x, z, &p.lengthscales), p.signal_variance)
}

fn kernel_matrix(x: &[Vec<f64>], p: &KernelParams) -> Mat {
    let n = x.len();
    let mut k = Mat::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = p.signal_variance + p.noise_variance;
        for j in 0..i {
            let v = kernel(&x[i], &x[j], p);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood and its gradient with respect to
/// [`KernelParams::to_log`] coordinates.
pub fn log_marginal_likelihood(
    x: &[Vec<f64>],
    y: &[f64],
    p: &KernelParams,
) -> Result<(f64, Vec<f64>), GpError> {
    let n = x.len();
    let d = p.dim();
    let k = kernel_matrix(x, p);
    let (l, _) = cholesky_with_jitter(&k)?;
    let mut alpha = y.to_vec();
    solve_triangular_multi(&l, &mut alpha, 1, false)?;
    solve_triangular_multi(&l, &mut alpha, 1, true)?;
    let logdet_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let mll = -0.5 * fit - logdet_half - 0.5 * n as f64 * LN_2PI;

    // K⁻¹ from the factor, then W = ααᵀ − K⁻¹.
    let mut kinv = Mat::identity(n).into_vec();
    solve_triangular_multi(&l, &mut kinv, n, false)?;
    solve_triangular_multi(&l, &mut kinv, n, true)?;
    let w = |i: usize, j: usize| alpha[i] * alpha[j] - kinv[i * n + j];

    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        grad[d] += 0.5 * w(i, i) * p.signal_variance;
        grad[d + 1] += 0.5 * w(i, i) * p.noise_variance;
        for j in 0..i {
            let r = scaled_distance(&x[i], &x[j], &p.lengthscales);
            let wij = w(i, j);
            // Off-diagonal pairs appear twice in the trace.
            grad[d] += wij * matern_from_r(r, p.signal_variance);
            let f = matern_deriv_factor(r, p.signal_variance);
            for (dd, g) in grad[..d].iter_mut().enumerate() {
                let t = (x[i][dd] - x[j][dd]) / p.lengthscales[dd];
                *g += wij * f * t * t;
            }
        }
    }
    Ok((mll, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: 50,
            seed: 0,
        }
    }
}

/// Posterior moments and their gradients for a batch of unit-cube points.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBatch {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub dmean: Vec<Vec<f64>>,
    pub dvar: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcqBatchResult {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    params: KernelParams,
    chol: Mat,
    dual: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    jitter: f64,
}

fn standardize(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl GpModel {
    fn check(x: &[Vec<f64>], y: &[f64], lower: &[f64]) -> Result<(), GpError> {
        if x.len() != y.len() {
            return Err(GpError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(row) = x.iter().find(|r| r.len() != lower.len()) {
            return Err(GpError::DimensionMismatch {
                expected: lower.len(),
                got: row.len(),
            });
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        Ok(())
    }

    fn unit(lower: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    /// Builds a model with fixed hyperparameters. Targets are standardized
    /// (a single point or constant targets keep unit scale).
    pub fn from_params(
        x: &[Vec<f64>],
        y: &[f64],
        lower: &[f64],
        upper: &[f64],
        params: KernelParams,
    ) -> Result<Self, GpError> {
        Self::check(x, y, lower)?;
        if params.dim() != lower.len() {
            return Err(GpError::DimensionMismatch {
                expected: lower.len(),
                got: params.dim(),
            });
        }
        let (mean, std) = if y.is_empty() { (0.0, 1.0) } else { standardize(y) };
        let std = if std > 0.0 { std } else { 1.0 };
        let xu: Vec<Vec<f64>> = x.iter().map(|r| Self::unit(lower, upper, r)).collect();
        let ys: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();
        Self::assemble(xu, ys, params, lower.to_vec(), upper.to_vec(), mean, std)
    }

    fn assemble(
        x_train: Vec<Vec<f64>>,
        y_train: Vec<f64>,
        params: KernelParams,
        lower: Vec<f64>,
        upper: Vec<f64>,
        y_mean: f64,
        y_std: f64,
    ) -> Result<Self, GpError> {
        let k = kernel_matrix(&x_train, &params);
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let mut dual = y_train.clone();
        solve_triangular_multi(&chol, &mut dual, 1, false)?;
        solve_triangular_multi(&chol, &mut dual, 1, true)?;
        Ok(Self {
            x_train,
            y_train,
            params,
            chol,
            dual,
            lower,
            upper,
            y_mean,
            y_std,
            jitter,
        })
    }

    /// Model with no data: zero standardized mean, unit signal variance.
    pub fn prior(lower: &[f64], upper: &[f64], y_mean: f64) -> Self {
        let params = KernelParams::isotropic(lower.len(), 0.5, 1.0, 1e-6);
        Self::assemble(
            Vec::new(),
            Vec::new(),
            params,
            lower.to_vec(),
            upper.to_vec(),
            y_mean,
            1.0,
        )
        .expect("empty system always factors")
    }

    /// Fits hyperparameters by maximizing the log marginal likelihood from
    /// `opts.restarts` starts (the first is a fixed default, the rest are
    /// seeded draws in the log box).
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        lower: &[f64],
        upper: &[f64],
        opts: &FitOptions,
    ) -> Result<Self, GpError> {
        Self::check(x, y, lower)?;
        if x.len() < 2 {
            return Err(GpError::InsufficientData {
                needed: 2,
                got: x.len(),
            });
        }
        let (mean, std) = standardize(y);
        if !(std > f64::EPSILON * mean.abs().max(1.0)) {
            return Err(GpError::DegenerateData);
        }
        let d = lower.len();
        let xu: Vec<Vec<f64>> = x.iter().map(|r| Self::unit(lower, upper, r)).collect();
        let ys: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();

        let mut lo = vec![LOG_LENGTHSCALE_RANGE.0; d];
        let mut hi = vec![LOG_LENGTHSCALE_RANGE.1; d];
        lo.extend([LOG_SIGNAL_RANGE.0, LOG_NOISE_RANGE.0]);
        hi.extend([LOG_SIGNAL_RANGE.1, LOG_NOISE_RANGE.1]);
        let bounds = Bounds::new(lo.clone(), hi.clone()).expect("static hyperparameter box");
        let cfg = SolverConfig {
            max_iters: opts.max_iters,
            grad_tol: 1e-5,
            ..SolverConfig::default()
        };
        let mut rng = Rng::new(opts.seed);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for r in 0..opts.restarts.max(1) {
            let x0 = if r == 0 {
                KernelParams::isotropic(d, 0.5, 1.0, 1e-4).to_log()
            } else {
                rng.uniform_in_box(&lo, &hi)
            };
            let neg_mll = |theta: &[f64]| match log_marginal_likelihood(
                &xu,
                &ys,
                &KernelParams::from_log(theta),
            ) {
                Ok((v, g)) => (-v, g.into_iter().map(|t| -t).collect()),
                Err(_) => (f64::NAN, vec![f64::NAN; theta.len()]),
            };
            let (_, fin) = minimize(neg_mll, &x0, &bounds, cfg, Variant::LbfgsB)
                .map_err(|e| GpError::FitFailed(e.to_string()))?;
            if fin.f.is_finite() && best.as_ref().is_none_or(|(f, _)| fin.f < *f) {
                best = Some((fin.f, fin.x));
            }
        }
        let (_, theta) = best.ok_or_else(|| GpError::FitFailed("no finite likelihood".into()))?;
        Self::assemble(
            xu,
            ys,
            KernelParams::from_log(&theta),
            lower.to_vec(),
            upper.to_vec(),
            mean,
            std,
        )
    }

    pub fn n(&self) -> usize {
        self.x_train.len()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn chol(&self) -> &Mat {
        &self.chol
    }

    pub fn dual(&self) -> &[f64] {
        &self.dual
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.x_train
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.y_train
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        Self::unit(&self.lower, &self.upper, x)
    }

    pub fn standardize_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    /// Log marginal likelihood of the cached system.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n();
        let fit: f64 = self.y_train.iter().zip(&self.dual).map(|(a, b)| a * b).sum();
        let logdet_half: f64 = (0..n).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * fit - logdet_half - 0.5 * n as f64 * LN_2PI
    }

    /// Cross-kernel `k(X_i, q_c)` laid out `n×B` row-major.
    fn cross_kernel(&self, xq: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (n, b) = (self.n(), xq.len());
        let mut kq = vec![0.0; n * b];
        let mut rq = vec![0.0; n * b];
        for (i, xi) in self.x_train.iter().enumerate() {
            for (c, q) in xq.iter().enumerate() {
                let r = scaled_distance(q, xi, &self.params.lengthscales);
                rq[i * b + c] = r;
                kq[i * b + c] = matern_from_r(r, self.params.signal_variance);
            }
        }
        (kq, rq)
    }

    fn moments(&self, kq: &[f64], b: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut mean = vec![0.0; b];
        for i in 0..n {
            for c in 0..b {
                mean[c] += kq[i * b + c] * self.dual[i];
            }
        }
        let mut v = kq.to_vec();
        solve_triangular_multi(&self.chol, &mut v, b, false).expect("factor is nonsingular");
        let mut var = vec![self.params.signal_variance; b];
        for i in 0..n {
            for c in 0..b {
                var[c] -= v[i * b + c] * v[i * b + c];
            }
        }
        for s in var.iter_mut() {
            *s = s.max(VAR_FLOOR);
        }
        (mean, var, v)
    }

    /// Posterior mean and variance in original units at original-coordinate
    /// points.
    pub fn predict(&self, x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let unit: Vec<Vec<f64>> = x.iter().map(|p| self.to_unit(p)).collect();
        let (mean, var) = self.posterior(&unit);
        (
            mean.iter().map(|m| self.y_mean + self.y_std * m).collect(),
            var.iter().map(|v| v * self.y_std * self.y_std).collect(),
        )
    }

    /// Posterior mean and variance (standardized units) at unit-cube points.
    pub fn posterior(&self, xq: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (kq, _) = self.cross_kernel(xq);
        let (mean, var, _) = self.moments(&kq, xq.len());
        (mean, var)
    }

    pub fn posterior_with_grad(&self, xq: &[Vec<f64>]) -> PosteriorBatch {
        let (n, b, d) = (self.n(), xq.len(), self.dim());
        let (kq, rq) = self.cross_kernel(xq);
        let (mean, var, mut w) = self.moments(&kq, b);
        // w = K⁻¹ k(X, q)
        solve_triangular_multi(&self.chol, &mut w, b, true).expect("factor is nonsingular");
        let mut dmean = vec![vec![0.0; d]; b];
        let mut dvar = vec![vec![0.0; d]; b];
        let ls2: Vec<f64> = self.params.lengthscales.iter().map(|l| l * l).collect();
        for i in 0..n {
            let xi = &self.x_train[i];
            for c in 0..b {
                let f = -matern_deriv_factor(rq[i * b + c], self.params.signal_variance);
                let (a, wv) = (self.dual[i], w[i * b + c]);
                let q = &xq[c];
                for dd in 0..d {
                    let dk = f * (q[dd] - xi[dd]) / ls2[dd];
                    dmean[c][dd] += dk * a;
                    dvar[c][dd] -= 2.0 * dk * wv;
                }
            }
        }
        for c in 0..b {
            if var[c] <= VAR_FLOOR {
                dvar[c].iter_mut().for_each(|g| *g = 0.0);
            }
        }
        PosteriorBatch {
            mean,
            var,
            dmean,
            dvar,
        }
    }

    /// Log expected improvement below `f_best` (standardized units) and its
    /// unit-cube gradient.
    pub fn log_ei(&self, xq: &[Vec<f64>], f_best: f64) -> AcqBatchResult {
        let post = self.posterior_with_grad(xq);
        let mut values = Vec::with_capacity(xq.len());
        let mut gradients = Vec::with_capacity(xq.len());
        for c in 0..xq.len() {
            let sigma = post.var[c].sqrt();
            let (v, dmu, dsigma) = log_expected_improvement(post.mean[c], sigma, f_best);
            let g = post.dmean[c]
                .iter()
                .zip(&post.dvar[c])
                .map(|(dm, dv)| dmu * dm + dsigma * dv / (2.0 * sigma))
                .collect();
            values.push(v);
            gradients.push(g);
        }
        AcqBatchResult { values, gradients }
    }
}

/// Log-EI as a batch objective over original coordinates (maximized).
#[derive(Debug, Clone, Copy)]
pub struct LogEiAcquisition<'a> {
    model: &'a GpModel,
    f_best: f64,
}

impl<'a> LogEiAcquisition<'a> {
    /// `f_best` is in standardized units.
    pub fn new(model: &'a GpModel, f_best: f64) -> Self {
        Self { model, f_best }
    }
}

impl BatchObjective for LogEiAcquisition<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate(&self, points: &[Vec<f64>]) -> Vec<Evaluation> {
        let unit: Vec<Vec<f64>> = points.iter().map(|p| self.model.to_unit(p)).collect();
        let res = self.model.log_ei(&unit, self.f_best);
        let (lo, hi) = (self.model.lower(), self.model.upper());
        res.values
            .into_iter()
            .zip(res.gradients)
            .map(|(value, g)| Evaluation {
                value,
                gradient: g
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(gi, (l, u))| gi / (u - l))
                    .collect(),
            })
            .collect()
    }
}
