//! Off-diagonal artifacts of the coupled solver: approximate inverse
//! Hessians compared against the true block-diagonal one.

use serde::Serialize;
use thiserror::Error;

use crate::mso::{run_cbe, run_seq, MsoConfig, MsoError, NegatedObjective};
use crate::numerics::{frobenius_norm, Mat, Rng};
use crate::objectives::{true_block_inverse_hessian, Objective, ObjectiveError};
use crate::qn::{Bounds, SolverConfig, SolverError, Variant};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("reference matrix has zero norm")]
    ZeroReference,
    #[error("matrix has zero norm")]
    ZeroMatrix,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Mso(#[from] MsoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// `‖h − h_true‖_F / ‖h_true‖_F`
pub fn e_rel(h: &Mat, h_true: &Mat) -> Result<f64, DiagnosticsError> {
    if h.rows() != h_true.rows() || h.cols() != h_true.cols() {
        return Err(DiagnosticsError::Shape(format!(
            "{}x{} vs {}x{}",
            h.rows(),
            h.cols(),
            h_true.rows(),
            h_true.cols()
        )));
    }
    let denom = frobenius_norm(h_true);
    if denom == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    Ok(frobenius_norm(&h.sub(h_true)) / denom)
}

/// Frobenius mass of the off-diagonal `D×D` blocks relative to the whole.
pub fn offdiag_block_ratio(h: &Mat, b: usize, d: usize) -> Result<f64, DiagnosticsError> {
    if h.rows() != b * d || h.cols() != b * d {
        return Err(DiagnosticsError::Shape(format!(
            "expected {0}x{0}, got {1}x{2}",
            b * d,
            h.rows(),
            h.cols()
        )));
    }
    let total = frobenius_norm(h);
    if total == 0.0 {
        return Err(DiagnosticsError::ZeroMatrix);
    }
    let mut off = 0.0;
    for i in 0..b * d {
        for j in 0..b * d {
            if i / d != j / d {
                off += h[(i, j)] * h[(i, j)];
            }
        }
    }
    Ok(off.sqrt() / total)
}

/// Places `blocks` on the diagonal of a zero matrix.
pub fn block_diagonal(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(Mat::rows).sum();
    let mut out = Mat::zeros(n, n);
    let mut at = 0;
    for blk in blocks {
        for i in 0..blk.rows() {
            for j in 0..blk.cols() {
                out[(at + i, at + j)] = blk[(i, j)];
            }
        }
        at += blk.rows();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactReport {
    pub objective: String,
    pub variant: Variant,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub memory: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub e_rel_seq: f64,
    pub e_rel_cbe: f64,
    pub offdiag_ratio_seq: f64,
    pub offdiag_ratio_cbe: f64,
    pub iterations_seq: Vec<usize>,
    pub iterations_cbe: usize,
    #[serde(skip)]
    pub h_true: Mat,
    #[serde(skip)]
    pub h_seq: Mat,
    #[serde(skip)]
    pub h_cbe: Mat,
}

/// Solver settings used when the caller has no preference: run until the
/// projected gradient is below 1e-8 or 500 iterations.
pub fn artifact_solver_config(memory: usize) -> SolverConfig {
    SolverConfig {
        memory,
        max_iters: 500,
        grad_tol: 1e-8,
        ftol: 0.0,
        ..SolverConfig::default()
    }
}

pub fn artifact_starts(obj: &Objective, b: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    (0..b)
        .map(|_| rng.uniform_in_box(&obj.lower, &obj.upper))
        .collect()
}

/// Runs sequential restarts and the coupled solver from the same seeded
/// starts and compares their inverse-Hessian approximations with the true
/// block-diagonal inverse Hessian at the sequential final points.
pub fn artifact_experiment(
    obj: &Objective,
    b: usize,
    cfg: &SolverConfig,
    variant: Variant,
    seed: u64,
) -> Result<ArtifactReport, DiagnosticsError> {
    let d = obj.dim();
    let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone())?;
    let starts = artifact_starts(obj, b, seed);
    let acq = NegatedObjective::new(obj.clone());
    let mso = MsoConfig {
        solver: *cfg,
        variant,
        record_iterates: false,
    };
    let seq = run_seq(&acq, &starts, &bounds, &mso)?;
    let cbe = run_cbe(&acq, &starts, &bounds, &mso)?;

    let h_seq = block_diagonal(
        &seq.solvers
            .iter()
            .map(|s| s.approx_inverse_hessian())
            .collect::<Vec<_>>(),
    );
    let h_cbe = cbe.solvers[0].approx_inverse_hessian();
    let finals: Vec<f64> = seq.per_restart.iter().flat_map(|r| r.x_final.clone()).collect();
    let h_true = true_block_inverse_hessian(obj, &finals)?;

    Ok(ArtifactReport {
        objective: obj.id.name().to_string(),
        variant,
        b,
        d,
        memory: cfg.memory,
        seed,
        grad_tol: cfg.grad_tol,
        max_iters: cfg.max_iters,
        e_rel_seq: e_rel(&h_seq, &h_true)?,
        e_rel_cbe: e_rel(&h_cbe, &h_true)?,
        offdiag_ratio_seq: offdiag_block_ratio(&h_seq, b, d)?,
        offdiag_ratio_cbe: offdiag_block_ratio(&h_cbe, b, d)?,
        iterations_seq: seq.iteration_counts(),
        iterations_cbe: cbe.solvers[0].iterations(),
        h_true,
        h_seq,
        h_cbe,
    })
}
