//! Benchmark objectives with analytic derivatives.
//!
//! Rosenbrock drives the solver diagnostics on `[0, 3]^D`. The BBOB-style
//! functions are simplified rotation-free forms on `[-5, 5]^D` with a seeded
//! optimum shift; they reproduce the qualitative landscape (separable bowl,
//! multimodal grid, asymmetric sector, plateaus) rather than exact COCO
//! instances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{LinalgError, Mat, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("{0} is not differentiable; gradient/Hessian unavailable")]
    UnsupportedDerivative(ObjectiveId),
    #[error("point has {got} coordinates, objective expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Hessian of block {block} is singular")]
    SingularHessian { block: usize },
    #[error("invalid objective description: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveId {
    Rosenbrock,
    Sphere,
    Rastrigin,
    AttractiveSector,
    StepEllipsoidal,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 5] = [
        ObjectiveId::Rosenbrock,
        ObjectiveId::Sphere,
        ObjectiveId::Rastrigin,
        ObjectiveId::AttractiveSector,
        ObjectiveId::StepEllipsoidal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::Rosenbrock => "rosenbrock",
            ObjectiveId::Sphere => "sphere",
            ObjectiveId::Rastrigin => "rastrigin",
            ObjectiveId::AttractiveSector => "attractive-sector",
            ObjectiveId::StepEllipsoidal => "step-ellipsoidal",
        }
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, ObjectiveId::StepEllipsoidal)
    }

    /// Whether an analytic Hessian is available everywhere it is needed.
    pub fn has_hessian(self) -> bool {
        self.is_differentiable()
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveId {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "rosenbrock" => Ok(ObjectiveId::Rosenbrock),
            "sphere" => Ok(ObjectiveId::Sphere),
            "rastrigin" => Ok(ObjectiveId::Rastrigin),
            "attractive-sector" | "as" => Ok(ObjectiveId::AttractiveSector),
            "step-ellipsoidal" | "se" => Ok(ObjectiveId::StepEllipsoidal),
            _ => Err(ObjectiveError::Invalid(format!("unknown objective '{s}'"))),
        }
    }
}

/// BBOB search domain half-width.
pub const BBOB_HALF_WIDTH: f64 = 5.0;
/// Shifts are drawn from this fraction of the domain around its centre.
pub const SHIFT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub id: ObjectiveId,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub shift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<Mat>,
}

impl Objective {
    pub fn new(
        id: ObjectiveId,
        lower: Vec<f64>,
        upper: Vec<f64>,
        shift: Option<Vec<f64>>,
    ) -> Result<Self, ObjectiveError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(ObjectiveError::Invalid("bounds length mismatch".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(ObjectiveError::Invalid("lower < upper violated".into()));
        }
        if let Some(s) = &shift {
            if s.len() != lower.len() {
                return Err(ObjectiveError::Invalid("shift length mismatch".into()));
            }
            if s.iter()
                .zip(lower.iter().zip(&upper))
                .any(|(v, (l, u))| !(l < v && v < u))
            {
                return Err(ObjectiveError::Invalid("shift outside bounds".into()));
            }
        }
        Ok(Self {
            id,
            lower,
            upper,
            shift,
        })
    }

    /// Rosenbrock on `[0, 3]^dim`.
    pub fn rosenbrock(dim: usize) -> Self {
        Self::new(
            ObjectiveId::Rosenbrock,
            vec![0.0; dim],
            vec![3.0; dim],
            None,
        )
        .expect("static bounds are valid")
    }

    /// BBOB-style objective on `[-5, 5]^dim` without shift.
    pub fn bbob_unshifted(id: ObjectiveId, dim: usize) -> Self {
        Self::new(
            id,
            vec![-BBOB_HALF_WIDTH; dim],
            vec![BBOB_HALF_WIDTH; dim],
            None,
        )
        .expect("static bounds are valid")
    }

    /// BBOB-style objective on `[-5, 5]^dim` with a shift drawn from the
    /// central part of the domain. Rosenbrock keeps its `[0, 3]` box.
    pub fn bbob(id: ObjectiveId, dim: usize, rng: &mut Rng) -> Self {
        if id == ObjectiveId::Rosenbrock {
            return Self::rosenbrock(dim);
        }
        let half = BBOB_HALF_WIDTH * SHIFT_FRACTION;
        let shift: Vec<f64> = (0..dim).map(|_| rng.uniform(-half, half)).collect();
        Self::new(
            id,
            vec![-BBOB_HALF_WIDTH; dim],
            vec![BBOB_HALF_WIDTH; dim],
            Some(shift),
        )
        .expect("shift drawn inside bounds")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn shift_at(&self, i: usize) -> f64 {
        self.shift.as_ref().map_or(0.0, |s| s[i])
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        Ok(self.evaluate(x, false, false)?.value)
    }

    pub fn evaluate(
        &self,
        x: &[f64],
        want_grad: bool,
        want_hess: bool,
    ) -> Result<EvalOutput, ObjectiveError> {
        let d = self.dim();
        if x.len() != d {
            return Err(ObjectiveError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if (want_grad || want_hess) && !self.id.is_differentiable() {
            return Err(ObjectiveError::UnsupportedDerivative(self.id));
        }
        let mut grad = want_grad.then(|| vec![0.0; d]);
        let mut hess = want_hess.then(|| Mat::zeros(d, d));
        let value = match self.id {
            ObjectiveId::Rosenbrock => {
                let mut v = 0.0;
                for i in 0..d.saturating_sub(1) {
                    let t = x[i + 1] - x[i] * x[i];
                    let u = 1.0 - x[i];
                    v += 100.0 * t * t + u * u;
                    if let Some(g) = grad.as_mut() {
                        g[i] += -400.0 * x[i] * t - 2.0 * u;
                        g[i + 1] += 200.0 * t;
                    }
                    if let Some(h) = hess.as_mut() {
                        h[(i, i)] += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
                        h[(i, i + 1)] += -400.0 * x[i];
                        h[(i + 1, i)] += -400.0 * x[i];
                        h[(i + 1, i + 1)] += 200.0;
                    }
                }
                v
            }
            ObjectiveId::Sphere => {
                let mut v = 0.0;
                for i in 0..d {
                    let z = x[i] - self.shift_at(i);
                    v += z * z;
                    if let Some(g) = grad.as_mut() {
                        g[i] = 2.0 * z;
                    }
                    if let Some(h) = hess.as_mut() {
                        h[(i, i)] = 2.0;
                    }
                }
                v
            }
            ObjectiveId::Rastrigin => {
                let mut v = 10.0 * d as f64;
                for i in 0..d {
                    let z = x[i] - self.shift_at(i);
                    let w = 2.0 * PI * z;
                    v += z * z - 10.0 * w.cos();
                    if let Some(g) = grad.as_mut() {
                        g[i] = 2.0 * z + 20.0 * PI * w.sin();
                    }
                    if let Some(h) = hess.as_mut() {
                        h[(i, i)] = 2.0 + 40.0 * PI * PI * w.cos();
                    }
                }
                v
            }
            ObjectiveId::AttractiveSector => {
                let mut v = 0.0;
                for i in 0..d {
                    let s = self.shift_at(i);
                    let z = x[i] - s;
                    let w = if z * s > 0.0 { 100.0 } else { 1.0 };
                    v += (w * z) * (w * z);
                    if let Some(g) = grad.as_mut() {
                        g[i] = 2.0 * w * w * z;
                    }
                    if let Some(h) = hess.as_mut() {
                        h[(i, i)] = 2.0 * w * w;
                    }
                }
                v
            }
            ObjectiveId::StepEllipsoidal => {
                let z0 = x[0] - self.shift_at(0);
                let mut acc = 0.0;
                for i in 0..d {
                    let u = x[i] - self.shift_at(i);
                    let zt = if u.abs() > 0.5 {
                        (0.5 + u).floor()
                    } else {
                        (0.5 + 10.0 * u).floor() / 10.0
                    };
                    let expo = if d > 1 {
                        2.0 * i as f64 / (d - 1) as f64
                    } else {
                        0.0
                    };
                    acc += 10f64.powf(expo) * zt * zt;
                }
                0.1 * (z0.abs() / 1e4).max(acc)
            }
        };
        Ok(EvalOutput {
            value,
            gradient: grad,
            hessian: hess,
        })
    }
}

fn blocks(obj: &Objective, stacked: &[f64]) -> Result<usize, ObjectiveError> {
    let d = obj.dim();
    if stacked.len() % d != 0 || stacked.is_empty() {
        return Err(ObjectiveError::DimensionMismatch {
            expected: d,
            got: stacked.len(),
        });
    }
    Ok(stacked.len() / d)
}

/// Summed objective over `B` stacked `D`-vectors; the gradient is the
/// concatenation of the per-block gradients.
pub fn sum_objective(
    obj: &Objective,
    stacked: &[f64],
    want_grad: bool,
) -> Result<EvalOutput, ObjectiveError> {
    let d = obj.dim();
    let b = blocks(obj, stacked)?;
    let mut grad = want_grad.then(|| Vec::with_capacity(b * d));
    let mut value = 0.0;
    for (k, x) in stacked.chunks_exact(d).enumerate() {
        let out = obj.evaluate(x, want_grad, false)?;
        value = if k == 0 { out.value } else { value + out.value };
        if let (Some(g), Some(gb)) = (grad.as_mut(), out.gradient) {
            g.extend_from_slice(&gb);
        }
    }
    Ok(EvalOutput {
        value,
        gradient: grad,
        hessian: None,
    })
}

/// Block-diagonal `BD×BD` matrix whose blocks are the inverse Hessians at each
/// stacked point. Off-diagonal blocks are exactly zero.
pub fn true_block_inverse_hessian(obj: &Objective, stacked: &[f64]) -> Result<Mat, ObjectiveError> {
    let d = obj.dim();
    let b = blocks(obj, stacked)?;
    let mut out = Mat::zeros(b * d, b * d);
    for (k, x) in stacked.chunks_exact(d).enumerate() {
        let h = obj
            .evaluate(x, false, true)?
            .hessian
            .expect("hessian requested");
        let inv = h.inverse().map_err(|e| match e {
            LinalgError::SingularMatrix { .. } => ObjectiveError::SingularHessian { block: k },
            other => ObjectiveError::Invalid(other.to_string()),
        })?;
        for i in 0..d {
            for j in 0..d {
                out[(k * d + i, k * d + j)] = inv[(i, j)];
            }
        }
    }
    Ok(out)
}
