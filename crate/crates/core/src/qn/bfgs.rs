//! Dense BFGS inverse-Hessian approximation.

use crate::numerics::{dot, Mat};

#[derive(Debug, Clone)]
pub(crate) struct DenseInverse {
    h: Mat,
    updated: bool,
}

impl DenseInverse {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            h: Mat::identity(n),
            updated: false,
        }
    }

    pub(crate) fn matrix(&self) -> &Mat {
        &self.h
    }

    pub(crate) fn is_fresh(&self) -> bool {
        !self.updated
    }

    pub(crate) fn reset(&mut self) {
        let n = self.h.rows();
        self.h = Mat::identity(n);
        self.updated = false;
    }

    /// `−H g`
    pub(crate) fn newton_direction(&self, g: &[f64]) -> Vec<f64> {
        self.h.matvec(g).into_iter().map(|v| -v).collect()
    }

    /// Rank-two inverse update `H⁺ = (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
    /// Before the first update `H` is rescaled to `(sᵀy / yᵀy)·I`.
    pub(crate) fn update(&mut self, s: &[f64], y: &[f64]) {
        let n = s.len();
        let sy = dot(s, y);
        if !self.updated {
            let gamma = sy / dot(y, y);
            self.h = Mat::identity(n).scaled(gamma);
            self.updated = true;
        }
        let rho = 1.0 / sy;
        let hy = self.h.matvec(y);
        let yhy = dot(y, &hy);
        let coef = (1.0 + rho * yhy) * rho;
        // H⁺ = H − ρ(H y sᵀ + s yᵀ H) + (ρ + ρ² yᵀHy) s sᵀ
        for i in 0..n {
            for j in 0..n {
                let v = self.h[(i, j)] - rho * (hy[i] * s[j] + s[i] * hy[j]) + coef * s[i] * s[j];
                self.h[(i, j)] = v;
            }
        }
        // Enforce exact symmetry against rounding drift.
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (self.h[(i, j)] + self.h[(j, i)]);
                self.h[(i, j)] = avg;
                self.h[(j, i)] = avg;
            }
        }
    }
}
