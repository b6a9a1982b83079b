//! Moré–Thuente line search in reverse-communication form.
//!
//! The search never evaluates anything itself: the caller feeds `(φ(α), φ'(α))`
//! at the step returned by the previous call, and the search answers with the
//! next trial step or a verdict. Acceptance is the strong Wolfe pair
//! `φ(α) ≤ φ(0) + c1·α·φ'(0)` and `|φ'(α)| ≤ c2·|φ'(0)|`.

use thiserror::Error;

const XTRAPL: f64 = 1.1;
const XTRAPU: f64 = 4.0;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LineSearchError {
    #[error("initial step {stp} outside [{stpmin}, {stpmax}]")]
    StepOutOfRange { stp: f64, stpmin: f64, stpmax: f64 },
    #[error("initial directional derivative {0} is not negative")]
    NotDescent(f64),
    #[error("invalid line-search parameters")]
    InvalidParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchWarning {
    RoundingErrors,
    XtolSatisfied,
    StepAtMax,
    StepAtMin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchStatus {
    /// Evaluate φ and φ' at this step next.
    Evaluate(f64),
    /// The current step satisfies the strong Wolfe conditions.
    Converged,
    /// The search cannot make further progress; the current step is the
    /// last trial.
    Warning(SearchWarning),
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams {
    pub ftol: f64,
    pub gtol: f64,
    pub xtol: f64,
}

#[derive(Debug, Clone)]
pub struct MoreThuente {
    p: LineSearchParams,
    stpmin: f64,
    stpmax: f64,
    stp: f64,
    brackt: bool,
    stage: u8,
    finit: f64,
    ginit: f64,
    gtest: f64,
    width: f64,
    width1: f64,
    stx: f64,
    fx: f64,
    gx: f64,
    sty: f64,
    fy: f64,
    gy: f64,
    stmin: f64,
    stmax: f64,
}

impl MoreThuente {
    /// Starts a search from `φ(0) = f0`, `φ'(0) = g0` with first trial `stp`.
    pub fn start(
        f0: f64,
        g0: f64,
        stp: f64,
        p: LineSearchParams,
        stpmin: f64,
        stpmax: f64,
    ) -> Result<Self, LineSearchError> {
        if stp < stpmin || stp > stpmax || !stp.is_finite() {
            return Err(LineSearchError::StepOutOfRange {
                stp,
                stpmin,
                stpmax,
            });
        }
        if !(g0 < 0.0) {
            return Err(LineSearchError::NotDescent(g0));
        }
        if p.ftol < 0.0 || p.gtol < 0.0 || p.xtol < 0.0 || stpmin < 0.0 || stpmax < stpmin {
            return Err(LineSearchError::InvalidParameters);
        }
        let width = stpmax - stpmin;
        Ok(Self {
            p,
            stpmin,
            stpmax,
            stp,
            brackt: false,
            stage: 1,
            finit: f0,
            ginit: g0,
            gtest: p.ftol * g0,
            width,
            width1: width / 0.5,
            stx: 0.0,
            fx: f0,
            gx: g0,
            sty: 0.0,
            fy: f0,
            gy: g0,
            stmin: 0.0,
            stmax: stp + XTRAPU * stp,
        })
    }

    /// Current trial step.
    pub fn stp(&self) -> f64 {
        self.stp
    }

    /// Sufficient-decrease test for the current step.
    pub fn armijo_holds(&self, f: f64) -> bool {
        f <= self.finit + self.stp * self.gtest
    }

    /// Feeds `φ(stp)` and `φ'(stp)` for the current step.
    pub fn next(&mut self, f: f64, g: f64) -> SearchStatus {
        let ftest = self.finit + self.stp * self.gtest;
        if self.stage == 1 && f <= ftest && g >= 0.0 {
            self.stage = 2;
        }

        let mut warning = None;
        if self.brackt && (self.stp <= self.stmin || self.stp >= self.stmax) {
            warning = Some(SearchWarning::RoundingErrors);
        }
        if self.brackt && self.stmax - self.stmin <= self.p.xtol * self.stmax {
            warning = Some(SearchWarning::XtolSatisfied);
        }
        if self.stp == self.stpmax && f <= ftest && g <= self.gtest {
            warning = Some(SearchWarning::StepAtMax);
        }
        if self.stp == self.stpmin && (f > ftest || g >= self.gtest) {
            warning = Some(SearchWarning::StepAtMin);
        }
        if f <= ftest && g.abs() <= self.p.gtol * (-self.ginit) {
            return SearchStatus::Converged;
        }
        if let Some(w) = warning {
            return SearchStatus::Warning(w);
        }

        if self.stage == 1 && f <= self.fx && f > ftest {
            // Modified function ψ(α) = φ(α) − φ(0) − α·gtest.
            let fm = f - self.stp * self.gtest;
            let mut fxm = self.fx - self.stx * self.gtest;
            let mut fym = self.fy - self.sty * self.gtest;
            let gm = g - self.gtest;
            let mut gxm = self.gx - self.gtest;
            let mut gym = self.gy - self.gtest;
            let mut stp = self.stp;
            let mut step = Step {
                stx: &mut self.stx,
                fx: &mut fxm,
                dx: &mut gxm,
                sty: &mut self.sty,
                fy: &mut fym,
                dy: &mut gym,
                stp: &mut stp,
                brackt: &mut self.brackt,
            };
            step.update(fm, gm, self.stmin, self.stmax);
            self.stp = stp;
            self.fx = fxm + self.stx * self.gtest;
            self.fy = fym + self.sty * self.gtest;
            self.gx = gxm + self.gtest;
            self.gy = gym + self.gtest;
        } else {
            let mut stp = self.stp;
            let mut step = Step {
                stx: &mut self.stx,
                fx: &mut self.fx,
                dx: &mut self.gx,
                sty: &mut self.sty,
                fy: &mut self.fy,
                dy: &mut self.gy,
                stp: &mut stp,
                brackt: &mut self.brackt,
            };
            step.update(f, g, self.stmin, self.stmax);
            self.stp = stp;
        }

        if self.brackt {
            if (self.sty - self.stx).abs() >= 0.66 * self.width1 {
                self.stp = self.stx + 0.5 * (self.sty - self.stx);
            }
            self.width1 = self.width;
            self.width = (self.sty - self.stx).abs();
            self.stmin = self.stx.min(self.sty);
            self.stmax = self.stx.max(self.sty);
        } else {
            self.stmin = self.stp + XTRAPL * (self.stp - self.stx);
            self.stmax = self.stp + XTRAPU * (self.stp - self.stx);
        }

        self.stp = self.stp.max(self.stpmin).min(self.stpmax);

        if (self.brackt && (self.stp <= self.stmin || self.stp >= self.stmax))
            || (self.brackt && self.stmax - self.stmin <= self.p.xtol * self.stmax)
        {
            self.stp = self.stx;
        }
        SearchStatus::Evaluate(self.stp)
    }
}

/// Safeguarded cubic/quadratic step of the interval update.
struct Step<'a> {
    stx: &'a mut f64,
    fx: &'a mut f64,
    dx: &'a mut f64,
    sty: &'a mut f64,
    fy: &'a mut f64,
    dy: &'a mut f64,
    stp: &'a mut f64,
    brackt: &'a mut bool,
}

impl Step<'_> {
    fn update(&mut self, fp: f64, dp: f64, stpmin: f64, stpmax: f64) {
        let (stx, fx, dx) = (*self.stx, *self.fx, *self.dx);
        let (sty, fy, dy) = (*self.sty, *self.fy, *self.dy);
        let stp = *self.stp;
        let sgnd = dp * (dx / dx.abs());

        let stpf;
        if fp > fx {
            // Higher function value: the minimum is bracketed.
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).sqrt();
            if stp < stx {
                gamma = -gamma;
            }
            let p = (gamma - dx) + theta;
            let q = ((gamma - dx) + gamma) + dp;
            let r = p / q;
            let stpc = stx + r * (stp - stx);
            let stpq = stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx);
            stpf = if (stpc - stx).abs() < (stpq - stx).abs() {
                stpc
            } else {
                stpc + (stpq - stpc) / 2.0
            };
            *self.brackt = true;
        } else if sgnd < 0.0 {
            // Derivatives of opposite sign: the minimum is bracketed.
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).sqrt();
            if stp > stx {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = ((gamma - dp) + gamma) + dx;
            let r = p / q;
            let stpc = stp + r * (stx - stp);
            let stpq = stp + (dp / (dp - dx)) * (stx - stp);
            stpf = if (stpc - stp).abs() > (stpq - stp).abs() {
                stpc
            } else {
                stpq
            };
            *self.brackt = true;
        } else if dp.abs() < dx.abs() {
            // Same sign, decreasing magnitude.
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).max(0.0).sqrt();
            if stp > stx {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = (gamma + (dx - dp)) + gamma;
            let r = p / q;
            let stpc = if r < 0.0 && gamma != 0.0 {
                stp + r * (stx - stp)
            } else if stp > stx {
                stpmax
            } else {
                stpmin
            };
            let stpq = stp + (dp / (dp - dx)) * (stx - stp);
            if *self.brackt {
                let mut f = if (stpc - stp).abs() < (stpq - stp).abs() {
                    stpc
                } else {
                    stpq
                };
                if stp > stx {
                    f = f.min(stp + 0.66 * (sty - stp));
                } else {
                    f = f.max(stp + 0.66 * (sty - stp));
                }
                stpf = f;
            } else {
                let f = if (stpc - stp).abs() > (stpq - stp).abs() {
                    stpc
                } else {
                    stpq
                };
                stpf = f.min(stpmax).max(stpmin);
            }
        } else {
            // Same sign, no decrease in magnitude.
            if *self.brackt {
                let theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp;
                let s = theta.abs().max(dy.abs()).max(dp.abs());
                let mut gamma = s * ((theta / s).powi(2) - (dy / s) * (dp / s)).sqrt();
                if stp > sty {
                    gamma = -gamma;
                }
                let p = (gamma - dp) + theta;
                let q = ((gamma - dp) + gamma) + dy;
                let r = p / q;
                stpf = stp + r * (sty - stp);
            } else if stp > stx {
                stpf = stpmax;
            } else {
                stpf = stpmin;
            }
        }

        if fp > fx {
            *self.sty = stp;
            *self.fy = fp;
            *self.dy = dp;
        } else {
            if sgnd < 0.0 {
                *self.sty = stx;
                *self.fy = fx;
                *self.dy = dx;
            }
            *self.stx = stp;
            *self.fx = fp;
            *self.dx = dp;
        }
        *self.stp = stpf;
    }
}
