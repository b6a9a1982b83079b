//! Reference solvers: KKT active-set enumeration for box-constrained
//! quadratics and damped Newton for a smooth convex non-quadratic.

use batchqn::numerics::Rng;
use batchqn::qn::{minimize, Bounds, SolverConfig, Variant};

const ABS_TOL: f64 = 1e-6;
const REL_TOL: f64 = 1e-8;

pub fn close(f: f64, reference: f64) -> bool {
    (f - reference).abs() <= ABS_TOL || (f - reference).abs() <= REL_TOL * reference.abs()
}

pub fn tight() -> SolverConfig {
    SolverConfig {
        max_iters: 2000,
        grad_tol: 1e-10,
        ftol: 0.0,
        ..SolverConfig::default()
    }
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-14 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= m * a[k][j];
            }
            b[i] -= m * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

pub struct Quadratic {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn random(rng: &mut Rng, n: usize, b_scale: f64) -> Self {
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let a = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() / n as f64;
                        s + if i == j { 0.2 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let b = (0..n).map(|_| b_scale * rng.normal()).collect();
        Self { a, b }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bi)
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let g = self.grad(x);
        // ½xᵀAx + bᵀx = ½xᵀ(Ax + b) + ½bᵀx
        0.5 * x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * x.iter().zip(&self.b).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Minimum over the box by enumerating every free/lower/upper pattern
    /// and keeping the KKT points.
    pub fn box_minimum(&self, lo: &[f64], hi: &[f64]) -> (f64, usize) {
        let n = self.b.len();
        let mut best = (f64::INFINITY, 0);
        for code in 0..3usize.pow(n as u32) {
            let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let mut x = vec![0.0; n];
            for i in 0..n {
                match state[i] {
                    1 => x[i] = lo[i],
                    2 => x[i] = hi[i],
                    _ => {}
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
            if !free.is_empty() {
                let sub_a = free.iter().map(|&i| free.iter().map(|&j| self.a[i][j]).collect()).collect();
                let rhs = free
                    .iter()
                    .map(|&i| {
                        -self.b[i]
                            - (0..n).filter(|j| state[*j] != 0).map(|j| self.a[i][j] * x[j]).sum::<f64>()
                    })
                    .collect();
                let Some(xf) = gauss_solve(sub_a, rhs) else { continue };
                for (k, &i) in free.iter().enumerate() {
                    x[i] = xf[k];
                }
            }
            if (0..n).any(|i| x[i] < lo[i] - 1e-12 || x[i] > hi[i] + 1e-12) {
                continue;
            }
            let g = self.grad(&x);
            let kkt = (0..n).all(|i| match state[i] {
                1 => g[i] >= -1e-9,
                2 => g[i] <= 1e-9,
                _ => true,
            });
            if kkt {
                let f = self.value(&x);
                if f < best.0 {
                    best = (f, n - free.len());
                }
            }
        }
        best
    }
}

/// `Σ log cosh(aᵢ·x − cᵢ) + ½μ‖x‖²`
pub struct LogCosh {
    rows: Vec<Vec<f64>>,
    c: Vec<f64>,
    mu: f64,
}

impl LogCosh {
    pub fn random(rng: &mut Rng, n: usize) -> Self {
        Self {
            rows: (0..n + 2).map(|_| (0..n).map(|_| rng.normal()).collect()).collect(),
            c: (0..n + 2).map(|_| 2.0 * rng.normal()).collect(),
            mu: 0.1,
        }
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.c)
            .map(|(r, c)| r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - c)
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        // log cosh t = |t| + log1p(e^{−2|t|}) − ln 2
        let s: f64 = self
            .residuals(x)
            .iter()
            .map(|t| t.abs() + (-2.0 * t.abs()).exp().ln_1p() - std::f64::consts::LN_2)
            .sum();
        s + 0.5 * self.mu * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residuals(x);
        (0..x.len())
            .map(|j| self.rows.iter().zip(&r).map(|(row, t)| t.tanh() * row[j]).sum::<f64>() + self.mu * x[j])
            .collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let r = self.residuals(x);
        let n = x.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = self
                            .rows
                            .iter()
                            .zip(&r)
                            .map(|(row, t)| (1.0 - t.tanh().powi(2)) * row[i] * row[j])
                            .sum();
                        s + if i == j { self.mu } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    /// Damped Newton with Armijo backtracking.
    pub fn newton_minimum(&self, x0: &[f64]) -> f64 {
        let mut x = x0.to_vec();
        for _ in 0..200 {
            let g = self.grad(&x);
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-13 {
                break;
            }
            let d = gauss_solve(self.hessian(&x), g.iter().map(|v| -v).collect()).unwrap();
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let f0 = self.value(&x);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                if self.value(&trial) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        self.value(&x)
    }
}

pub struct OracleCase {
    pub label: String,
    pub f: f64,
    pub reference: f64,
    pub feasible: bool,
}

/// 20 seeded problems: 5 unconstrained quadratics, 5 unconstrained
/// log-cosh problems, 10 quadratics with an active bound at the optimum.
pub fn oracle_cases(variant: Variant) -> Vec<OracleCase> {
    let mut out = Vec::new();
    for seed in 0..5u64 {
        let mut rng = Rng::new(100 + seed);
        let n = 3 + seed as usize;
        let q = Quadratic::random(&mut rng, n, 1.0);
        let x_star = gauss_solve(q.a.clone(), q.b.iter().map(|v| -v).collect()).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (_, fin) = minimize(|x| (q.value(x), q.grad(x)), &x0, &Bounds::unbounded(n), tight(), variant).unwrap();
        out.push(OracleCase { label: format!("quadratic {seed}"), f: fin.f, reference: q.value(&x_star), feasible: true });
    }
    for seed in 0..5u64 {
        let mut rng = Rng::new(200 + seed);
        let n = 2 + seed as usize;
        let p = LogCosh::random(&mut rng, n);
        let x0: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let reference = p.newton_minimum(&x0);
        let (_, fin) = minimize(|x| (p.value(x), p.grad(x)), &x0, &Bounds::unbounded(n), tight(), variant).unwrap();
        out.push(OracleCase { label: format!("log-cosh {seed}"), f: fin.f, reference, feasible: true });
    }
    for seed in 0..10u64 {
        let mut rng = Rng::new(300 + seed);
        let n = 2 + (seed as usize % 4);
        let (q, lo, hi, reference) = loop {
            let q = Quadratic::random(&mut rng, n, 4.0);
            let lo: Vec<f64> = (0..n).map(|_| rng.uniform(-1.5, -0.5)).collect();
            let hi: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 1.5)).collect();
            let (reference, active) = q.box_minimum(&lo, &hi);
            if active > 0 {
                break (q, lo, hi, reference);
            }
        };
        let x0 = rng.uniform_in_box(&lo, &hi);
        let bounds = Bounds::new(lo, hi).unwrap();
        let (_, fin) = minimize(|x| (q.value(x), q.grad(x)), &x0, &bounds, tight(), variant).unwrap();
        out.push(OracleCase {
            label: format!("boxed quadratic {seed}"),
            f: fin.f,
            reference,
            feasible: bounds.contains(&fin.x),
        });
    }
    out
}
