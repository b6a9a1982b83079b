//! Numerical checks shared by the property tests and the acceptance
//! report. Each returns the first violation found.

use batchqn::gp::logei::{log_expected_improvement, log_h};
use batchqn::gp::{log_marginal_likelihood, GpModel, KernelParams};
use batchqn::numerics::{cholesky, frobenius_norm, norm2, Mat, Rng};
use batchqn::objectives::{Objective, ObjectiveId};

macro_rules! ensure {
    ($c:expr, $($a:tt)+) => {
        if !($c) {
            return Err(format!($($a)+));
        }
    };
}

const H: f64 = 1e-6;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff) / norm2(b).max(1.0)
}

fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += H;
            m[i] -= H;
            (f(&p) - f(&m)) / (2.0 * H)
        })
        .collect()
}

fn instance(id: ObjectiveId, d: usize, rng: &mut Rng) -> Objective {
    if id == ObjectiveId::Rosenbrock {
        Objective::rosenbrock(d)
    } else {
        Objective::bbob(id, d, rng)
    }
}

pub fn objective_gradients_match_differences() -> Result<(), String> {
    let mut rng = Rng::new(1);
    for id in ObjectiveId::ALL.into_iter().filter(|id| id.is_differentiable()) {
        for k in 0..100 {
            let d = 2 + k % 9;
            let obj = instance(id, d, &mut rng);
            let x = rng.uniform_in_box(&obj.lower, &obj.upper);
            let g = obj.evaluate(&x, true, false).unwrap().gradient.unwrap();
            let fd = central_diff(|p| obj.value(p).unwrap(), &x);
            let e = rel_err(&g, &fd);
            ensure!(e <= 1e-5, "{id} d={d}: {e}");
        }
    }
    Ok(())
}

pub fn objective_hessians_match_differences() -> Result<(), String> {
    let mut rng = Rng::new(2);
    for id in ObjectiveId::ALL.into_iter().filter(|id| id.has_hessian()) {
        for k in 0..100 {
            let d = 2 + k % 9;
            let obj = instance(id, d, &mut rng);
            let x = rng.uniform_in_box(&obj.lower, &obj.upper);
            let hess = obj.evaluate(&x, true, true).unwrap().hessian.unwrap();
            let grad = |p: &[f64]| obj.evaluate(p, true, false).unwrap().gradient.unwrap();
            let fd = Mat::from_fn(d, d, |i, j| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[j] += H;
                m[j] -= H;
                (grad(&p)[i] - grad(&m)[i]) / (2.0 * H)
            });
            let e = frobenius_norm(&hess.sub(&fd)) / frobenius_norm(&fd).max(1.0);
            ensure!(e <= 1e-4, "{id} d={d}: {e}");
        }
    }
    Ok(())
}

fn random_model(rng: &mut Rng, n: usize, d: usize) -> GpModel {
    let lower = vec![-2.0; d];
    let upper = vec![3.0; d];
    let x: Vec<Vec<f64>> = (0..n).map(|_| rng.uniform_in_box(&lower, &upper)).collect();
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (1.3 * v).sin()).sum::<f64>() + 0.1 * rng.normal()).collect();
    let params = KernelParams {
        lengthscales: (0..d).map(|_| rng.uniform(0.2, 1.0)).collect(),
        signal_variance: rng.uniform(0.5, 2.0),
        noise_variance: 1e-4,
    };
    GpModel::from_params(&x, &y, &lower, &upper, params).unwrap()
}

fn unit_point(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.uniform(0.01, 0.99)).collect()
}

pub fn posterior_gradients_match_differences() -> Result<(), String> {
    let mut rng = Rng::new(3);
    for m in 0..10 {
        let d = 1 + m % 5;
        let model = random_model(&mut rng, 15 + m, d);
        for _ in 0..10 {
            let q = unit_point(&mut rng, d);
            let post = model.posterior_with_grad(std::slice::from_ref(&q));
            let fd_mean = central_diff(|p| model.posterior(&[p.to_vec()]).0[0], &q);
            let fd_var = central_diff(|p| model.posterior(&[p.to_vec()]).1[0], &q);
            ensure!(rel_err(&post.dmean[0], &fd_mean) <= 1e-5, "posterior mean gradient, model {m}");
            ensure!(rel_err(&post.dvar[0], &fd_var) <= 1e-5, "posterior variance gradient, model {m}");
        }
    }
    Ok(())
}

pub fn mll_gradients_match_differences() -> Result<(), String> {
    let mut rng = Rng::new(4);
    for k in 0..20 {
        let d = 1 + k % 4;
        let n = 8 + k;
        let x: Vec<Vec<f64>> = (0..n).map(|_| unit_point(&mut rng, d)).collect();
        let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (4.0 * v).cos()).sum::<f64>() + 0.05 * rng.normal()).collect();
        let mut theta: Vec<f64> = (0..d).map(|_| rng.uniform(-1.5, 0.5)).collect();
        theta.push(rng.uniform(-1.0, 1.0));
        theta.push(rng.uniform(-6.0, -2.0));
        let (_, g) = log_marginal_likelihood(&x, &y, &KernelParams::from_log(&theta)).unwrap();
        let fd = central_diff(|t| log_marginal_likelihood(&x, &y, &KernelParams::from_log(t)).unwrap().0, &theta);
        let e = rel_err(&g, &fd);
        ensure!(e <= 1e-5, "dataset {k}: {e}");
    }
    Ok(())
}

pub fn log_ei_gradients_match_differences() -> Result<(), String> {
    let mut rng = Rng::new(5);
    let mut deep = 0;
    for m in 0..10 {
        let d = 1 + m % 4;
        let model = random_model(&mut rng, 12 + m, d);
        let y_min = model.train_targets().iter().cloned().fold(f64::INFINITY, f64::min);
        // Half the models ask for an improvement far below the data.
        let f_best = if m % 2 == 0 { y_min } else { y_min - 12.0 };
        for _ in 0..20 {
            let q = unit_point(&mut rng, d);
            let (mu, var) = model.posterior(std::slice::from_ref(&q));
            if (f_best - mu[0]) / var[0].sqrt() < -10.0 {
                deep += 1;
            }
            let res = model.log_ei(std::slice::from_ref(&q), f_best);
            let fd = central_diff(|p| model.log_ei(&[p.to_vec()], f_best).values[0], &q);
            let e = rel_err(&res.gradients[0], &fd);
            ensure!(e <= 1e-4, "model {m}: {e}");
        }
    }
    ensure!(deep >= 20, "only {deep} points with z < -10");
    Ok(())
}

pub fn log_ei_matches_monte_carlo() -> Result<(), String> {
    let mut rng = Rng::new(6);
    let draws = 1_000_000;
    for sigma in [0.1, 1.0] {
        for z in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let mu = 0.7;
            let f_best = mu + z * sigma;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..draws {
                let imp = (f_best - (mu + sigma * rng.normal())).max(0.0);
                sum += imp;
                sum2 += imp * imp;
            }
            let mean = sum / draws as f64;
            let se = ((sum2 / draws as f64 - mean * mean) / draws as f64).sqrt();
            let exact = log_expected_improvement(mu, sigma, f_best).0.exp();
            ensure!((exact - mean).abs() <= 3.0 * se, "z={z} sigma={sigma}: {exact} vs {mean} ± {se}");
        }
    }
    Ok(())
}

pub fn log_ei_finite_deep_in_the_tail() -> Result<(), String> {
    let mut z = 0.0;
    while z >= -40.0 {
        let (v, dmu, ds) = log_expected_improvement(0.0, 1.0, z);
        ensure!(v.is_finite() && dmu.is_finite() && ds.is_finite(), "z={z}");
        ensure!(log_h(z).is_finite(), "log h at z={z}");
        z -= 0.25;
    }
    Ok(())
}

/// L·Lᵀ reproduces random SPD matrices, L is lower triangular.
pub fn cholesky_reconstruction() -> Result<(), String> {
    let mut rng = Rng::new(7);
    for n in 1..40 {
        let m = Mat::from_fn(n, n, |_, _| rng.normal());
        let a = m.transpose().matmul(&m).add(&Mat::identity(n).scaled(0.1));
        let l = cholesky(&a, 0.0).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in i + 1..n {
                ensure!(l[(i, j)] == 0.0, "upper entry ({i},{j}) nonzero");
            }
        }
        let err = frobenius_norm(&l.matmul(&l.transpose()).sub(&a)) / frobenius_norm(&a);
        ensure!(err < 1e-13, "n={n}: reconstruction error {err}");
    }
    Ok(())
}

pub fn all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("objective gradients", objective_gradients_match_differences()),
        ("objective Hessians", objective_hessians_match_differences()),
        ("posterior gradients", posterior_gradients_match_differences()),
        ("MLL gradients", mll_gradients_match_differences()),
        ("log-EI gradients", log_ei_gradients_match_differences()),
        ("Cholesky reconstruction", cholesky_reconstruction()),
        ("log-EI vs Monte Carlo", log_ei_matches_monte_carlo()),
        ("log-EI tail finite", log_ei_finite_deep_in_the_tail()),
    ]
}
