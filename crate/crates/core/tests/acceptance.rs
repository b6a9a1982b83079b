//! Acceptance report: one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

mod common;

use std::time::Instant;

use batchqn::bo::{run_bo, BoConfig};
use batchqn::diagnostics::{artifact_experiment, artifact_solver_config};
use batchqn::experiments::convergence::{run_convergence, ConvergenceConfig};
use batchqn::experiments::median;
use batchqn::gp::{GpModel, KernelParams, LogEiAcquisition};
use batchqn::mso::{run_dbe, run_seq, BatchObjective, MsoConfig, NegatedObjective, Scheme};
use batchqn::numerics::Rng;
use batchqn::objectives::{Objective, ObjectiveId};
use batchqn::par::Exec;
use batchqn::qn::{Bounds, SolverConfig, Variant};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn fmt_iters(v: Option<usize>) -> String {
    v.map_or("not reached".into(), |i| i.to_string())
}

fn convergence(r: &mut Report) {
    let cfg = ConvergenceConfig::default();
    match run_convergence(&cfg, Exec::best_available()) {
        Ok(cols) => {
            let at = |b: usize| cols.iter().find(|c| c.restarts == b).and_then(|c| c.iters_to_threshold);
            let within = |v: Option<usize>, lo: usize, hi: usize| v.is_some_and(|i| (lo..=hi).contains(&i));
            let late = |v: Option<usize>| v.is_none_or(|i| i > 120);
            let pass = within(at(1), 20, 45) && within(at(2), 35, 75) && late(at(5)) && late(at(10));
            let detail = [1, 2, 5, 10]
                .iter()
                .map(|&b| format!("B={b} {}", fmt_iters(at(b))))
                .collect::<Vec<_>>()
                .join(", ");
            r.line(1, "convergence vs B", pass, detail);
        }
        Err(e) => r.line(1, "convergence vs B", false, e.to_string()),
    }
}

fn artifacts(r: &mut Report) {
    let obj = Objective::rosenbrock(5);
    let cfg = artifact_solver_config(10);
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, b) in [(Variant::LbfgsB, 3), (Variant::DenseBfgs, 3), (Variant::DenseBfgs, 10)] {
        match artifact_experiment(&obj, b, &cfg, variant, 0) {
            Ok(a) => {
                let ok = a.offdiag_ratio_seq == 0.0 && a.offdiag_ratio_cbe > 0.01 && a.e_rel_seq < a.e_rel_cbe;
                pass &= ok;
                parts.push(format!(
                    "{variant} B={b} offdiag seq {} cbe {:.3}, e_rel seq {:.3} cbe {:.3}",
                    a.offdiag_ratio_seq, a.offdiag_ratio_cbe, a.e_rel_seq, a.e_rel_cbe
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{variant} B={b} error {e}"));
            }
        }
    }
    r.line(2, "inverse-Hessian artifacts", pass, parts.join("; "));
}

fn equivalence_problem<A: BatchObjective>(acq: &A, starts: &[Vec<f64>], bounds: &Bounds) -> Result<(f64, bool), String> {
    let cfg = MsoConfig::from(SolverConfig::default());
    let seq = run_seq(acq, starts, bounds, &cfg).map_err(|e| e.to_string())?;
    let dbe = run_dbe(acq, starts, bounds, &cfg).map_err(|e| e.to_string())?;
    let mut dx: f64 = 0.0;
    for (p, q) in seq.per_restart.iter().zip(&dbe.per_restart) {
        for (a, b) in p.x_final.iter().zip(&q.x_final) {
            dx = dx.max((a - b).abs());
        }
    }
    Ok((dx, seq.iteration_counts() == dbe.iteration_counts()))
}

fn logei_model(rng: &mut Rng, n: usize, d: usize) -> GpModel {
    let lower = vec![-1.0; d];
    let upper = vec![2.0; d];
    let x: Vec<Vec<f64>> = (0..n).map(|_| rng.uniform_in_box(&lower, &upper)).collect();
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (2.0 * v).sin() + 0.3 * v * v).sum()).collect();
    let params = KernelParams::isotropic(d, 0.3, 1.0, 1e-6);
    GpModel::from_params(&x, &y, &lower, &upper, params).unwrap()
}

fn dbe_equals_seq(r: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut same_iters = true;
    let mut errors = Vec::new();
    let ids = [ObjectiveId::Sphere, ObjectiveId::Rastrigin, ObjectiveId::AttractiveSector, ObjectiveId::Rosenbrock, ObjectiveId::Rastrigin];
    for (k, id) in ids.into_iter().enumerate() {
        let mut rng = Rng::new(40 + k as u64);
        let d = 2 + k;
        let obj = Objective::bbob(id, d, &mut rng);
        let bounds = Bounds::new(obj.lower.clone(), obj.upper.clone()).unwrap();
        let starts: Vec<Vec<f64>> = (0..6).map(|_| rng.uniform_in_box(&obj.lower, &obj.upper)).collect();
        match equivalence_problem(&NegatedObjective::new(obj), &starts, &bounds) {
            Ok((dx, it)) => {
                worst = worst.max(dx);
                same_iters &= it;
            }
            Err(e) => errors.push(e),
        }
    }
    for k in 0..5 {
        let mut rng = Rng::new(60 + k);
        let d = 2 + k as usize;
        let model = logei_model(&mut rng, 10 + 3 * k as usize, d);
        let f_best = model.train_targets().iter().cloned().fold(f64::INFINITY, f64::min);
        let acq = LogEiAcquisition::new(&model, f_best);
        let bounds = Bounds::new(model.lower().to_vec(), model.upper().to_vec()).unwrap();
        let starts: Vec<Vec<f64>> = (0..6).map(|_| rng.uniform_in_box(model.lower(), model.upper())).collect();
        match equivalence_problem(&acq, &starts, &bounds) {
            Ok((dx, it)) => {
                worst = worst.max(dx);
                same_iters &= it;
            }
            Err(e) => errors.push(e),
        }
    }
    let pass = errors.is_empty() && worst <= 1e-10 && same_iters;
    let detail = if errors.is_empty() {
        format!("10 problems, max |x_dbe - x_seq| {worst:e}, iteration counts identical: {same_iters}")
    } else {
        errors.join("; ")
    };
    r.line(3, "D-BE matches sequential restarts", pass, detail);
}

fn bo_trend(r: &mut Report) {
    let mut iters = [vec![], vec![], vec![]];
    let mut acq = [vec![], vec![], vec![]];
    let mut errors = Vec::new();
    // Schemes of one seed run back to back so machine load affects them alike.
    for seed in 0..5 {
        for (k, scheme) in Scheme::ALL.into_iter().enumerate() {
            match run_bo(&BoConfig::new(ObjectiveId::Rastrigin, 5, scheme, seed)) {
                Ok(t) => {
                    iters[k].push(t.median_iters);
                    acq[k].push(t.acq_seconds);
                }
                Err(e) => errors.push(format!("{scheme} seed {seed}: {e}")),
            }
        }
    }
    if !errors.is_empty() {
        r.line(4, "BO iteration and runtime trend", false, errors.join("; "));
        return;
    }
    let (seq, cbe, dbe) = (median(&iters[0]), median(&iters[1]), median(&iters[2]));
    let (t_seq, t_cbe, t_dbe) = (median(&acq[0]), median(&acq[1]), median(&acq[2]));
    let pass = cbe >= 2.0 * dbe && (dbe - seq).abs() <= 0.2 * seq && t_dbe < t_seq;
    r.line(
        4,
        "BO iteration and runtime trend",
        pass,
        format!("median iters seq {seq} cbe {cbe} dbe {dbe}; median acq seconds seq {t_seq:.3} cbe {t_cbe:.3} dbe {t_dbe:.3}"),
    );
}

fn solver_oracle(r: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut count = 0;
    for variant in [Variant::LbfgsB, Variant::DenseBfgs] {
        for c in common::oracle::oracle_cases(variant) {
            count += 1;
            pass &= c.feasible && common::oracle::close(c.f, c.reference);
            worst = worst.max((c.f - c.reference).abs());
        }
    }
    r.line(5, "solver vs reference", pass, format!("{count} runs (20 problems x 2 variants), max |f - f_ref| {worst:e}"));
}

fn numeric_suite(r: &mut Report) {
    let results = common::numeric::all();
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, res)| res.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let detail = if failed.is_empty() {
        format!("{} checks passed", results.len())
    } else {
        failed.join("; ")
    };
    r.line(6, "numerical property suite", failed.is_empty(), detail);
}

fn batched_throughput(r: &mut Report) {
    let mut rng = Rng::new(9);
    let d = 20;
    let lower = vec![0.0; d];
    let upper = vec![1.0; d];
    let x: Vec<Vec<f64>> = (0..200).map(|_| rng.uniform_in_box(&lower, &upper)).collect();
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (3.0 * v).sin()).sum()).collect();
    let model = GpModel::from_params(&x, &y, &lower, &upper, KernelParams::isotropic(d, 0.8, 1.0, 1e-4)).unwrap();
    let q: Vec<Vec<f64>> = (0..10).map(|_| rng.uniform_in_box(&lower, &upper)).collect();
    let f_best = model.train_targets().iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut batched, mut single) = (Vec::new(), Vec::new());
    for rep in 0..110 {
        let t = Instant::now();
        std::hint::black_box(model.log_ei(&q, f_best));
        let tb = t.elapsed().as_secs_f64();
        let t = Instant::now();
        for p in &q {
            std::hint::black_box(model.log_ei(std::slice::from_ref(p), f_best));
        }
        let ts = t.elapsed().as_secs_f64();
        if rep >= 10 {
            batched.push(tb);
            single.push(ts);
        }
    }
    let ratio = median(&batched) / median(&single);
    r.line(
        7,
        "batched log-EI throughput",
        ratio < 0.8,
        format!("batched/single time ratio {ratio:.3} (n=200, D=20, B=10, median of 100)"),
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    convergence(&mut r);
    artifacts(&mut r);
    dbe_equals_seq(&mut r);
    bo_trend(&mut r);
    solver_oracle(&mut r);
    numeric_suite(&mut r);
    batched_throughput(&mut r);
    if r.failures > 0 {
        println!("{} of 7 criteria failed", r.failures);
        std::process::exit(1);
    }
    println!("all 7 criteria passed");
}
