use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use batchqn::experiments::artifacts::{run_artifacts, ArtifactsConfig};
use batchqn::experiments::bobench::{run_bobench, BoBenchConfig};
use batchqn::experiments::config::{List, Settings};
use batchqn::experiments::convergence::{write_convergence, ConvergenceConfig};
use batchqn::experiments::Manifest;
use batchqn::par::Exec;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "batchqn", version, about = "Batched quasi-Newton multi-start experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inverse-Hessian artifacts of the coupled solver.
    Artifacts(Flags),
    /// Coupled-solver convergence against the number of restarts.
    Convergence(Flags),
    /// BO benchmark comparing the multi-start schemes.
    Bobench(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat TOML file of settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    objective: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    dim: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    restarts: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Convergence: total restarts per B. Bobench: number of seeds.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Sequential execution; timings are written as null.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    paper_scale: bool,
}

fn list<T>(v: Vec<T>) -> Option<List<T>> {
    (!v.is_empty()).then_some(List::Many(v))
}

impl Flags {
    fn settings(self) -> anyhow::Result<Settings> {
        let base = match &self.config {
            Some(p) => Settings::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => Settings::default(),
        };
        let top = Settings {
            objective: list(self.objective),
            dim: list(self.dim),
            restarts: list(self.restarts),
            scheme: list(self.scheme),
            variant: list(self.variant),
            memory: self.memory,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            seed: self.seed,
            reps: self.reps,
            trials: self.trials,
            n_init: None,
            out_dir: self.out_dir,
            deterministic: self.deterministic.then_some(true),
            paper_scale: self.paper_scale.then_some(true),
        };
        Ok(base.overlay(top))
    }
}

fn execute(command: Command) -> anyhow::Result<Manifest> {
    let (name, flags) = match command {
        Command::Artifacts(f) => ("artifacts", f),
        Command::Convergence(f) => ("convergence", f),
        Command::Bobench(f) => ("bobench", f),
    };
    let s = flags.settings()?;
    let out = s.out_dir().join(name);
    let manifest = match name {
        "artifacts" => run_artifacts(&ArtifactsConfig::from_settings(&s)?, &out)?.1,
        "convergence" => {
            let exec = if s.deterministic() { Exec::Sequential } else { Exec::best_available() };
            write_convergence(&ConvergenceConfig::from_settings(&s)?, exec, &out)?.1
        }
        _ => run_bobench(&BoBenchConfig::from_settings(&s)?, &out)?.2,
    };
    eprintln!("wrote {}", out.display());
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(m) if m.all_ok() => ExitCode::SUCCESS,
        Ok(m) => {
            eprintln!("{} of {} runs failed: {}", m.failed.len(), m.runs.len(), m.failed.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
