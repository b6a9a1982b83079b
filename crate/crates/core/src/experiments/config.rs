//! Flat key-value experiment settings. A TOML file supplies a base layer,
//! command-line flags overlay it, and each experiment resolves the merged
//! layer against its own defaults.
//!
//! ```toml
//! objective = "rastrigin"      # or a list: ["rastrigin", "sphere"]
//! dim = 5
//! restarts = [1, 2, 5, 10]
//! scheme = ["seq", "cbe", "dbe"]
//! variant = ["lbfgsb", "bfgs"]
//! memory = 10
//! max_iters = 200
//! grad_tol = 1e-2
//! seed = 0
//! reps = 5
//! trials = 60
//! n_init = 10
//! out_dir = "results"
//! deterministic = false
//! paper_scale = false
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::mso::Scheme;
use crate::objectives::ObjectiveId;
use crate::qn::Variant;

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum List<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> List<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            List::One(v) => vec![v.clone()],
            List::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub objective: Option<List<String>>,
    pub dim: Option<List<usize>>,
    pub restarts: Option<List<usize>>,
    pub scheme: Option<List<String>>,
    pub variant: Option<List<String>>,
    pub memory: Option<usize>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub trials: Option<usize>,
    pub n_init: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub deterministic: Option<bool>,
    pub paper_scale: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `top` win over `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay_fields!(base, top; objective, dim, restarts, scheme, variant, memory,
            max_iters, grad_tol, seed, reps, trials, n_init, out_dir, deterministic, paper_scale)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn deterministic(&self) -> bool {
        self.deterministic.unwrap_or(false)
    }

    pub fn paper_scale(&self) -> bool {
        self.paper_scale.unwrap_or(false)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn objectives(&self) -> Result<Option<Vec<ObjectiveId>>, ExperimentError> {
        parse_list(&self.objective, "objective")
    }

    pub fn schemes(&self) -> Result<Option<Vec<Scheme>>, ExperimentError> {
        parse_list(&self.scheme, "scheme")
    }

    pub fn variants(&self) -> Result<Option<Vec<Variant>>, ExperimentError> {
        parse_list(&self.variant, "variant")
    }

    pub fn dims(&self) -> Option<Vec<usize>> {
        self.dim.as_ref().map(List::to_vec)
    }

    pub fn restart_list(&self) -> Option<Vec<usize>> {
        self.restarts.as_ref().map(List::to_vec)
    }
}

fn parse_list<T>(field: &Option<List<String>>, name: &str) -> Result<Option<Vec<T>>, ExperimentError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let Some(list) = field else {
        return Ok(None);
    };
    let items = list.to_vec();
    if items.is_empty() {
        return Err(ExperimentError::Config(format!("{name} list is empty")));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| ExperimentError::Config(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

/// Rejects empty or zero-containing count lists.
pub fn positive_list(values: Vec<usize>, name: &str) -> Result<Vec<usize>, ExperimentError> {
    if values.is_empty() || values.contains(&0) {
        return Err(ExperimentError::Config(format!(
            "{name} must be a non-empty list of positive integers"
        )));
    }
    Ok(values)
}
