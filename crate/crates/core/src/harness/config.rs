use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{ArchConfig, LatentMode};
use crate::online::NgConfig;
use crate::pde::{linspace, pick_test_mus, select_train_test, Grid, PdeProblem, Scheme};
use crate::pretrain::TrainConfig;

fn default_n_times() -> usize {
    101
}
fn default_mu_count() -> usize {
    101
}
fn default_n_test() -> usize {
    3
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_depth() -> usize {
    8
}
fn default_width() -> usize {
    25
}
fn default_rank() -> usize {
    3
}
fn default_latent() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_period() -> f64 {
    1.0
}
fn default_hyper_depth() -> usize {
    3
}
fn default_hyper_width() -> usize {
    15
}
fn default_repetitions() -> usize {
    5
}
fn default_q_list() -> Vec<usize> {
    (1..=8).collect()
}
fn default_m_list() -> Vec<usize> {
    vec![2, 4, 10, 20, 40]
}
fn default_pod_max() -> usize {
    10
}
fn default_lattice() -> usize {
    41
}
fn default_margin() -> f64 {
    0.5
}

/// Network shape; spatial and field dimensions come from the problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
    #[serde(default)]
    pub mode: LatentMode,
    #[serde(default = "default_true")]
    pub periodic: bool,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_hyper_depth")]
    pub hyper_depth: usize,
    #[serde(default = "default_hyper_width")]
    pub hyper_width: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ArchSpec {
    pub fn for_problem(&self, problem: PdeProblem) -> ArchConfig {
        ArchConfig {
            input_dim: problem.dim(),
            output_dim: problem.n_fields(),
            depth: self.depth,
            width: self.width,
            rank: self.rank,
            latent_dim: self.latent_dim,
            mode: self.mode,
            periodic: self.periodic,
            period: self.period,
            hyper_depth: self.hyper_depth,
            hyper_width: self.hyper_width,
            n_mu: 1,
        }
    }
}

/// Settings of the benchmark drivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed repetitions after one discarded warm-up.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Latent dimensions of the n-width sweep.
    #[serde(default = "default_q_list")]
    pub q_list: Vec<usize>,
    /// Training-set sizes of the data-efficiency sweep.
    #[serde(default = "default_m_list")]
    pub m_list: Vec<usize>,
    /// Largest POD dimension reported by `baseline pod`.
    #[serde(default = "default_pod_max")]
    pub pod_max: usize,
    /// Points per axis of the residual-landscape lattice.
    #[serde(default = "default_lattice")]
    pub lattice: usize,
    /// Relative enlargement of the latent bounding box for the landscape.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Also run CoLoRA-EQ inside the sweeps.
    #[serde(default = "default_true")]
    pub with_eq: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// Everything an experiment run needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: PdeProblem,
    /// Points per axis; the problem's desk grid when absent.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Output times, including `t = 0`.
    #[serde(default = "default_n_times")]
    pub n_times: usize,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Candidate parameters; `mu_count` equispaced values over the problem's
    /// range when absent.
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
    #[serde(default = "default_mu_count")]
    pub mu_count: usize,
    /// Held-out parameters; `n_test` spread-out candidates when absent.
    #[serde(default)]
    pub test_mus: Option<Vec<f64>>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Training-set size; every remaining candidate when absent.
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub arch: ArchSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ng: Option<NgConfig>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Seeds initialization and minibatching; overrides `train.seed`.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(problem: PdeProblem) -> Self {
        serde_json::from_value(serde_json::json!({ "problem": problem })).expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problem;
        if let Some(g) = &self.grid {
            if g.len() != p.dim() || g.iter().any(|&n| n < 5) {
                return Err(Error::config(format!(
                    "grid needs {} sizes of at least 5 points",
                    p.dim()
                )));
            }
        }
        if self.n_times < 2 {
            return Err(Error::config("at least two output times required"));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("t_end must be positive"));
            }
        }
        if let Some(s) = &self.scheme {
            s.validate()?;
        }
        let grid = self.mu_candidates();
        if grid.len() < 2 {
            return Err(Error::config("need at least two parameter candidates"));
        }
        for &m in &grid {
            p.check_mu(&[m]).map_err(|e| Error::config(e.to_string()))?;
        }
        let tests = self.test_values();
        if tests.is_empty() {
            return Err(Error::config("no test parameters"));
        }
        self.train_values().map_err(|e| Error::config(e.to_string()))?;
        self.arch_config().validate()?;
        self.train.validate()?;
        if let Some(ng) = &self.ng {
            ng.validate()?;
        }
        if self.bench.repetitions == 0 || self.bench.q_list.contains(&0) || self.bench.lattice < 2 {
            return Err(Error::config("benchmark repetitions, latent sizes and lattice must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        let d = self.problem.default_grid();
        match &self.grid {
            Some(n) => Grid::new(n.clone(), d.lo, d.hi).expect("validated grid"),
            None => d,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(0.0, self.t_end.unwrap_or(self.problem.t_end()), self.n_times)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(self.problem.default_scheme())
    }

    pub fn mu_candidates(&self) -> Vec<f64> {
        match &self.mu_grid {
            Some(g) => g.clone(),
            None => {
                let (lo, hi) = self.problem.mu_range();
                linspace(lo, hi, self.mu_count)
            }
        }
    }

    pub fn test_values(&self) -> Vec<f64> {
        match &self.test_mus {
            Some(t) => t.clone(),
            None => pick_test_mus(&self.mu_candidates(), self.n_test),
        }
    }

    /// Training parameters for an explicit size `m`.
    pub fn train_values_for(&self, m: usize) -> Result<Vec<f64>> {
        select_train_test(&self.mu_candidates(), m, &self.test_values())
    }

    pub fn train_values(&self) -> Result<Vec<f64>> {
        let grid = self.mu_candidates();
        let tests = self.test_values();
        let m = self.n_train.unwrap_or(grid.len().saturating_sub(tests.len()));
        self.train_values_for(m)
    }

    pub fn arch_config(&self) -> ArchConfig {
        self.arch.for_problem(self.problem)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn ng_config(&self) -> NgConfig {
        self.ng.unwrap_or(NgConfig::for_problem(self.problem))
    }
}
