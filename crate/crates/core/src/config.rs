//! Experiment configuration files (TOML, or JSON by extension).
//!
//! ```toml
//! [environment]
//! kind = "cliffwalk"        # or "file" (path = "mdp.json") or "random"
//! p_slip = 0.2
//!
//! [algorithm]
//! kinds = ["cdpg", "spg"]
//! [algorithm.cdpg]
//! step_size = 0.01
//! [algorithm.spg]
//! batch_size = 100
//!
//! [risk]
//! kind = "cvar"
//! alpha = 0.1
//!
//! [grid]
//! z_min = 0.0
//! z_max = 600.0
//! n_atoms = 601
//!
//! [run]
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "out"
//! reference = "safe-path"
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cdpg::CdpgConfig;
use crate::cliffwalk::{
    safe_path_policy, shortest_path_policy, CliffwalkParams, SAFE_PATH_STATES,
    SHORTEST_PATH_STATES, START,
};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::history::Reference;
use crate::mdp::{RandomMdpParams, SoftmaxPolicy, TabularMdp};
use crate::measure::SupportGrid;
use crate::risk::RiskMeasure;
use crate::spg::SpgConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default = "default_risk")]
    pub risk: RiskMeasure,
    #[serde(default = "default_grid")]
    pub grid: SupportGrid,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
}

fn default_risk() -> RiskMeasure {
    RiskMeasure::Cvar { alpha: 0.1 }
}

fn default_grid() -> SupportGrid {
    crate::cdpg::default_training_grid()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentConfig {
    Cliffwalk(CliffwalkParams),
    /// MDP JSON; relative paths resolve against the config file.
    File { path: PathBuf },
    /// Generated per seed from `seed + run seed`.
    Random(RandomMdpParams),
}

impl EnvironmentConfig {
    pub fn build(&self, run_seed: u64) -> Result<TabularMdp> {
        match self {
            EnvironmentConfig::Cliffwalk(p) => p.build(),
            EnvironmentConfig::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read MDP file {}: {e}", path.display()))
                })?;
                Ok(serde_json::from_str(&text)?)
            }
            EnvironmentConfig::Random(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(run_seed));
                p.build(&mut rng)
            }
        }
    }

    /// Cliffwalk starts in its corner; other environments in state 0.
    pub fn default_start(&self) -> usize {
        match self {
            EnvironmentConfig::Cliffwalk(_) => START,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cdpg,
    Spg,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Cdpg => "cdpg",
            Algorithm::Spg => "spg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kinds: Vec<Algorithm>,
    pub cdpg: CdpgSection,
    pub spg: SpgSection,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            kinds: vec![Algorithm::Cdpg],
            cdpg: CdpgSection::default(),
            spg: SpgSection::default(),
        }
    }
}

/// CDPG settings; grid, seed and start state come from the shared blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdpgSection {
    pub step_size: f64,
    pub iterations: usize,
    pub trajectories_per_iter: usize,
    pub grad_norm_stop: f64,
    pub horizon_cap: usize,
    pub eval: EvalConfig,
}

impl Default for CdpgSection {
    fn default() -> Self {
        let d = CdpgConfig::default();
        Self {
            step_size: d.step_size,
            iterations: d.iterations,
            trajectories_per_iter: d.trajectories_per_iter,
            grad_norm_stop: d.grad_norm_stop,
            horizon_cap: d.horizon_cap,
            eval: d.eval,
        }
    }
}

/// SPG settings; alpha comes from the risk block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpgSection {
    pub batch_size: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub horizon_cap: usize,
}

impl Default for SpgSection {
    fn default() -> Self {
        let d = SpgConfig::default();
        Self {
            batch_size: d.batch_size,
            step_size: d.step_size,
            iterations: d.iterations,
            horizon_cap: d.horizon_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedReference {
    SafePath,
    ShortestPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceConfig {
    Named(NamedReference),
    /// Policy JSON plus the states on which divergence is measured.
    Policy { policy: PathBuf, states: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Divergence below which a run counts as converged.
    pub threshold: f64,
    pub record_wall_time: bool,
    pub start_state: Option<usize>,
    pub reference: Option<ReferenceConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            threshold: 0.1,
            record_wall_time: false,
            start_state: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// CVaR levels reported for every state.
    pub alphas: Vec<f64>,
    pub eval: EvalConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 1.0],
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Maximum allowed `|analytic - fd| / (1 + |fd|)`.
    pub threshold: f64,
    pub fd_step: f64,
    /// Logits are drawn uniformly from `[-theta_scale, theta_scale]`.
    pub theta_scale: f64,
    /// CVaR checks are skipped when the CDF is closer than this to the level.
    pub tie_margin: f64,
    pub max_states: usize,
    pub mean_semideviation_alpha: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            fd_step: 1e-5,
            theta_scale: 1.0,
            tie_margin: 1e-3,
            max_states: 6,
            mean_semideviation_alpha: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`, and resolves
    /// relative file paths against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text)?,
            _ => Self::from_toml(&text)?,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvironmentConfig::File { path } = &mut self.environment {
            fix(path);
        }
        if let Some(ReferenceConfig::Policy { policy, .. }) = &mut self.run.reference {
            fix(policy);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.risk.validate().map_err(cfg)?;
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        if !(self.run.threshold > 0.0) {
            return Err(Error::Config("run.threshold must be positive".into()));
        }
        if self.algorithm.kinds.is_empty() {
            return Err(Error::Config("algorithm.kinds must not be empty".into()));
        }
        if let EnvironmentConfig::File { path } = &self.environment {
            if !path.is_file() {
                return Err(Error::Config(format!("MDP file {} does not exist", path.display())));
            }
        }
        if let Some(ReferenceConfig::Policy { policy, states }) = &self.run.reference {
            if !policy.is_file() {
                return Err(Error::Config(format!(
                    "reference policy {} does not exist",
                    policy.display()
                )));
            }
            if states.is_empty() {
                return Err(Error::Config("reference states must not be empty".into()));
            }
        }
        if let Some(ReferenceConfig::Named(_)) = &self.run.reference {
            if !matches!(self.environment, EnvironmentConfig::Cliffwalk(_)) {
                return Err(Error::Config(
                    "named reference policies exist only for the cliffwalk".into(),
                ));
            }
        }
        if self.evaluate.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::Config("evaluate.alphas must lie in (0, 1]".into()));
        }
        self.evaluate.eval.validate()?;
        let g = &self.gradcheck;
        if !(g.threshold > 0.0 && g.fd_step > 0.0 && g.theta_scale >= 0.0 && g.tie_margin >= 0.0)
        {
            return Err(Error::Config("gradcheck settings must be positive".into()));
        }
        for &algo in &self.algorithm.kinds {
            match algo {
                Algorithm::Cdpg => self.cdpg_config(0, 0)?.validate()?,
                Algorithm::Spg => self.spg_config(0, 0)?.validate()?,
            }
        }
        Ok(())
    }

    /// Algorithms in canonical order without duplicates.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut kinds = self.algorithm.kinds.clone();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn start_state(&self) -> usize {
        self.run
            .start_state
            .unwrap_or_else(|| self.environment.default_start())
    }

    pub fn cdpg_config(&self, seed: u64, start: usize) -> Result<CdpgConfig> {
        let s = &self.algorithm.cdpg;
        Ok(CdpgConfig {
            step_size: s.step_size,
            iterations: s.iterations,
            trajectories_per_iter: s.trajectories_per_iter,
            grid: self.grid,
            eval: s.eval.clone(),
            start_state: start,
            rng_seed: seed,
            grad_norm_stop: s.grad_norm_stop,
            horizon_cap: s.horizon_cap,
            record_wall_time: self.run.record_wall_time,
        })
    }

    pub fn spg_config(&self, seed: u64, start: usize) -> Result<SpgConfig> {
        let RiskMeasure::Cvar { alpha } = self.risk else {
            return Err(Error::Config(format!(
                "spg only supports cvar, got {}",
                self.risk
            )));
        };
        let s = &self.algorithm.spg;
        Ok(SpgConfig {
            batch_size: s.batch_size,
            step_size: s.step_size,
            iterations: s.iterations,
            alpha,
            horizon_cap: s.horizon_cap,
            rng_seed: seed,
            start_state: start,
            record_wall_time: self.run.record_wall_time,
        })
    }

    pub fn reference(&self) -> Result<Option<Reference>> {
        Ok(match &self.run.reference {
            None => None,
            Some(ReferenceConfig::Named(NamedReference::SafePath)) => Some(Reference {
                policy: safe_path_policy(),
                states: SAFE_PATH_STATES.to_vec(),
            }),
            Some(ReferenceConfig::Named(NamedReference::ShortestPath)) => Some(Reference {
                policy: shortest_path_policy(),
                states: SHORTEST_PATH_STATES.to_vec(),
            }),
            Some(ReferenceConfig::Policy { policy, states }) => {
                let text = std::fs::read_to_string(policy)?;
                let policy: SoftmaxPolicy = serde_json::from_str(&text)?;
                Some(Reference {
                    policy,
                    states: states.clone(),
                })
            }
        })
    }
}
