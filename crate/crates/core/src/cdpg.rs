//! Categorical distributional policy gradient training.
//!
//! Each iteration evaluates the current policy with the projected
//! distributional Bellman operator (warm-started from the previous table),
//! estimates `∇_θ η^{s_0}` from sampled trajectories, maps it to a risk
//! gradient and takes a plain gradient-descent step on the softmax logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    evaluate_policy_td, evaluate_with_plan, fixed_with_plan, grid_coverage_warning,
    state_distribution, BackupPlan, EvalConfig, EvalMode, ReturnDistributionTable,
};
use crate::history::{Clock, IterationRecord, Reference, TrainingHistory};
use crate::mdp::{sample_trajectory, SoftmaxPolicy, TabularMdp};
use crate::measure::SupportGrid;
use crate::pg::{average_gradient, MapCache};
use crate::risk::{risk_gradient, risk_value, RiskMeasure};

/// Stream used by the sample-based critic so that it never perturbs the
/// trajectory stream.
pub(crate) const TD_STREAM: u64 = 1;

/// `[0, 600]` with unit spacing: 600 is the largest Cliffwalk return
/// (`c_max / (1 - γ)`), so no mass is clamped at the upper edge. With a
/// narrower grid the uniform policy piles more than 10% of its mass on the top
/// atom and the CVaR gradient vanishes.
pub fn default_training_grid() -> SupportGrid {
    SupportGrid::new(0.0, 600.0, 601).expect("static grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdpgConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub trajectories_per_iter: usize,
    pub grid: SupportGrid,
    pub eval: EvalConfig,
    pub start_state: usize,
    pub rng_seed: u64,
    /// Stop once the risk-gradient norm falls below this; zero disables.
    pub grad_norm_stop: f64,
    pub horizon_cap: usize,
    pub record_wall_time: bool,
}

impl Default for CdpgConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            iterations: 2000,
            trajectories_per_iter: 1,
            grid: default_training_grid(),
            eval: EvalConfig::default(),
            start_state: crate::cliffwalk::START,
            rng_seed: 0,
            grad_norm_stop: 0.0,
            horizon_cap: 200,
            record_wall_time: false,
        }
    }
}

impl CdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("cdpg.step_size must be positive".into()));
        }
        if self.trajectories_per_iter < 1 {
            return Err(Error::Config("cdpg.trajectories_per_iter must be at least 1".into()));
        }
        if !(self.grad_norm_stop >= 0.0) {
            return Err(Error::Config("cdpg.grad_norm_stop must be non-negative".into()));
        }
        if self.horizon_cap < 1 {
            return Err(Error::Config("cdpg.horizon_cap must be at least 1".into()));
        }
        self.eval.validate()
    }
}

/// Trains from the uniform policy.
pub fn cdpg_train(
    mdp: &TabularMdp,
    spec: &RiskMeasure,
    config: &CdpgConfig,
    reference: Option<&Reference>,
) -> Result<(SoftmaxPolicy, TrainingHistory)> {
    let init = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    cdpg_train_from(mdp, spec, config, reference, init)
}

pub fn cdpg_train_from(
    mdp: &TabularMdp,
    spec: &RiskMeasure,
    config: &CdpgConfig,
    reference: Option<&Reference>,
    initial: SoftmaxPolicy,
) -> Result<(SoftmaxPolicy, TrainingHistory)> {
    config.validate()?;
    spec.validate()?;
    mdp.check_state(config.start_state)?;
    initial.check_compatible(mdp)?;
    if let Some(r) = reference {
        r.policy.check_compatible(mdp)?;
        r.divergence(&initial)?;
    }

    let grid = config.grid;
    let mut policy = initial;
    let mut history = TrainingHistory::default();
    if let Some(w) = grid_coverage_warning(mdp, &grid) {
        log::warn!("{w}");
        history.warnings.push((0, w));
    }

    let plan = BackupPlan::new(mdp, grid)?;
    let mut cache = MapCache::new(grid, mdp.gamma());
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut td_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    td_rng.set_stream(TD_STREAM);
    let clock = Clock::new(config.record_wall_time);
    let mut table: Option<ReturnDistributionTable> = None;
    let mut cum_trajectories = 0;

    for iteration in 1..=config.iterations {
        let trajectories = (0..config.trajectories_per_iter)
            .map(|_| {
                sample_trajectory(mdp, &policy, config.start_state, config.horizon_cap, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        cum_trajectories += trajectories.len();

        let warm = table.as_ref().filter(|_| config.eval.warm_start);
        let longest = trajectories.iter().map(|t| t.len()).max().unwrap_or(0);
        let outcome = match config.eval.mode {
            EvalMode::ModelBased => {
                match config.eval.schedule.fixed_sweeps(grid.n_atoms(), longest) {
                    Some(k) => fixed_with_plan(&plan, mdp, &policy, k, warm)?,
                    None => evaluate_with_plan(&plan, mdp, &policy, &config.eval, warm)?,
                }
            }
            EvalMode::SampleBased => {
                evaluate_policy_td(mdp, &policy, grid, &config.eval, warm, &mut td_rng)?
            }
        };
        let eval_sweeps = outcome.sweeps;
        let current = outcome.table;

        let measure = average_gradient(&mut cache, mdp, &trajectories, &current, &policy)?;
        let dist = state_distribution(&current, &policy, config.start_state)?;
        let value = risk_value(&dist, spec)?;
        let grad = risk_gradient(&measure, &dist, spec)?;
        if let Some(w) = &grad.warning {
            log::debug!("iteration {iteration}: {w}");
            history.warnings.push((iteration, w.to_string()));
        }
        let grad_norm = grad.norm();
        let stop = grad_norm < config.grad_norm_stop;
        if !stop {
            policy.descend(&grad.gradient, config.step_size)?;
        }
        history.records.push(IterationRecord {
            iteration,
            cum_trajectories,
            eval_sweeps,
            risk_value: value,
            grad_norm,
            divergence: reference.map(|r| r.divergence(&policy)).transpose()?,
            wall_time_ms: clock.elapsed_ms(),
        });
        table = Some(current);
        if stop {
            break;
        }
    }
    Ok((policy, history))
}
