//! Sample-based CVaR policy gradient (likelihood-ratio estimator).
//!
//! A batch of `m` returns gives the empirical VaR `q̂`, the
//! `⌈(1-α)m⌉`-th order statistic, and the gradient estimate
//!
//! ```text
//! (1 / (m α)) Σ_j score(τ_j) (R_j - q̂) 1{R_j ≥ q̂},   score(τ) = Σ_t ∇_θ log π(a_t|s_t)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{Clock, IterationRecord, Reference, TrainingHistory};
use crate::mdp::{sample_trajectory, SoftmaxPolicy, TabularMdp, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpgConfig {
    pub batch_size: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub horizon_cap: usize,
    pub rng_seed: u64,
    pub start_state: usize,
    pub record_wall_time: bool,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            step_size: 0.01,
            iterations: 2000,
            alpha: 0.1,
            horizon_cap: 200,
            rng_seed: 0,
            start_state: crate::cliffwalk::START,
            record_wall_time: false,
        }
    }
}

impl SpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("spg.batch_size must be at least 2".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("spg.step_size must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "spg.alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.horizon_cap < 1 {
            return Err(Error::Config("spg.horizon_cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgEstimate {
    pub gradient: Vec<f64>,
    /// Empirical VaR of the batch.
    pub var: f64,
    /// Empirical CVaR of the batch, `q̂ + (1/(mα)) Σ_j (R_j - q̂)_+`.
    pub cvar: f64,
    /// All returns were equal, so the gradient is zero by convention.
    pub degenerate: bool,
}

impl SpgEstimate {
    pub fn norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Rank of the empirical VaR among `m` sorted returns, 1-based.
pub fn var_rank(m: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
}

/// Estimate from an already sampled batch.
pub fn spg_estimate(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    batch: &[Trajectory],
    alpha: f64,
) -> Result<SpgEstimate> {
    if batch.len() < 2 {
        return Err(Error::invalid("SPG needs at least two trajectories"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    policy.check_compatible(mdp)?;
    let m = batch.len();
    let returns: Vec<f64> = batch.iter().map(|t| t.discounted_return(mdp.gamma())).collect();
    let mut sorted = returns.clone();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[var_rank(m, alpha) - 1];
    let scale = 1.0 / (m as f64 * alpha);
    let cvar = q + scale * returns.iter().map(|r| (r - q).max(0.0)).sum::<f64>();

    let mut gradient = vec![0.0; policy.n_params()];
    let degenerate = sorted[0] == sorted[m - 1];
    if !degenerate {
        let mut score = vec![0.0; policy.n_params()];
        for (t, &r) in batch.iter().zip(&returns) {
            if r < q {
                continue;
            }
            score.iter_mut().for_each(|x| *x = 0.0);
            for step in &t.steps {
                policy.add_score(step.state, step.action, &mut score);
            }
            let w = scale * (r - q);
            for (g, s) in gradient.iter_mut().zip(&score) {
                *g += w * s;
            }
        }
    }
    Ok(SpgEstimate {
        gradient,
        var: q,
        cvar,
        degenerate,
    })
}

/// Samples `config.batch_size` trajectories and returns the CVaR gradient estimate.
pub fn spg_cvar_gradient<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    config: &SpgConfig,
    rng: &mut R,
) -> Result<SpgEstimate> {
    config.validate()?;
    let batch = (0..config.batch_size)
        .map(|_| sample_trajectory(mdp, policy, config.start_state, config.horizon_cap, rng))
        .collect::<Result<Vec<_>>>()?;
    spg_estimate(mdp, policy, &batch, config.alpha)
}

pub fn spg_train(
    mdp: &TabularMdp,
    config: &SpgConfig,
    reference: Option<&Reference>,
) -> Result<(SoftmaxPolicy, TrainingHistory)> {
    let init = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    spg_train_from(mdp, config, reference, init)
}

pub fn spg_train_from(
    mdp: &TabularMdp,
    config: &SpgConfig,
    reference: Option<&Reference>,
    initial: SoftmaxPolicy,
) -> Result<(SoftmaxPolicy, TrainingHistory)> {
    config.validate()?;
    mdp.check_state(config.start_state)?;
    initial.check_compatible(mdp)?;
    if let Some(r) = reference {
        r.policy.check_compatible(mdp)?;
        r.divergence(&initial)?;
    }
    let mut policy = initial;
    let mut history = TrainingHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let clock = Clock::new(config.record_wall_time);
    for iteration in 1..=config.iterations {
        let est = spg_cvar_gradient(mdp, &policy, config, &mut rng)?;
        if est.degenerate {
            history
                .warnings
                .push((iteration, "all returns equal; zero gradient".into()));
        }
        policy.descend(&est.gradient, config.step_size)?;
        history.records.push(IterationRecord {
            iteration,
            cum_trajectories: iteration * config.batch_size,
            eval_sweeps: 0,
            risk_value: est.cvar,
            grad_norm: est.norm(),
            divergence: reference.map(|r| r.divergence(&policy)).transpose()?,
            wall_time_ms: clock.elapsed_ms(),
        });
    }
    Ok((policy, history))
}
