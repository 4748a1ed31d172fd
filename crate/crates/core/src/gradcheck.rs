//! Analytic risk gradients versus central finite differences of the
//! evaluated risk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, state_distribution, EvalConfig};
use crate::mdp::{SoftmaxPolicy, TabularMdp};
use crate::measure::{tail_index, SupportGrid};
use crate::pg::stationary_gradient_measure;
use crate::risk::{risk_gradient, risk_value, RiskMeasure};

/// Stream of the seed's generator used for the random logits.
const THETA_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub fd_step: f64,
    pub theta_scale: f64,
    pub tie_margin: f64,
    pub measures: Vec<RiskMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureCheck {
    pub measure: String,
    /// `max_j |analytic_j - fd_j| / (1 + |fd_j|)`; absent when skipped.
    pub max_rel_error: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub checks: Vec<MeasureCheck>,
}

impl InstanceReport {
    pub fn max_error(&self) -> f64 {
        self.checks
            .iter()
            .filter_map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Tight evaluation so that finite differences see the fixed point, not the
/// stopping rule.
pub fn tight_eval() -> EvalConfig {
    EvalConfig {
        max_sweeps: 100_000,
        tolerance: 1e-14,
        warm_start: false,
        early_stop_patience: 10,
        ..EvalConfig::default()
    }
}

/// Logits drawn uniformly from `[-scale, scale]`.
pub fn random_policy(n_states: usize, n_actions: usize, scale: f64, seed: u64) -> SoftmaxPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(THETA_STREAM);
    let theta = (0..n_states * n_actions)
        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    SoftmaxPolicy::from_theta(n_states, n_actions, theta).expect("shape matches")
}

/// Smallest gap between the CVaR level and the CDF on either side of the
/// quantile atom.
pub fn quantile_margin(cdf: &[f64], alpha: f64) -> f64 {
    let level = 1.0 - alpha;
    let j = tail_index(cdf, level);
    let below = if j == 0 { f64::INFINITY } else { level - cdf[j - 1] };
    (cdf[j] - level).min(below)
}

fn start_risk(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    start: usize,
    spec: &RiskMeasure,
) -> Result<f64> {
    let out = evaluate_policy(mdp, policy, grid, &tight_eval(), None)?;
    risk_value(&state_distribution(&out.table, policy, start)?, spec)
}

/// Checks every measure in `settings` at one random policy.
///
/// `corrupt` perturbs the analytic gradient before comparison; it exists so
/// that tests can confirm a broken gradient is caught.
pub fn check_instance(
    mdp: &TabularMdp,
    grid: SupportGrid,
    start: usize,
    seed: u64,
    settings: &GradcheckSettings,
    corrupt: Option<fn(&mut [f64])>,
) -> Result<InstanceReport> {
    mdp.check_state(start)?;
    let policy = random_policy(mdp.n_states(), mdp.n_actions(), settings.theta_scale, seed);
    let base = evaluate_policy(mdp, &policy, grid, &tight_eval(), None)?;
    let dist = state_distribution(&base.table, &policy, start)?;
    let measure = stationary_gradient_measure(mdp, &policy, &base.table, start, 1e-15, 100_000)?;
    let h = settings.fd_step;

    let mut checks = Vec::new();
    for spec in &settings.measures {
        spec.validate()?;
        if let RiskMeasure::Cvar { alpha } = *spec {
            let margin = quantile_margin(&dist.cdf(), alpha);
            if alpha < 1.0 && margin < settings.tie_margin {
                checks.push(MeasureCheck {
                    measure: spec.to_string(),
                    max_rel_error: None,
                    skipped: Some(format!("quantile margin {margin:.2e}")),
                });
                continue;
            }
        }
        let mut analytic = risk_gradient(&measure, &dist, spec)?.gradient;
        if let Some(f) = corrupt {
            f(&mut analytic);
        }
        let mut worst: f64 = 0.0;
        for (j, a) in analytic.iter().enumerate() {
            let shifted = |delta: f64| -> Result<f64> {
                let mut theta = policy.theta().to_vec();
                theta[j] += delta;
                let p = SoftmaxPolicy::from_theta(mdp.n_states(), mdp.n_actions(), theta)?;
                start_risk(mdp, &p, grid, start, spec)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            worst = worst.max((a - fd).abs() / (1.0 + fd.abs()));
        }
        checks.push(MeasureCheck {
            measure: spec.to_string(),
            max_rel_error: Some(worst),
            skipped: None,
        });
    }
    Ok(InstanceReport {
        seed,
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        checks,
    })
}

pub(crate) fn ensure_small(mdp: &TabularMdp, max_states: usize) -> Result<()> {
    if mdp.n_states() > max_states {
        return Err(Error::Config(format!(
            "gradient checks need at most {max_states} states, got {}",
            mdp.n_states()
        )));
    }
    Ok(())
}
