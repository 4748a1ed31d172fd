//! Coherent risk measures of categorical return distributions and their
//! gradients with respect to the policy parameters.
//!
//! Returns are costs, so risk lives in the upper tail: CVaR at level `α` is
//! the mean of the worst `α` fraction of outcomes, and `α = 1` recovers the
//! expectation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{tail_index, CategoricalDistribution, SignedGradientMeasure};

/// Distance from the quantile level within which the CDF counts as tied.
pub const QUANTILE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RiskMeasure {
    Cvar { alpha: f64 },
    Expectation,
    MeanSemideviation { alpha: f64 },
}

impl std::fmt::Display for RiskMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RiskMeasure::Cvar { alpha } => write!(f, "cvar(alpha={alpha})"),
            RiskMeasure::Expectation => write!(f, "expectation"),
            RiskMeasure::MeanSemideviation { alpha } => {
                write!(f, "mean-semideviation(alpha={alpha})")
            }
        }
    }
}

impl RiskMeasure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskMeasure::Cvar { alpha } if !(alpha > 0.0 && alpha <= 1.0) => Err(Error::invalid(
                format!("CVaR alpha must lie in (0, 1], got {alpha}"),
            )),
            RiskMeasure::MeanSemideviation { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::invalid(format!(
                    "mean-semideviation alpha must lie in [0, 1], got {alpha}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Index and value of the value-at-risk atom for CVaR at `alpha`.
fn var_atom(dist: &CategoricalDistribution, cdf: &[f64], alpha: f64) -> (usize, f64) {
    let j = tail_index(cdf, 1.0 - alpha);
    (j, dist.grid().atom(j))
}

fn semideviation(dist: &CategoricalDistribution, mean: f64) -> f64 {
    let grid = dist.grid();
    dist.probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| p * (grid.atom(i) - mean).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn risk_value(dist: &CategoricalDistribution, spec: &RiskMeasure) -> Result<f64> {
    spec.validate()?;
    let grid = dist.grid();
    Ok(match *spec {
        RiskMeasure::Expectation => dist.mean(),
        RiskMeasure::Cvar { alpha } => {
            // the infimum over t is attained at the VaR atom
            let (_, q) = var_atom(dist, &dist.cdf(), alpha);
            let excess: f64 = dist
                .probs()
                .iter()
                .enumerate()
                .map(|(i, &p)| p * (grid.atom(i) - q).max(0.0))
                .sum();
            q + excess / alpha
        }
        RiskMeasure::MeanSemideviation { alpha } => {
            let mean = dist.mean();
            mean + alpha * semideviation(dist, mean)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "warning", rename_all = "kebab-case")]
pub enum RiskWarning {
    /// The CDF sits on the quantile level; CVaR is not differentiable here.
    QuantileTie { atom: usize, level: f64, cdf: f64 },
    /// No mass above the mean; the semideviation term was dropped.
    ZeroSemideviation,
}

impl std::fmt::Display for RiskWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RiskWarning::QuantileTie { atom, level, cdf } => write!(
                f,
                "quantile tie at atom {atom}: cdf {cdf} vs level {level}"
            ),
            RiskWarning::ZeroSemideviation => write!(f, "zero semideviation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskGradient {
    pub gradient: Vec<f64>,
    pub warning: Option<RiskWarning>,
}

impl RiskGradient {
    pub fn norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Chain rule from `∇_θ p_i` to `∇_θ ρ` for the three closed-form measures.
pub fn risk_gradient(
    grad: &SignedGradientMeasure,
    dist: &CategoricalDistribution,
    spec: &RiskMeasure,
) -> Result<RiskGradient> {
    spec.validate()?;
    grad.grid().ensure_same(dist.grid())?;
    let grid = dist.grid();
    let atoms = grid.atoms();
    let mean_grads = grad.means();

    match *spec {
        RiskMeasure::Expectation => Ok(RiskGradient {
            gradient: mean_grads,
            warning: None,
        }),
        RiskMeasure::Cvar { alpha } => {
            let cdf = dist.cdf();
            let level = 1.0 - alpha;
            let (j, q) = var_atom(dist, &cdf, alpha);
            let mut warning = None;
            // at alpha = 1 every choice of threshold gives the mean
            if alpha < 1.0 {
                let below = if j == 0 { 0.0 } else { cdf[j - 1] };
                for (atom, f) in [(j, cdf[j]), (j.saturating_sub(1), below)] {
                    if (f - level).abs() <= QUANTILE_TIE_TOL {
                        warning = Some(RiskWarning::QuantileTie {
                            atom,
                            level,
                            cdf: f,
                        });
                        break;
                    }
                }
            }
            let weights: Vec<f64> = atoms
                .iter()
                .map(|&z| if z > q { (z - q) / alpha } else { 0.0 })
                .collect();
            let gradient = grad
                .rows()
                .map(|row| row.iter().zip(&weights).map(|(g, w)| g * w).sum())
                .collect();
            Ok(RiskGradient { gradient, warning })
        }
        RiskMeasure::MeanSemideviation { alpha } => {
            let mean = dist.mean();
            let sd = semideviation(dist, mean);
            if sd == 0.0 {
                return Ok(RiskGradient {
                    gradient: mean_grads,
                    warning: Some(RiskWarning::ZeroSemideviation),
                });
            }
            // d/dθ sqrt(Σ p_i e_i²) with e_i = (z_i - μ)_+ and ∂e_i/∂θ = -∇μ above the mean
            let excess: Vec<f64> = atoms.iter().map(|&z| (z - mean).max(0.0)).collect();
            let gradient = grad
                .rows()
                .zip(&mean_grads)
                .map(|(row, &dmu)| {
                    let inner: f64 = row
                        .iter()
                        .zip(dist.probs())
                        .zip(&excess)
                        .map(|((dp, p), e)| e * (0.5 * dp * e - p * dmu))
                        .sum();
                    dmu + alpha * inner / sd
                })
                .collect();
            Ok(RiskGradient {
                gradient,
                warning: None,
            })
        }
    }
}

/// `L² (z_max - z_min)² / ((1 - γ) ε²)` before rounding.
pub fn support_size_bound(
    eps_opt: f64,
    l1_lipschitz: f64,
    z_min: f64,
    z_max: f64,
    gamma: f64,
) -> Result<f64> {
    if !(eps_opt > 0.0) {
        return Err(Error::invalid("eps_opt must be positive"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1)"));
    }
    if !(z_max > z_min) {
        return Err(Error::invalid("z_max must exceed z_min"));
    }
    let span = z_max - z_min;
    Ok(l1_lipschitz.powi(2) * span * span / ((1.0 - gamma) * eps_opt * eps_opt))
}

/// Number of atoms that guarantees `eps_opt`-optimality, never below 2.
///
/// For CVaR pass `l1_lipschitz = 1 / α`.
pub fn support_size_for_accuracy(
    eps_opt: f64,
    l1_lipschitz: f64,
    z_min: f64,
    z_max: f64,
    gamma: f64,
) -> Result<usize> {
    let bound = support_size_bound(eps_opt, l1_lipschitz, z_min, z_max, gamma)?;
    Ok((bound.ceil() as usize).max(2))
}
