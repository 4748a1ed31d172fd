//! Risk-sensitive categorical distributional policy gradients for tabular MDPs.
//!
//! Return distributions live on a fixed grid of atoms and are evaluated with
//! the projected distributional Bellman operator ([`eval`]). Their gradients
//! with respect to softmax logits ([`pg`]) feed closed-form risk gradients
//! ([`risk`]) that drive [`cdpg::cdpg_train`]. [`spg`] is the sample-based
//! baseline.

pub mod cdpg;
pub mod cli;
pub mod cliffwalk;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod history;
pub mod mdp;
pub mod measure;
pub mod pg;
pub mod risk;
pub mod spg;

pub use cdpg::{cdpg_train, CdpgConfig};
pub use error::{Error, Result};
pub use eval::{evaluate_policy, state_distribution, EvalConfig, ReturnDistributionTable};
pub use history::{Reference, TrainingHistory};
pub use mdp::{SoftmaxPolicy, TabularMdp};
pub use measure::{CategoricalDistribution, SignedGradientMeasure, SupportGrid};
pub use risk::{risk_gradient, risk_value, RiskMeasure};
pub use spg::{spg_train, SpgConfig};
