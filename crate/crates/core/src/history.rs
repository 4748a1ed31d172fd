use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::mdp::{policy_divergence, SoftmaxPolicy};

pub const CSV_HEADER: [&str; 7] = [
    "iteration",
    "cum_trajectories",
    "eval_sweeps",
    "risk_value",
    "grad_norm",
    "divergence",
    "wall_time_ms",
];

/// One row of a training history.
///
/// `divergence` is measured on the policy after this iteration's update and
/// `cum_trajectories` counts every trajectory sampled up to and including it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cum_trajectories: usize,
    pub eval_sweeps: usize,
    pub risk_value: f64,
    pub grad_norm: f64,
    pub divergence: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub records: Vec<IterationRecord>,
    /// Non-fatal warnings as `(iteration, message)`.
    pub warnings: Vec<(usize, String)>,
}

impl TrainingHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.cum_trajectories.to_string(),
                r.eval_sweeps.to_string(),
                r.risk_value.to_string(),
                r.grad_norm.to_string(),
                r.divergence.map(|d| d.to_string()).unwrap_or_default(),
                r.wall_time_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// First record whose divergence drops below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<&IterationRecord> {
        self.records
            .iter()
            .find(|r| r.divergence.is_some_and(|d| d < threshold))
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Target policy and the states on which divergence to it is measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub policy: SoftmaxPolicy,
    pub states: Vec<usize>,
}

impl Reference {
    pub fn divergence(&self, policy: &SoftmaxPolicy) -> Result<f64> {
        policy_divergence(policy, &self.policy, &self.states)
    }
}

/// Wall clock for history rows; reads as zero when disabled so that
/// histories stay byte-identical across runs.
pub(crate) struct Clock(Option<Instant>);

impl Clock {
    pub(crate) fn new(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    pub(crate) fn elapsed_ms(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3)
    }
}
