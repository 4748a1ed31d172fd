//! Stochastic 3x3 Cliffwalk.
//!
//! Cells are numbered row-major from the top-left:
//!
//! ```text
//!   0 1 2
//!   3 4 5
//!   6 7 8
//! ```
//!
//! The agent starts in 6 and the goal is 8. Cell 7 is the cliff and cell 4,
//! directly above it, is slippery: entering it sends the agent over the edge
//! with probability `p_slip`. Falling costs `fall_cost` and restarts at 6.
//! Every other move costs `step_cost`; bumping into the border leaves the
//! agent in place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostTable, SoftmaxPolicy, TabularMdp};

pub const N_STATES: usize = 9;
pub const N_ACTIONS: usize = 4;
pub const START: usize = 6;
pub const GOAL: usize = 8;
pub const CLIFF: usize = 7;
pub const SLIPPERY: usize = 4;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// States along the detour through the top row, in visiting order.
pub const SAFE_PATH_STATES: [usize; 6] = [6, 3, 0, 1, 2, 5];
/// States along the route through the slippery cell, in visiting order.
pub const SHORTEST_PATH_STATES: [usize; 4] = [6, 3, 4, 5];

const SAFE_ACTIONS: [usize; N_STATES] = [RIGHT, RIGHT, DOWN, UP, RIGHT, DOWN, UP, UP, UP];
const SHORTEST_ACTIONS: [usize; N_STATES] = [RIGHT, RIGHT, DOWN, RIGHT, RIGHT, DOWN, UP, UP, UP];

/// Logit gap used for the reference policies; `exp(-50)` is below `2e-22`.
pub const REFERENCE_LOGIT_GAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliffwalkParams {
    pub p_slip: f64,
    pub fall_cost: f64,
    pub step_cost: f64,
    pub gamma: f64,
}

impl Default for CliffwalkParams {
    fn default() -> Self {
        Self {
            p_slip: 0.2,
            fall_cost: 30.0,
            step_cost: 10.0,
            gamma: 0.95,
        }
    }
}

impl CliffwalkParams {
    pub fn build(&self) -> Result<TabularMdp> {
        build_cliffwalk(self.p_slip, self.fall_cost, self.step_cost, self.gamma)
    }
}

fn neighbour(s: usize, a: usize) -> usize {
    let (row, col) = (s / 3, s % 3);
    let (row, col) = match a {
        UP if row > 0 => (row - 1, col),
        DOWN if row < 2 => (row + 1, col),
        LEFT if col > 0 => (row, col - 1),
        RIGHT if col < 2 => (row, col + 1),
        _ => (row, col),
    };
    row * 3 + col
}

pub fn build_cliffwalk(p_slip: f64, fall_cost: f64, step_cost: f64, gamma: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&p_slip) {
        return Err(Error::invalid(format!(
            "slip probability must lie in [0, 1], got {p_slip}"
        )));
    }
    let mut transition = vec![vec![vec![0.0; N_STATES]; N_ACTIONS]; N_STATES];
    let mut cost = vec![vec![vec![0.0; N_STATES]; N_ACTIONS]; N_STATES];
    for s in 0..N_STATES {
        for a in 0..N_ACTIONS {
            let (p, c) = (&mut transition[s][a], &mut cost[s][a]);
            if s == GOAL {
                p[GOAL] = 1.0;
                continue;
            }
            let target = neighbour(s, a);
            if target == CLIFF {
                p[START] = 1.0;
                c[START] = fall_cost;
            } else if target == SLIPPERY && s != SLIPPERY {
                p[START] += p_slip;
                c[START] = fall_cost;
                p[SLIPPERY] += 1.0 - p_slip;
                c[SLIPPERY] = step_cost;
            } else {
                p[target] = 1.0;
                c[target] = step_cost;
            }
        }
    }
    TabularMdp::new(transition, CostTable::PerTransition(cost), gamma, &[GOAL])
}

/// Near one-hot policy along the six-step detour.
pub fn safe_path_policy() -> SoftmaxPolicy {
    SoftmaxPolicy::deterministic(N_ACTIONS, &SAFE_ACTIONS, REFERENCE_LOGIT_GAP)
        .expect("static action table is valid")
}

/// Near one-hot policy along the four-step route past the cliff.
pub fn shortest_path_policy() -> SoftmaxPolicy {
    SoftmaxPolicy::deterministic(N_ACTIONS, &SHORTEST_ACTIONS, REFERENCE_LOGIT_GAP)
        .expect("static action table is valid")
}

/// Follows greedy actions and most-likely successors from `start`.
///
/// Stops at a terminal state or when a state repeats.
pub fn greedy_path(mdp: &TabularMdp, policy: &SoftmaxPolicy, start: usize) -> Vec<usize> {
    let mut path = vec![start];
    let mut s = start;
    while !mdp.is_terminal(s) {
        let a = policy.greedy_action(s);
        let row = mdp.transition_row(s, a);
        let next = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
        if path.contains(&next) {
            path.push(next);
            break;
        }
        path.push(next);
        s = next;
    }
    path
}
