//! Finite MDPs, tabular softmax policies, and trajectory sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::check_gamma;

const ROW_TOL: f64 = 1e-9;

/// Discounted cost MDP with finitely many states and actions.
///
/// Costs are indexed by the full transition `(s, a, s')`. They are still a
/// deterministic function of the transition; indexing by the successor lets
/// one action carry different costs for different outcomes (the Cliffwalk
/// fall costs more than an ordinary step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    cost: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
}

/// Cost table accepted on input: either `C(s, a)` or `C(s, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostTable {
    PerAction(Vec<Vec<f64>>),
    PerTransition(Vec<Vec<Vec<f64>>>),
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    terminals: Vec<usize>,
    transition: Vec<Vec<Vec<f64>>>,
    cost: CostTable,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        if f.transition.len() != f.n_states {
            return Err(Error::dim(format!(
                "n_states = {} but transition has {} rows",
                f.n_states,
                f.transition.len()
            )));
        }
        let mdp = TabularMdp::new(f.transition, f.cost, f.gamma, &f.terminals)?;
        if mdp.n_actions != f.n_actions {
            return Err(Error::dim(format!(
                "n_actions = {} but transition has {} actions",
                f.n_actions, mdp.n_actions
            )));
        }
        Ok(mdp)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let (ns, na) = (m.n_states, m.n_actions);
        let nested = |v: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| v[(s * na + a) * ns..(s * na + a + 1) * ns].to_vec())
                        .collect()
                })
                .collect()
        };
        let per_action = (0..ns * na).all(|sa| {
            let row = &m.cost[sa * ns..(sa + 1) * ns];
            row.iter().all(|c| *c == row[0])
        });
        let cost = if per_action {
            CostTable::PerAction(
                (0..ns)
                    .map(|s| (0..na).map(|a| m.cost[(s * na + a) * ns]).collect())
                    .collect(),
            )
        } else {
            CostTable::PerTransition(nested(&m.cost))
        };
        MdpFile {
            n_states: ns,
            n_actions: na,
            gamma: m.gamma,
            terminals: m.terminals(),
            transition: nested(&m.transition),
            cost,
        }
    }
}

impl TabularMdp {
    /// Builds and validates an MDP.
    ///
    /// Terminal states must self-loop with probability one at zero cost under
    /// every action.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        cost: CostTable,
        gamma: f64,
        terminals: &[usize],
    ) -> Result<Self> {
        check_gamma(gamma)?;
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::invalid("MDP needs at least one state"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::invalid("MDP needs at least one action"));
        }
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != n_actions {
                return Err(Error::dim(format!("state {s} has {} actions", rows.len())));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::dim(format!("P[{s}][{a}] has length {}", row.len())));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::invalid(format!("P[{s}][{a}] has a negative entry")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(Error::invalid(format!("P[{s}][{a}] sums to {total}")));
                }
                flat_p.extend_from_slice(row);
            }
        }

        let flat_c = match cost {
            CostTable::PerAction(c) => {
                if c.len() != n_states || c.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::dim("cost matrix must be n_states x n_actions"));
                }
                c.iter()
                    .flat_map(|r| r.iter().flat_map(|&v| std::iter::repeat_n(v, n_states)))
                    .collect::<Vec<_>>()
            }
            CostTable::PerTransition(c) => {
                let ok = c.len() == n_states
                    && c.iter()
                        .all(|r| r.len() == n_actions && r.iter().all(|x| x.len() == n_states));
                if !ok {
                    return Err(Error::dim(
                        "cost tensor must be n_states x n_actions x n_states",
                    ));
                }
                c.into_iter().flatten().flatten().collect()
            }
        };
        if flat_c.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }

        let mut terminal = vec![false; n_states];
        for &t in terminals {
            if t >= n_states {
                return Err(Error::invalid(format!("terminal state {t} out of range")));
            }
            terminal[t] = true;
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition: flat_p,
            cost: flat_c,
            gamma,
            terminal,
        };
        for t in mdp.terminals() {
            for a in 0..n_actions {
                if mdp.prob(t, a, t) != 1.0 || mdp.cost(t, a, t) != 0.0 {
                    return Err(Error::invalid(format!(
                        "terminal state {t} must self-loop with zero cost"
                    )));
                }
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    fn idx(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.idx(s, a) + next]
    }

    pub fn cost(&self, s: usize, a: usize, next: usize) -> f64 {
        self.cost[self.idx(s, a) + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let i = self.idx(s, a);
        &self.transition[i..i + self.n_states]
    }

    pub fn cost_row(&self, s: usize, a: usize) -> &[f64] {
        let i = self.idx(s, a);
        &self.cost[i..i + self.n_states]
    }

    /// `Σ_{s'} P(s'|s,a) C(s,a,s')`.
    pub fn expected_cost(&self, s: usize, a: usize) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(self.cost_row(s, a))
            .map(|(p, c)| p * c)
            .sum()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.terminal[s]).collect()
    }

    /// Smallest and largest cost over transitions with positive probability.
    pub fn cost_bounds(&self) -> (f64, f64) {
        self.transition
            .iter()
            .zip(&self.cost)
            .filter(|(p, _)| **p > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &c)| {
                (lo.min(c), hi.max(c))
            })
    }

    /// Range that any discounted return must fall in.
    pub fn return_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.cost_bounds();
        let scale = 1.0 / (1.0 - self.gamma);
        (lo.min(0.0) * scale, hi.max(0.0) * scale)
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "state {s} out of range for {} states",
                self.n_states
            )))
        }
    }

    /// Solves `(I - γ P_π) v = c_π` for the expected discounted cost of every
    /// state, with `v = 0` at terminals.
    pub fn expected_values(&self, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
        policy.check_compatible(self)?;
        let n = self.n_states;
        let mut lhs = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for s in 0..n {
            if self.terminal[s] {
                continue;
            }
            let pi = policy.action_probs(s);
            for (a, &pa) in pi.iter().enumerate() {
                rhs[s] += pa * self.expected_cost(s, a);
                for (next, &p) in self.transition_row(s, a).iter().enumerate() {
                    lhs[(s, next)] -= self.gamma * pa * p;
                }
            }
        }
        let v = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("policy value system is singular"))?;
        Ok(v.iter().copied().collect())
    }

    /// `Q(s, a) = Σ_{s'} P(s'|s,a) (C(s,a,s') + γ v(s'))`, zero at terminals.
    pub fn q_values(&self, policy: &SoftmaxPolicy) -> Result<Vec<Vec<f64>>> {
        let v = self.expected_values(policy)?;
        Ok((0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        if self.terminal[s] {
                            return 0.0;
                        }
                        self.transition_row(s, a)
                            .iter()
                            .zip(self.cost_row(s, a))
                            .enumerate()
                            .map(|(next, (p, c))| p * (c + self.gamma * v[next]))
                            .sum()
                    })
                    .collect()
            })
            .collect())
    }
}

/// Tabular softmax policy `π(a|s) ∝ exp(θ[s][a])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    theta: Vec<Vec<f64>>,
}

impl TryFrom<PolicyFile> for SoftmaxPolicy {
    type Error = Error;

    fn try_from(f: PolicyFile) -> Result<Self> {
        SoftmaxPolicy::from_rows(f.theta)
    }
}

impl From<SoftmaxPolicy> for PolicyFile {
    fn from(p: SoftmaxPolicy) -> Self {
        PolicyFile {
            theta: p.theta.chunks(p.n_actions).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl SoftmaxPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            theta: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_theta(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || theta.len() != n_states * n_actions {
            return Err(Error::dim(format!(
                "theta of length {} does not fit {n_states} x {n_actions}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta must be finite"));
        }
        Ok(Self {
            n_states,
            n_actions,
            theta,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::dim("theta rows have different lengths"));
        }
        Self::from_theta(n_states, n_actions, rows.into_iter().flatten().collect())
    }

    /// Near-deterministic policy: `θ[s][actions[s]] = logit_gap`, zero elsewhere.
    pub fn deterministic(n_actions: usize, actions: &[usize], logit_gap: f64) -> Result<Self> {
        let mut p = Self::uniform(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action {a} out of range")));
            }
            p.theta[s * n_actions + a] = logit_gap;
        }
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn param_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states == mdp.n_states() && self.n_actions == mdp.n_actions() {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "policy is {}x{} but MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )))
        }
    }

    /// `θ ← θ - step * grad`.
    pub fn descend(&mut self, grad: &[f64], step: f64) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::dim("gradient length differs from parameter count"));
        }
        for (t, g) in self.theta.iter_mut().zip(grad) {
            *t -= step * g;
        }
        Ok(())
    }

    pub fn action_probs_into(&self, s: usize, out: &mut [f64]) {
        let row = &self.theta[s * self.n_actions..(s + 1) * self.n_actions];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &t) in out.iter_mut().zip(row) {
            *o = (t - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        self.action_probs_into(s, &mut out);
        out
    }

    /// `∂π(a|s)/∂θ` as a flat parameter vector; nonzero only in row `s`.
    pub fn policy_grad(&self, s: usize, a: usize) -> Vec<f64> {
        let pi = self.action_probs(s);
        let mut g = vec![0.0; self.theta.len()];
        for (b, &pb) in pi.iter().enumerate() {
            let indicator = if a == b { 1.0 } else { 0.0 };
            g[self.param_index(s, b)] = pi[a] * (indicator - pb);
        }
        g
    }

    /// `∇_θ log π(a|s)`, accumulated into `out`.
    pub fn add_score(&self, s: usize, a: usize, out: &mut [f64]) {
        let pi = self.action_probs(s);
        for (b, &pb) in pi.iter().enumerate() {
            let indicator = if a == b { 1.0 } else { 0.0 };
            out[self.param_index(s, b)] += indicator - pb;
        }
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        let row = &self.theta[s * self.n_actions..(s + 1) * self.n_actions];
        row.iter()
            .enumerate()
            .fold(0, |best, (a, &t)| if t > row[best] { a } else { best })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: usize,
    /// Set when the horizon cap stopped the rollout before a terminal state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Visited states `s_0, …, s_{|τ|}` including the final one.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps
            .iter()
            .map(|s| s.state)
            .chain(std::iter::once(self.final_state))
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.steps
            .iter()
            .rev()
            .fold(0.0, |acc, step| step.cost + gamma * acc)
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u just above the total; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Rolls out `policy` from `start` until a terminal state or `horizon_cap` steps.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    start: usize,
    horizon_cap: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    policy.check_compatible(mdp)?;
    mdp.check_state(start)?;
    if horizon_cap == 0 {
        return Err(Error::invalid("horizon cap must be at least 1"));
    }
    let mut steps = Vec::new();
    let mut state = start;
    let mut pi = vec![0.0; mdp.n_actions()];
    while !mdp.is_terminal(state) {
        if steps.len() == horizon_cap {
            return Ok(Trajectory {
                steps,
                final_state: state,
                truncated: true,
            });
        }
        policy.action_probs_into(state, &mut pi);
        let action = sample_index(&pi, rng.random::<f64>());
        let next = sample_index(mdp.transition_row(state, action), rng.random::<f64>());
        steps.push(Step {
            state,
            action,
            cost: mdp.cost(state, action, next),
        });
        state = next;
    }
    Ok(Trajectory {
        steps,
        final_state: state,
        truncated: false,
    })
}

/// `sqrt(Σ_t Σ_a |π1(a|s_t) - π2(a|s_t)|²)` over the given states.
pub fn policy_divergence(
    p1: &SoftmaxPolicy,
    p2: &SoftmaxPolicy,
    states: &[usize],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::invalid("policy divergence needs at least one state"));
    }
    if p1.n_states != p2.n_states || p1.n_actions != p2.n_actions {
        return Err(Error::dim("policies have different shapes"));
    }
    if let Some(&s) = states.iter().find(|&&s| s >= p1.n_states) {
        return Err(Error::invalid(format!("state {s} out of range")));
    }
    let total: f64 = states
        .iter()
        .map(|&s| {
            p1.action_probs(s)
                .iter()
                .zip(p2.action_probs(s))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total.sqrt())
}

/// Parameters of a random MDP whose last state is the only terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMdpParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Probability that any non-terminal step ends the episode.
    pub terminal_prob: f64,
    /// Costs are drawn uniformly from `[0, cost_max]` per transition.
    pub cost_max: f64,
    pub seed: u64,
}

impl Default for RandomMdpParams {
    fn default() -> Self {
        Self {
            n_states: 3,
            n_actions: 2,
            gamma: 0.9,
            terminal_prob: 0.5,
            cost_max: 1.0,
            seed: 0,
        }
    }
}

impl RandomMdpParams {
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TabularMdp> {
        random_mdp(self, rng)
    }
}

pub fn random_mdp<R: Rng + ?Sized>(params: &RandomMdpParams, rng: &mut R) -> Result<TabularMdp> {
    let &RandomMdpParams {
        n_states: ns,
        n_actions: na,
        terminal_prob,
        cost_max,
        ..
    } = params;
    if ns == 0 || na == 0 {
        return Err(Error::invalid("random MDP needs at least one state and action"));
    }
    if !(0.0..=1.0).contains(&terminal_prob) {
        return Err(Error::invalid(format!(
            "terminal probability must lie in [0, 1], got {terminal_prob}"
        )));
    }
    if !(cost_max >= 0.0 && cost_max.is_finite()) {
        return Err(Error::invalid("cost_max must be finite and non-negative"));
    }
    let goal = ns - 1;
    let mut transition = vec![vec![vec![0.0; ns]; na]; ns];
    let mut cost = vec![vec![vec![0.0; ns]; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let (p, c) = (&mut transition[s][a], &mut cost[s][a]);
            if s == goal {
                p[goal] = 1.0;
                continue;
            }
            let w: Vec<f64> = (0..goal).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            for (next, wi) in w.iter().enumerate() {
                p[next] = (1.0 - terminal_prob) * wi / total;
            }
            p[goal] = terminal_prob;
            for ci in c.iter_mut() {
                *ci = cost_max * rng.random::<f64>();
            }
        }
    }
    TabularMdp::new(transition, CostTable::PerTransition(cost), params.gamma, &[goal])
}
