//! Gradients of categorical return distributions with respect to a tabular
//! softmax policy.
//!
//! For a trajectory `s_0, c_0, s_1, c_1, …, s_T` the per-trajectory gradient
//! measure is
//!
//! ```text
//! g(s_0) + Σ_{t=1}^{T} B_0 B_1 ⋯ B_{t-1} g(s_t),    B_k = Π_C (b_{c_k,γ})_#
//! g(s)   = Σ_a ∇_θ π(a|s) η^{(s,a)}
//! ```
//!
//! Each `B_k` is linear, so the sum is accumulated back to front as
//! `g(s_0) + B_0 (g(s_1) + B_1 (g(s_2) + ⋯))`. The projection is applied
//! after every single step, never once at the end.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::ReturnDistributionTable;
use crate::mdp::{sample_trajectory, SoftmaxPolicy, TabularMdp, Trajectory};
use crate::measure::{PushforwardMap, SignedGradientMeasure, SupportGrid};

/// Pushforward maps keyed by cost, built on first use.
#[derive(Debug, Clone)]
pub struct MapCache {
    grid: SupportGrid,
    gamma: f64,
    maps: HashMap<u64, PushforwardMap>,
}

impl MapCache {
    pub fn new(grid: SupportGrid, gamma: f64) -> Self {
        Self {
            grid,
            gamma,
            maps: HashMap::new(),
        }
    }

    pub fn get(&mut self, cost: f64) -> Result<&PushforwardMap> {
        let key = cost.to_bits();
        if !self.maps.contains_key(&key) {
            self.maps
                .insert(key, PushforwardMap::new(self.grid, cost, self.gamma)?);
        }
        Ok(&self.maps[&key])
    }
}

fn check_shapes(
    mdp: &TabularMdp,
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
) -> Result<()> {
    policy.check_compatible(mdp)?;
    if table.n_states() != mdp.n_states() || table.n_actions() != mdp.n_actions() {
        return Err(Error::dim("return table does not match the MDP"));
    }
    Ok(())
}

/// Adds `g(s)` into the rows of parameter block `s`.
///
/// Row `(s, a')` of `Σ_a ∇π(a|s) η^{(s,a)}` simplifies to
/// `π(a'|s) (η^{(s,a')} - η^s)`.
fn add_local_gradient(
    out: &mut SignedGradientMeasure,
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
    s: usize,
    scale: f64,
    pi: &mut [f64],
    mix: &mut [f64],
) {
    policy.action_probs_into(s, pi);
    mix.iter_mut().for_each(|m| *m = 0.0);
    for (a, &pa) in pi.iter().enumerate() {
        for (m, &p) in mix.iter_mut().zip(table.entry(s, a)) {
            *m += pa * p;
        }
    }
    for (a, &pa) in pi.iter().enumerate() {
        let w = scale * pa;
        if w == 0.0 {
            continue;
        }
        let row = out.row_mut(policy.param_index(s, a));
        for ((r, &p), &m) in row.iter_mut().zip(table.entry(s, a)).zip(mix.iter()) {
            *r += w * (p - m);
        }
    }
}

/// Applies `map` to the parameter rows of every active state block.
fn push_active_rows(
    acc: &mut SignedGradientMeasure,
    active: &[bool],
    n_actions: usize,
    map: &PushforwardMap,
    scratch: &mut [f64],
) {
    for (s, _) in active.iter().enumerate().filter(|(_, on)| **on) {
        for j in s * n_actions..(s + 1) * n_actions {
            scratch.iter_mut().for_each(|x| *x = 0.0);
            map.apply_add(acc.row(j), 1.0, scratch);
            acc.row_mut(j).copy_from_slice(scratch);
        }
    }
}

/// Gradient measure contributed by a single trajectory.
pub fn trajectory_gradient_measure(
    mdp: &TabularMdp,
    trajectory: &Trajectory,
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
) -> Result<SignedGradientMeasure> {
    let mut cache = MapCache::new(*table.grid(), mdp.gamma());
    trajectory_gradient_with(&mut cache, mdp, trajectory, table, policy)
}

pub(crate) fn trajectory_gradient_with(
    cache: &mut MapCache,
    mdp: &TabularMdp,
    trajectory: &Trajectory,
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
) -> Result<SignedGradientMeasure> {
    check_shapes(mdp, table, policy)?;
    cache.grid.ensure_same(table.grid())?;
    for s in trajectory.states() {
        mdp.check_state(s)?;
    }
    let grid = *table.grid();
    let n_actions = mdp.n_actions();
    let mut acc = SignedGradientMeasure::zeros(grid, policy.n_params());
    let mut active = vec![false; mdp.n_states()];
    let mut pi = vec![0.0; n_actions];
    let mut mix = vec![0.0; grid.n_atoms()];
    let mut scratch = vec![0.0; grid.n_atoms()];

    let last = trajectory.final_state;
    add_local_gradient(&mut acc, table, policy, last, 1.0, &mut pi, &mut mix);
    active[last] = true;
    for step in trajectory.steps.iter().rev() {
        let map = cache.get(step.cost)?;
        push_active_rows(&mut acc, &active, n_actions, map, &mut scratch);
        add_local_gradient(&mut acc, table, policy, step.state, 1.0, &mut pi, &mut mix);
        active[step.state] = true;
    }
    Ok(acc)
}

/// Monte Carlo estimate of `∇_θ η^{start}` from `m` sampled trajectories.
#[allow(clippy::too_many_arguments)]
pub fn measure_gradient<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    table: &ReturnDistributionTable,
    start: usize,
    m: usize,
    horizon_cap: usize,
    rng: &mut R,
) -> Result<SignedGradientMeasure> {
    if m == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    let mut cache = MapCache::new(*table.grid(), mdp.gamma());
    let trajectories = (0..m)
        .map(|_| sample_trajectory(mdp, policy, start, horizon_cap, rng))
        .collect::<Result<Vec<_>>>()?;
    average_gradient(&mut cache, mdp, &trajectories, table, policy)
}

pub(crate) fn average_gradient(
    cache: &mut MapCache,
    mdp: &TabularMdp,
    trajectories: &[Trajectory],
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
) -> Result<SignedGradientMeasure> {
    let mut total = SignedGradientMeasure::zeros(*table.grid(), policy.n_params());
    for t in trajectories {
        let g = trajectory_gradient_with(cache, mdp, t, table, policy)?;
        total.add_scaled(&g, 1.0)?;
    }
    if trajectories.len() > 1 {
        total.scale(1.0 / trajectories.len() as f64);
    }
    Ok(total)
}

/// Per-state gradient measures, one `SignedGradientMeasure` per state.
struct StateMeasures(Vec<SignedGradientMeasure>);

impl StateMeasures {
    fn local(mdp: &TabularMdp, table: &ReturnDistributionTable, policy: &SoftmaxPolicy) -> Self {
        let grid = *table.grid();
        let mut pi = vec![0.0; mdp.n_actions()];
        let mut mix = vec![0.0; grid.n_atoms()];
        Self(
            (0..mdp.n_states())
                .map(|s| {
                    let mut g = SignedGradientMeasure::zeros(grid, policy.n_params());
                    add_local_gradient(&mut g, table, policy, s, 1.0, &mut pi, &mut mix);
                    g
                })
                .collect(),
        )
    }

    /// `E'(s) = g(s) + Σ_a π(a|s) Σ_{s'} P(s'|s,a) B_{C(s,a,s')} E(s')`, and
    /// `E'(s) = g(s)` at terminals.
    fn step(
        &self,
        local: &StateMeasures,
        mdp: &TabularMdp,
        policy: &SoftmaxPolicy,
        cache: &mut MapCache,
    ) -> Result<StateMeasures> {
        let mut out = Vec::with_capacity(self.0.len());
        for s in 0..mdp.n_states() {
            let mut e = local.0[s].clone();
            if !mdp.is_terminal(s) {
                let pi = policy.action_probs(s);
                for (a, &pa) in pi.iter().enumerate() {
                    for next in 0..mdp.n_states() {
                        let p = mdp.prob(s, a, next);
                        if p == 0.0 || pa == 0.0 {
                            continue;
                        }
                        let map = cache.get(mdp.cost(s, a, next))?;
                        let pushed = self.0[next].pushforward_with(map);
                        e.add_scaled(&pushed, pa * p)?;
                    }
                }
            }
            out.push(e);
        }
        Ok(StateMeasures(out))
    }
}

/// Exact expectation of [`trajectory_gradient_measure`] over trajectories
/// from `start` capped at `horizon` steps.
///
/// Equivalent to enumerating every capped trajectory and weighting it by its
/// probability; the enumeration is folded into a backward recursion on depth.
pub fn expected_gradient_measure(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    table: &ReturnDistributionTable,
    start: usize,
    horizon: usize,
) -> Result<SignedGradientMeasure> {
    check_shapes(mdp, table, policy)?;
    mdp.check_state(start)?;
    let mut cache = MapCache::new(*table.grid(), mdp.gamma());
    let local = StateMeasures::local(mdp, table, policy);
    let mut current = StateMeasures(local.0.clone());
    for _ in 0..horizon {
        current = current.step(&local, mdp, policy, &mut cache)?;
    }
    Ok(current.0.swap_remove(start))
}

/// Uncapped expectation: iterates the backward recursion until successive
/// iterates differ by less than `tol` in every entry.
pub fn stationary_gradient_measure(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    table: &ReturnDistributionTable,
    start: usize,
    tol: f64,
    max_iterations: usize,
) -> Result<SignedGradientMeasure> {
    check_shapes(mdp, table, policy)?;
    mdp.check_state(start)?;
    let mut cache = MapCache::new(*table.grid(), mdp.gamma());
    let local = StateMeasures::local(mdp, table, policy);
    let mut current = StateMeasures(local.0.clone());
    for _ in 0..max_iterations {
        let next = current.step(&local, mdp, policy, &mut cache)?;
        let change = next
            .0
            .iter()
            .zip(&current.0)
            .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        current = next;
        if change < tol {
            return Ok(current.0.swap_remove(start));
        }
    }
    Err(Error::invalid(format!(
        "gradient recursion did not settle within {max_iterations} iterations"
    )))
}
