//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's projection, distance or gradient code;
//! the oracles are written out directly from their definitions.

#![allow(dead_code)]

use cdpg::eval::{evaluate_policy, state_distribution, EvalConfig, ReturnDistributionTable};
use cdpg::mdp::{CostTable, SoftmaxPolicy, TabularMdp};
use cdpg::measure::SupportGrid;
use cdpg::risk::{risk_value, RiskMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn atoms(grid: &SupportGrid) -> Vec<f64> {
    let n = grid.n_atoms();
    let dz = (grid.z_max() - grid.z_min()) / (n - 1) as f64;
    (0..n).map(|i| grid.z_min() + i as f64 * dz).collect()
}

/// Π_C(b_{c,γ})_# written out atom by atom.
pub fn push_project(grid: &SupportGrid, weights: &[f64], cost: f64, gamma: f64) -> Vec<f64> {
    let z = atoms(grid);
    let n = z.len();
    let dz = z[1] - z[0];
    let mut out = vec![0.0; n];
    for (i, &w) in weights.iter().enumerate() {
        let y = (cost + gamma * z[i]).clamp(z[0], z[n - 1]);
        let pos = (y - z[0]) / dz;
        let lo = (pos.floor() as usize).min(n - 1);
        if lo == n - 1 {
            out[n - 1] += w;
            continue;
        }
        let frac = pos - lo as f64;
        out[lo] += w * (1.0 - frac);
        out[lo + 1] += w * frac;
    }
    out
}

/// `sqrt(Σ_{j<n-1} (F1_j - F2_j)² Δ)`.
pub fn cramer(grid: &SupportGrid, p: &[f64], q: &[f64]) -> f64 {
    let dz = (grid.z_max() - grid.z_min()) / (grid.n_atoms() - 1) as f64;
    let (mut f1, mut f2, mut acc) = (0.0, 0.0, 0.0);
    for j in 0..p.len() - 1 {
        f1 += p[j];
        f2 += q[j];
        acc += (f1 - f2) * (f1 - f2) * dz;
    }
    acc.sqrt()
}

pub fn sup_cramer(a: &ReturnDistributionTable, b: &ReturnDistributionTable) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..a.n_states() {
        for act in 0..a.n_actions() {
            worst = worst.max(cramer(a.grid(), a.entry(s, act), b.entry(s, act)));
        }
    }
    worst
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Dense random MDP; the last state is terminal.
pub fn dense_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let goal = ns - 1;
    let mut t = vec![vec![vec![0.0; ns]; na]; ns];
    let mut c = vec![vec![vec![0.0; ns]; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            if s == goal {
                t[s][a][goal] = 1.0;
                continue;
            }
            t[s][a] = random_simplex(rng, ns);
            for x in c[s][a].iter_mut() {
                *x = rng.random::<f64>();
            }
        }
    }
    TabularMdp::new(t, CostTable::PerTransition(c), gamma, &[goal]).unwrap()
}

/// Random MDP with at most two non-terminal successors per `(s, a)` and
/// termination probability in `[q_min, q_min + 0.15]`.
pub fn sparse_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64, q_min: f64) -> TabularMdp {
    let goal = ns - 1;
    let mut t = vec![vec![vec![0.0; ns]; na]; ns];
    let mut c = vec![vec![vec![0.0; ns]; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            if s == goal {
                t[s][a][goal] = 1.0;
                continue;
            }
            let q = q_min + 0.15 * rng.random::<f64>();
            t[s][a][goal] = q;
            if goal > 0 {
                let split = rng.random::<f64>();
                let n1 = rng.random_range(0..goal);
                let n2 = rng.random_range(0..goal);
                t[s][a][n1] += (1.0 - q) * split;
                t[s][a][n2] += (1.0 - q) * (1.0 - split);
            } else {
                t[s][a][goal] = 1.0;
            }
            for x in c[s][a].iter_mut() {
                *x = rng.random::<f64>();
            }
        }
    }
    TabularMdp::new(t, CostTable::PerTransition(c), gamma, &[goal]).unwrap()
}

pub fn random_policy<R: Rng>(rng: &mut R, ns: usize, na: usize) -> SoftmaxPolicy {
    let theta = (0..ns * na).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    SoftmaxPolicy::from_theta(ns, na, theta).unwrap()
}

pub fn tight() -> EvalConfig {
    EvalConfig {
        max_sweeps: 100_000,
        tolerance: 1e-14,
        warm_start: false,
        early_stop_patience: 10,
        ..EvalConfig::default()
    }
}

pub fn with_theta(policy: &SoftmaxPolicy, j: usize, delta: f64) -> SoftmaxPolicy {
    let mut theta = policy.theta().to_vec();
    theta[j] += delta;
    SoftmaxPolicy::from_theta(policy.n_states(), policy.n_actions(), theta).unwrap()
}

/// Start-state probabilities of the converged projected fixed point.
pub fn start_probs(mdp: &TabularMdp, policy: &SoftmaxPolicy, grid: SupportGrid, start: usize) -> Vec<f64> {
    let out = evaluate_policy(mdp, policy, grid, &tight(), None).unwrap();
    state_distribution(&out.table, policy, start).unwrap().probs().to_vec()
}

pub fn start_risk(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    start: usize,
    spec: &RiskMeasure,
) -> f64 {
    let out = evaluate_policy(mdp, policy, grid, &tight(), None).unwrap();
    risk_value(&state_distribution(&out.table, policy, start).unwrap(), spec).unwrap()
}

/// Central differences of the start-state probabilities, one row per parameter.
pub fn fd_probs(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    start: usize,
    h: f64,
) -> Vec<Vec<f64>> {
    (0..policy.n_params())
        .map(|j| {
            let up = start_probs(mdp, &with_theta(policy, j, h), grid, start);
            let down = start_probs(mdp, &with_theta(policy, j, -h), grid, start);
            up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
        })
        .collect()
}

pub fn fd_risk(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    start: usize,
    spec: &RiskMeasure,
    h: f64,
) -> Vec<f64> {
    (0..policy.n_params())
        .map(|j| {
            let up = start_risk(mdp, &with_theta(policy, j, h), grid, start, spec);
            let down = start_risk(mdp, &with_theta(policy, j, -h), grid, start, spec);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `π(a|s)` by direct exponentiation.
pub fn probs(policy: &SoftmaxPolicy, s: usize) -> Vec<f64> {
    let na = policy.n_actions();
    let row = &policy.theta()[s * na..(s + 1) * na];
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|t| (t - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `g(s) = Σ_a ∇_θ π(a|s) η^{(s,a)}`, one row per parameter.
pub fn local_gradient(
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
    s: usize,
) -> Vec<Vec<f64>> {
    let na = policy.n_actions();
    let n = table.grid().n_atoms();
    let pi = probs(policy, s);
    let mut rows = vec![vec![0.0; n]; policy.n_params()];
    for b in 0..na {
        for a in 0..na {
            // ∂π(a|s)/∂θ[s][b] = π(a)(1{a=b} - π(b))
            let d = pi[a] * (if a == b { 1.0 } else { 0.0 } - pi[b]);
            for (r, p) in rows[s * na + b].iter_mut().zip(table.entry(s, a)) {
                *r += d * p;
            }
        }
    }
    rows
}

/// Expected gradient measure by explicit enumeration of every trajectory
/// prefix up to `horizon` steps: each prefix ending in `s_t` contributes
/// `P(prefix) · B_{c_0}(B_{c_1}(⋯ B_{c_{t-1}}(g(s_t))))`.
pub fn enumerate_gradient(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    table: &ReturnDistributionTable,
    start: usize,
    horizon: usize,
) -> Vec<Vec<f64>> {
    let n = table.grid().n_atoms();
    let mut total = vec![vec![0.0; n]; policy.n_params()];
    let mut costs = Vec::new();
    visit(mdp, policy, table, start, 1.0, &mut costs, horizon, &mut total);
    total
}

#[allow(clippy::too_many_arguments)]
fn visit(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    table: &ReturnDistributionTable,
    s: usize,
    prob: f64,
    costs: &mut Vec<f64>,
    horizon: usize,
    total: &mut [Vec<f64>],
) {
    let grid = *table.grid();
    let mut g = local_gradient(table, policy, s);
    for &c in costs.iter().rev() {
        for row in g.iter_mut() {
            *row = push_project(&grid, row, c, mdp.gamma());
        }
    }
    for (t, row) in total.iter_mut().zip(&g) {
        for (x, y) in t.iter_mut().zip(row) {
            *x += prob * y;
        }
    }
    if mdp.is_terminal(s) || costs.len() == horizon {
        return;
    }
    let pi = probs(policy, s);
    for (a, &pa) in pi.iter().enumerate() {
        for next in 0..mdp.n_states() {
            let p = mdp.prob(s, a, next);
            if p == 0.0 {
                continue;
            }
            costs.push(mdp.cost(s, a, next));
            visit(mdp, policy, table, next, prob * pa * p, costs, horizon, total);
            costs.pop();
        }
    }
}

/// Smallest gap between the CVaR level and the CDF on either side of the
/// quantile atom.
pub fn tie_margin(probs: &[f64], alpha: f64) -> f64 {
    let level = 1.0 - alpha;
    let mut cdf = 0.0;
    let mut below = 0.0;
    for &p in probs {
        cdf += p;
        if cdf >= level {
            return (cdf - level).min(if below == 0.0 && cdf == p { f64::INFINITY } else { level - below });
        }
        below = cdf;
    }
    0.0
}

pub fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / (1.0 + f.abs()))
        .fold(0.0, f64::max)
}

pub fn random_table<R: Rng>(rng: &mut R, grid: SupportGrid, ns: usize, na: usize) -> ReturnDistributionTable {
    use cdpg::measure::CategoricalDistribution;
    let entries = (0..ns * na)
        .map(|_| CategoricalDistribution::new(grid, random_simplex(rng, grid.n_atoms())).unwrap())
        .collect();
    ReturnDistributionTable::from_entries(grid, ns, na, entries).unwrap()
}
