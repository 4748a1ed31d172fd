mod common;

use cdpg::cliffwalk::{CliffwalkParams, START};
use cdpg::eval::{evaluate_policy, state_distribution, EvalConfig};
use cdpg::mdp::{sample_trajectory, CostTable, SoftmaxPolicy, TabularMdp, Trajectory};
use cdpg::measure::SupportGrid;
use cdpg::pg::{measure_gradient, stationary_gradient_measure};
use cdpg::risk::{risk_gradient, RiskMeasure};
use cdpg::spg::{spg_estimate, var_rank};
use nalgebra::{DMatrix, DVector};

fn small_instance(seed: u64) -> (TabularMdp, SoftmaxPolicy, SupportGrid) {
    let mut rng = common::rng(seed);
    let mdp = common::dense_mdp(&mut rng, 4, 2, 0.8);
    let policy = common::random_policy(&mut rng, 4, 2);
    (mdp, policy, SupportGrid::new(0.0, 10.0, 41).unwrap())
}

/// `∇V(s0) = Σ_s d(s) Σ_a ∇π(a|s) Q(s,a)` with `d = (I - γ P_π^T)^{-1} e_{s0}`.
fn classical_gradient(mdp: &TabularMdp, policy: &SoftmaxPolicy, start: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let mut m = DMatrix::<f64>::identity(n, n);
    for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
        let pi = common::probs(policy, s);
        for (a, pa) in pi.iter().enumerate() {
            for next in 0..n {
                m[(next, s)] -= mdp.gamma() * pa * mdp.prob(s, a, next);
            }
        }
    }
    let mut e = DVector::zeros(n);
    e[start] = 1.0;
    let d = m.lu().solve(&e).unwrap();
    let q = mdp.q_values(policy).unwrap();
    let na = mdp.n_actions();
    let mut grad = vec![0.0; n * na];
    for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
        let pi = common::probs(policy, s);
        for b in 0..na {
            for a in 0..na {
                let dpi = pi[a] * (f64::from(u8::from(a == b)) - pi[b]);
                grad[s * na + b] += d[s] * dpi * q[s][a];
            }
        }
    }
    grad
}

#[test]
fn expectation_gradient_matches_classical_policy_gradient() {
    for seed in 0..5 {
        let (mdp, policy, grid) = small_instance(seed);
        let table = evaluate_policy(&mdp, &policy, grid, &common::tight(), None).unwrap().table;
        let measure = stationary_gradient_measure(&mdp, &policy, &table, 0, 1e-15, 100_000).unwrap();
        let dist = state_distribution(&table, &policy, 0).unwrap();
        let ours = risk_gradient(&measure, &dist, &RiskMeasure::Expectation).unwrap().gradient;
        let classical = classical_gradient(&mdp, &policy, 0);
        for (a, b) in ours.iter().zip(&classical) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn stationary_measure_matches_finite_differences() {
    let (mdp, policy, grid) = small_instance(11);
    let table = evaluate_policy(&mdp, &policy, grid, &common::tight(), None).unwrap().table;
    let measure = stationary_gradient_measure(&mdp, &policy, &table, 0, 1e-15, 100_000).unwrap();
    let fd = common::fd_probs(&mdp, &policy, grid, 0, 1e-5);
    for (j, row) in fd.iter().enumerate() {
        assert!(common::rel_err(measure.row(j), row) < 1e-6);
    }
}

#[test]
fn monte_carlo_measure_is_unbiased_with_shrinking_variance() {
    let (mdp, policy, grid) = small_instance(3);
    let table = evaluate_policy(&mdp, &policy, grid, &common::tight(), None).unwrap().table;
    let exact = stationary_gradient_measure(&mdp, &policy, &table, 0, 1e-15, 100_000).unwrap();
    let exact = exact.as_slice().to_vec();

    let mut rng = common::rng(5);
    let mut mse = Vec::new();
    for m in [4usize, 16, 64] {
        let reps = 200;
        let mut mean = vec![0.0; exact.len()];
        let mut err = 0.0;
        for _ in 0..reps {
            let est = measure_gradient(&mdp, &policy, &table, 0, m, 500, &mut rng).unwrap();
            for ((acc, e), x) in mean.iter_mut().zip(&exact).zip(est.as_slice()) {
                *acc += x / reps as f64;
                err += (x - e).powi(2);
            }
        }
        mse.push(err / reps as f64);
        if m == 64 {
            // 12800 trajectories in total
            let bias = mean.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(bias < 0.01, "bias {bias}");
        }
    }
    // quadrupling m should cut the squared error by roughly four
    for w in mse.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.5..6.5).contains(&ratio), "mse {mse:?}");
    }
}

fn batch(mdp: &TabularMdp, policy: &SoftmaxPolicy, start: usize, m: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = common::rng(seed);
    (0..m)
        .map(|_| sample_trajectory(mdp, policy, start, 500, &mut rng).unwrap())
        .collect()
}

#[test]
fn spg_estimate_matches_hand_computation() {
    let mdp = CliffwalkParams::default().build().unwrap();
    let policy = common::random_policy(&mut common::rng(1), 9, 4);
    let trajectories = batch(&mdp, &policy, START, 50, 2);
    let alpha = 0.2;
    let est = spg_estimate(&mdp, &policy, &trajectories, alpha).unwrap();

    let returns: Vec<f64> = trajectories
        .iter()
        .map(|t| t.steps.iter().enumerate().map(|(k, s)| 0.95f64.powi(k as i32) * s.cost).sum())
        .collect();
    let mut sorted = returns.clone();
    sorted.sort_by(f64::total_cmp);
    // rank ceil((1 - α) m) = 40
    assert_eq!(var_rank(50, alpha), 40);
    let q = sorted[39];
    assert!((est.var - q).abs() < 1e-9);
    let mut grad = vec![0.0; 36];
    for (t, r) in trajectories.iter().zip(&returns) {
        if *r < q {
            continue;
        }
        for step in &t.steps {
            let pi = common::probs(&policy, step.state);
            for b in 0..4 {
                let score = f64::from(u8::from(b == step.action)) - pi[b];
                grad[step.state * 4 + b] += (r - q) * score / (50.0 * alpha);
            }
        }
    }
    for (a, b) in est.gradient.iter().zip(&grad) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn spg_at_alpha_one_estimates_the_mean_gradient() {
    let (mdp, policy, _) = small_instance(7);
    let classical = classical_gradient(&mdp, &policy, 0);
    let trajectories = batch(&mdp, &policy, 0, 200_000, 8);
    let est = spg_estimate(&mdp, &policy, &trajectories, 1.0).unwrap();
    let scale = classical.iter().map(|g| g.abs()).fold(0.0, f64::max);
    for (a, b) in est.gradient.iter().zip(&classical) {
        assert!((a - b).abs() < 0.05 * scale, "{a} vs {b}");
    }
}

#[test]
fn spg_scales_with_costs() {
    let (mdp, policy, _) = small_instance(9);
    let doubled = {
        let n = mdp.n_states();
        let na = mdp.n_actions();
        let t = (0..n)
            .map(|s| (0..na).map(|a| mdp.transition_row(s, a).to_vec()).collect())
            .collect();
        let c = (0..n)
            .map(|s| (0..na).map(|a| mdp.cost_row(s, a).iter().map(|x| 2.0 * x).collect()).collect())
            .collect();
        TabularMdp::new(t, CostTable::PerTransition(c), mdp.gamma(), &mdp.terminals()).unwrap()
    };
    let base = batch(&mdp, &policy, 0, 100, 4);
    let scaled: Vec<Trajectory> = base
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.steps.iter_mut().for_each(|s| s.cost *= 2.0);
            t
        })
        .collect();
    let e1 = spg_estimate(&mdp, &policy, &base, 0.3).unwrap();
    let e2 = spg_estimate(&doubled, &policy, &scaled, 0.3).unwrap();
    assert!((e2.cvar - 2.0 * e1.cvar).abs() < 1e-9);
    for (a, b) in e1.gradient.iter().zip(&e2.gradient) {
        assert!((b - 2.0 * a).abs() < 1e-9);
    }
}

#[test]
fn warm_start_needs_fewer_sweeps() {
    let mdp = CliffwalkParams::default().build().unwrap();
    let grid = cdpg::cdpg::default_training_grid();
    let config = EvalConfig::default();
    let p0 = SoftmaxPolicy::uniform(9, 4);
    let first = evaluate_policy(&mdp, &p0, grid, &config, None).unwrap();
    let p1 = common::with_theta(&p0, START * 4, 0.05);
    let cold = evaluate_policy(&mdp, &p1, grid, &config, None).unwrap();
    let warm = evaluate_policy(&mdp, &p1, grid, &config, Some(&first.table)).unwrap();
    assert!(warm.sweeps < cold.sweeps, "{} vs {}", warm.sweeps, cold.sweeps);
    assert!(warm.table.sup_cramer(&cold.table).unwrap() < 1e-6);
    let residual = cdpg::eval::bellman_residual(&warm.table, &mdp, &p1).unwrap();
    assert!(residual < 1e-7);
}
