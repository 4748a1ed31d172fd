mod common;

use cdpg::eval::{bellman_backup, state_distribution};
use cdpg::measure::{
    cramer_distance, pushforward_project, wasserstein1_distance, CategoricalDistribution,
    SupportGrid,
};
use cdpg::risk::{risk_value, RiskMeasure};
use proptest::prelude::*;

fn grid() -> SupportGrid {
    SupportGrid::new(-2.0, 8.0, 21).unwrap()
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all zero", |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-6).then(|| w.into_iter().map(|x| x / total).collect())
    })
}

fn dist() -> impl Strategy<Value = CategoricalDistribution> {
    simplex(21).prop_map(|p| CategoricalDistribution::new(grid(), p).unwrap())
}

proptest! {
    #[test]
    fn pushforward_conserves_mass(p in simplex(21), cost in -5.0f64..5.0, gamma in 0.0f64..1.0) {
        let out = pushforward_project(&grid(), &p, cost, gamma).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn pushforward_matches_reference(p in simplex(21), cost in -5.0f64..5.0, gamma in 0.0f64..1.0) {
        let ours = pushforward_project(&grid(), &p, cost, gamma).unwrap();
        let reference = common::push_project(&grid(), &p, cost, gamma);
        for (a, b) in ours.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_is_linear(
        p in simplex(21),
        q in simplex(21),
        s in -3.0f64..3.0,
        t in -3.0f64..3.0,
        cost in -1.0f64..3.0,
        gamma in 0.0f64..1.0,
    ) {
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| s * a + t * b).collect();
        let lhs = pushforward_project(&grid(), &mix, cost, gamma).unwrap();
        let fp = pushforward_project(&grid(), &p, cost, gamma).unwrap();
        let fq = pushforward_project(&grid(), &q, cost, gamma).unwrap();
        for j in 0..lhs.len() {
            prop_assert!((lhs[j] - (s * fp[j] + t * fq[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn backup_contracts(seed in 0u64..10_000, gamma in 0.05f64..0.99) {
        let mut rng = common::rng(seed);
        let g = SupportGrid::new(0.0, 30.0, 31).unwrap();
        let mdp = common::dense_mdp(&mut rng, 4, 2, gamma);
        let policy = common::random_policy(&mut rng, 4, 2);
        let a = common::random_table(&mut rng, g, 4, 2);
        let b = common::random_table(&mut rng, g, 4, 2);
        let before = common::sup_cramer(&a, &b);
        let ta = bellman_backup(&a, &mdp, &policy).unwrap();
        let tb = bellman_backup(&b, &mdp, &policy).unwrap();
        prop_assert!(common::sup_cramer(&ta, &tb) <= gamma.sqrt() * before + 1e-9);
        prop_assert!((ta.sup_cramer(&tb).unwrap() - common::sup_cramer(&ta, &tb)).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(d in dist()) {
        let cdf = d.cdf();
        prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!((cdf[cdf.len() - 1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distances_are_metrics(a in dist(), b in dist(), c in dist()) {
        for f in [cramer_distance, wasserstein1_distance] {
            let ab = f(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - f(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(f(&a, &a).unwrap() == 0.0);
            prop_assert!(ab <= f(&a, &c).unwrap() + f(&c, &b).unwrap() + 1e-12);
        }
        prop_assert!((cramer_distance(&a, &b).unwrap() - common::cramer(&grid(), a.probs(), b.probs())).abs() < 1e-12);
    }

    #[test]
    fn cvar_decreases_in_alpha(d in dist(), a1 in 0.01f64..1.0, a2 in 0.01f64..1.0) {
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let c_lo = risk_value(&d, &RiskMeasure::Cvar { alpha: lo }).unwrap();
        let c_hi = risk_value(&d, &RiskMeasure::Cvar { alpha: hi }).unwrap();
        prop_assert!(c_lo >= c_hi - 1e-12);
        prop_assert!(c_hi >= d.mean() - 1e-12);
        prop_assert!(c_lo <= grid().z_max() + 1e-12);
    }

    #[test]
    fn cvar_matches_tail_average(d in dist(), alpha in 0.01f64..1.0) {
        // mean of the worst α mass, taken atom by atom from the top
        let mut remaining = alpha;
        let mut acc = 0.0;
        for i in (0..21).rev() {
            let take = d.probs()[i].min(remaining);
            acc += take * grid().atom(i);
            remaining -= take;
            if remaining <= 0.0 {
                break;
            }
        }
        let cvar = risk_value(&d, &RiskMeasure::Cvar { alpha }).unwrap();
        prop_assert!((cvar - acc / alpha).abs() < 1e-9 * (1.0 + cvar.abs()));
    }

    #[test]
    fn risk_measures_are_translation_equivariant(d in dist(), alpha in 0.05f64..1.0) {
        // shifting by whole atoms keeps mass on the grid as long as nothing clamps
        let wide = SupportGrid::new(-2.0, 12.0, 29).unwrap();
        let mut p = d.probs().to_vec();
        p.extend([0.0; 8]);
        let base = CategoricalDistribution::new(wide, p.clone()).unwrap();
        p.rotate_right(8);
        let shifted = CategoricalDistribution::new(wide, p).unwrap();
        for spec in [RiskMeasure::Cvar { alpha }, RiskMeasure::Expectation, RiskMeasure::MeanSemideviation { alpha }] {
            let r0 = risk_value(&base, &spec).unwrap();
            let r1 = risk_value(&shifted, &spec).unwrap();
            prop_assert!((r1 - r0 - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluated_tables_are_simplices(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let g = SupportGrid::new(0.0, 20.0, 41).unwrap();
        let mdp = common::dense_mdp(&mut rng, 3, 2, 0.8);
        let policy = common::random_policy(&mut rng, 3, 2);
        let out = cdpg::evaluate_policy(&mdp, &policy, g, &Default::default(), None).unwrap();
        prop_assert!(out.table.check_simplex(1e-9).is_ok());
        let d = state_distribution(&out.table, &policy, 0).unwrap();
        let v = mdp.expected_values(&policy).unwrap();
        // projection keeps the mean when nothing is clamped
        prop_assert!((d.mean() - v[0]).abs() < 1e-6);
    }
}
