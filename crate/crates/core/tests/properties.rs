use gbc_core::analytic::{
    cara_normal_eu, conjugate_posterior, kelly_weight, normal_cdf, normal_quantile,
    prior_to_posterior_survival_check, wang_g, wang_g_inverse, WangDistortion,
};
use gbc_core::engine::{
    build_portfolio_table, expected_utility, monotone_rearrange, optimize_decision, EmpiricalQuantile, EuScheme,
    FnQuantile, OptimizeOptions,
};
use gbc_core::models::{NormalNormalModel, PortfolioProblem, RandomSource};
use gbc_core::net::{backward_with, DenseNet, Example};
use gbc_core::ExecMode;
use proptest::prelude::*;

fn theta_grid() -> Vec<f64> {
    (0..=200).map(|i| -10.0 + 0.1 * i as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wang_identity_holds_for_any_model(
        mu in -5.0f64..5.0,
        alpha in 0.3f64..10.0,
        sigma in 0.3f64..20.0,
        n in 1usize..150,
        seed in any::<u64>(),
    ) {
        let model = NormalNormalModel::from_sds(mu, alpha, sigma, n).unwrap();
        let mut rng = RandomSource::new(seed);
        let theta = rng.normal(mu, alpha);
        let y = model.observe(theta, &mut rng);
        let gap = prior_to_posterior_survival_check(&theta_grid(), &model, &y).unwrap();
        prop_assert!(gap < 1e-9, "gap {}", gap);
    }

    #[test]
    fn posterior_sd_shrinks_with_data(alpha in 0.3f64..10.0, sigma in 0.3f64..20.0, n in 1usize..200) {
        let model = NormalNormalModel::from_sds(0.0, alpha, sigma, n).unwrap();
        let y = vec![0.5; n];
        let post = conjugate_posterior(&model, &y).unwrap();
        prop_assert!(post.sigma_star() < alpha);
        prop_assert!(post.sigma_star() < sigma / (n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn wang_g_is_increasing_and_invertible(l1 in 0.2f64..5.0, l in -3.0f64..3.0, p in 0.01f64..0.98) {
        let w = WangDistortion::new(l1, l).unwrap();
        let q = p + 0.01;
        prop_assert!(wang_g(q, &w).unwrap() >= wang_g(p, &w).unwrap());
        let g = wang_g(p, &w).unwrap();
        if g > 1e-12 && g < 1.0 - 1e-12 {
            prop_assert!((wang_g_inverse(g, &w).unwrap() - p).abs() < 1e-6);
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf(p in 1e-10f64..(1.0 - 1e-10)) {
        let x = normal_quantile(p).unwrap();
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-13 + 1e-12 * p);
    }

    #[test]
    fn kelly_is_the_argmax(
        rf in 0.0f64..0.1,
        excess in -0.05f64..0.3,
        sd in 0.05f64..0.6,
        gamma in 0.3f64..10.0,
    ) {
        let p = PortfolioProblem::new(rf, rf + excess, sd, gamma, (0.0, 1.0)).unwrap();
        let k = kelly_weight(&p).weight;
        let at_k = cara_normal_eu(k, &p).unwrap();
        for i in 0..=50 {
            let w = i as f64 / 50.0;
            prop_assert!(cara_normal_eu(w, &p).unwrap() <= at_k + 1e-15);
        }
    }

    #[test]
    fn rearrangement_is_a_sorted_permutation(v in proptest::collection::vec(-100.0f64..100.0, 1..200)) {
        let taus: Vec<f64> = (0..v.len()).map(|i| (i as f64 + 0.5) / v.len() as f64).collect();
        let r = monotone_rearrange(&taus, &v);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(r, sorted);
    }

    #[test]
    fn empirical_quantile_mean_is_shift_equivariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 2..100),
        c in -10.0f64..10.0,
    ) {
        let mut rng = RandomSource::new(0);
        let m = xs.len();
        let a = expected_utility(&EmpiricalQuantile::new(&xs).unwrap(), m, EuScheme::UniformGrid, &mut rng).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = expected_utility(&EmpiricalQuantile::new(&shifted).unwrap(), m, EuScheme::UniformGrid, &mut rng).unwrap();
        prop_assert!((b.estimate - a.estimate - c).abs() < 1e-9);
        prop_assert!((b.standard_error - a.standard_error).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_across_modes(seed in any::<u64>(), n in 1usize..100) {
        let net = DenseNet::he_uniform(&[3, 6, 6, 1], seed).unwrap();
        let mut r = RandomSource::new(seed ^ 1);
        let batch: Vec<Example> = (0..n)
            .map(|_| Example::new(vec![r.normal(0.0, 1.0), r.normal(0.0, 1.0), r.uniform()], r.normal(0.0, 1.0), r.uniform()))
            .collect();
        let a = backward_with(&net, &batch, ExecMode::Sequential).unwrap();
        let b = backward_with(&net, &batch, ExecMode::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn portfolio_cells_are_rank_paired(seed in any::<u64>()) {
        let p = PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0)).unwrap();
        let grid = p.weight_grid(5);
        let t = build_portfolio_table(&p, &grid, 50, true, &RandomSource::new(seed), ExecMode::default()).unwrap();
        for &w in &grid[1..] {
            let mut cell: Vec<(f64, f64)> = t
                .rows()
                .iter()
                .filter(|r| r.decision == Some(w))
                .map(|r| (r.utility.unwrap(), r.tau))
                .collect();
            cell.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(cell.windows(2).all(|x| x[0].1 <= x[1].1));
        }
    }

    #[test]
    fn optimizer_finds_interior_peak(peak in 0.05f64..0.95, scale in 0.1f64..10.0) {
        let eval = |d: f64| Ok((-scale * (d - peak).powi(2), 0.0));
        let r = optimize_decision(eval, (0.0, 1.0), &OptimizeOptions::default()).unwrap();
        prop_assert!((r.best_decision - peak).abs() < 1e-4);
    }
}

#[test]
fn closed_form_quantile_source_integrates_to_its_mean() {
    // N(2, 3^2) quantile function; midpoint rule with 4096 levels
    let q = FnQuantile(|t: f64| 2.0 + 3.0 * normal_quantile(t).unwrap());
    let e = expected_utility(&q, 4096, EuScheme::UniformGrid, &mut RandomSource::new(0)).unwrap();
    assert!((e.estimate - 2.0).abs() < 1e-9);
    let r = expected_utility(&q, 100_000, EuScheme::Random, &mut RandomSource::new(1)).unwrap();
    assert!((r.estimate - 2.0).abs() < 4.0 * r.standard_error);
    assert!((r.standard_error - 3.0 / (100_000f64).sqrt()).abs() < 1e-3);
}
