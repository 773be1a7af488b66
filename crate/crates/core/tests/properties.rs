use cnml_core::predictors::cnml3_log_normalizer;
use cnml_core::{
    bayes_predictive, cnml2, cnml3, conditional_mutual_information, kl_risk, projection_divergence,
    regret, ConditionalTable, ExperimentConfig, GridPrior, ParameterGrid, RegretKind,
    SufficientModel,
};
use proptest::prelude::*;

fn row_sums(t: &ConditionalTable) -> Vec<f64> {
    (0..t.n_rows())
        .map(|j| t.row(j).iter().map(|x| x.exp()).sum())
        .collect()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tables_are_conditional_distributions(n in 1usize..6, m in 1usize..25) {
        let model = SufficientModel::binomial(n, m).unwrap();
        for t in [cnml2(&model).unwrap(), cnml3(&model).unwrap()] {
            for s in row_sums(&t) {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cnml3_equalizes_regret(n in 1usize..5, m in 1usize..12, d in 1usize..3) {
        let model = SufficientModel::multinomial(d, n, m).unwrap();
        let q = cnml3(&model).unwrap();
        for j in 0..q.n_rows() {
            let z = cnml3_log_normalizer(&model, j).unwrap();
            for k in 0..q.n_cols() {
                let r = regret(RegretKind::FutureMarginal, &model, &q, j, k).unwrap();
                prop_assert!((r - z).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn information_is_bounded_by_grid_entropy(w in weights(7), m in 1usize..20) {
        let model = SufficientModel::binomial(2, m).unwrap();
        let grid = ParameterGrid::linspace(0.1, 0.9, 7).unwrap();
        let prior = GridPrior::from_unnormalized(&w).unwrap();
        let cmi = conditional_mutual_information(&prior, &model, &grid).unwrap();
        let entropy: f64 = -prior.weights().iter().map(|p| p * p.ln()).sum::<f64>();
        prop_assert!(cmi >= -1e-12 && cmi <= entropy + 1e-12);
    }

    #[test]
    fn bayes_risk_is_mutual_information(w in weights(5), m in 1usize..15) {
        let model = SufficientModel::binomial(1, m).unwrap();
        let grid = ParameterGrid::linspace(0.2, 0.8, 5).unwrap();
        let prior = GridPrior::from_unnormalized(&w).unwrap();
        let q = bayes_predictive(&prior, &model, &grid).unwrap();
        let risk: f64 = grid
            .atoms()
            .zip(prior.weights())
            .map(|(t, p)| p * kl_risk(t, &q, &model).unwrap())
            .sum();
        let cmi = conditional_mutual_information(&prior, &model, &grid).unwrap();
        prop_assert!((risk - cmi).abs() < 1e-12);
        // the prior's own predictive is its projection fixed point
        prop_assert!(projection_divergence(&prior, &q, &model, &grid).unwrap().abs() < 1e-12);
    }

    #[test]
    fn seed_override_round_trips(seed in any::<u64>()) {
        let text = format!(r#"{{"version":1,"seed":{seed}}}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(cfg.seed, seed);
    }
}
