use contractforge::adjustment::{self, FeeTable};
use contractforge::agent::{self, AgentType, ContractConfig};
use contractforge::cost_model::CostModel;
use contractforge::incentive::IncentiveFunction;
use contractforge::stackelberg::{self, PrincipalBenefit, TypePrior};
use contractforge::truthfulness::{self, StepDirection};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = CostModel> {
    prop_oneof![
        Just(CostModel::quadratic()),
        (1.2f64..4.0).prop_map(|p| CostModel::power(p).unwrap()),
        Just({
            let a: Vec<f64> = (0..64).map(|i| 0.05 + 0.1 * i as f64).collect();
            let phi = a.iter().map(|x| x * x / 2.0 + x * x * x / 30.0).collect();
            CostModel::tabulated(a, phi).unwrap()
        }),
    ]
}

fn th(t: f64) -> AgentType {
    AgentType::new(t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bregman_is_non_negative(cost in family(), x in 0.1f64..6.0, y in 0.1f64..6.0) {
        let d = cost.bregman(x, y).unwrap();
        prop_assert!(d >= -1e-12, "D({x}, {y}) = {d}");
    }

    #[test]
    fn fenchel_young(cost in family(), a in 0.1f64..6.0, b in 0.1f64..6.0) {
        let u = cost.eval_deriv(b).unwrap();
        let gap = cost.eval_cost(a).unwrap() + cost.conjugate(u).unwrap() - a * u;
        prop_assert!(gap >= -1e-9, "gap {gap}");
    }

    #[test]
    fn best_response_round_trip(cost in family(), a in 0.2f64..5.0, theta in 0.25f64..4.0) {
        let cfg = ContractConfig::new(cost, 1.0).unwrap();
        let u = theta * cfg.cost().eval_deriv(a).unwrap();
        prop_assume!(cfg.cost().check_incentive(u / theta).is_ok());
        let back = agent::best_response(&cfg, u, th(theta)).unwrap();
        prop_assert!((back - a).abs() <= 1e-8 * (1.0 + a), "{back} vs {a}");
        let value = agent::best_response_value(&cfg, u, th(theta)).unwrap();
        let direct = agent::stage_utility(&cfg, u, back, th(theta)).unwrap();
        prop_assert!((value - direct).abs() <= 1e-8 * (1.0 + value.abs()));
    }

    #[test]
    fn threshold_bound_is_non_negative_and_monotone(tl in 0.3f64..2.0, ratio in 1.05f64..4.0, p in 1.3f64..3.5) {
        let cfg = ContractConfig::new(CostModel::power(p).unwrap(), 1.0).unwrap();
        let (lo, hi) = truthfulness::step_threshold_range(&cfg, th(tl), th(tl * ratio)).unwrap();
        let mut prev = -1.0;
        for i in 0..=10 {
            let t = (lo + (hi - lo) * i as f64 / 10.0).min(hi);
            let f = truthfulness::step_feasibility(&cfg, th(tl), th(tl * ratio), t, StepDirection::LowGetsMore).unwrap();
            prop_assert!(f.rhs_bound >= 0.0);
            if i > 0 {
                prop_assert!(f.rhs_bound > 0.0);
            }
            prop_assert!(f.rhs_bound >= prev - 1e-12);
            prev = f.rhs_bound;
        }
    }

    #[test]
    fn lemma_round_trip(k in 0.5f64..3.0, theta in 0.5f64..4.0, p in 1.5f64..3.0) {
        let cfg = ContractConfig::new(CostModel::power(p).unwrap(), 1.0).unwrap();
        let s = stackelberg::solve_complete_info(&cfg, &PrincipalBenefit::Linear { k }, th(theta)).unwrap();
        let a = agent::best_response(&cfg, s.u_e, th(theta)).unwrap();
        prop_assert!((a - s.a_e).abs() <= 1e-8 * (1.0 + a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn step_verdict_matches_deviation_search(u_h in 0.8f64..1.2, delta in 0.005f64..0.05, above in any::<bool>()) {
        let cfg = ContractConfig::new(CostModel::quadratic(), 1.0).unwrap().with_interval(0.05, 3.0).unwrap();
        let f = truthfulness::step_feasibility(&cfg, th(1.0), th(2.0), 1.0, StepDirection::LowGetsMore).unwrap();
        let boundary = f.boundary_incentive(u_h).unwrap().unwrap();
        let u_l = if above { boundary * (1.0 + delta) } else { u_h + (boundary - u_h) * (1.0 - delta) };
        let u2 = IncentiveFunction::step(1.0, u_l, u_h).unwrap();
        let truthful = [1.0, 2.0]
            .iter()
            .all(|&t| agent::deviation_search_mh(&cfg, &u2, th(t)).unwrap().truthful);
        prop_assert_eq!(f.is_feasible(u_l, u_h).unwrap(), truthful);
        prop_assert_eq!(truthful, !above);
    }

    #[test]
    fn breakdown_persists_for_larger_types(u2v in 1.2f64..3.0, cap in 0.0f64..2.0) {
        let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)
            .unwrap()
            .with_interval(0.2, 3.0)
            .unwrap()
            .with_grid_size(64)
            .unwrap();
        let u2 = IncentiveFunction::constant(u2v).unwrap();
        let fee = FeeTable::zeros(vec![0.2, 3.0], 1.0).unwrap();
        let scan: Vec<f64> = (1..=30).map(|i| 0.1 * i as f64).collect();
        let points = adjustment::penalty_scan(&cfg, &u2, &fee, cap, &scan).unwrap();
        if let Some(first) = points.iter().position(|p| p.gain > agent::GAIN_TOLERANCE) {
            for w in points[first..].windows(2) {
                prop_assert!(w[1].gain >= w[0].gain - 1e-12, "{:?}", w);
            }
        }
    }

    #[test]
    fn fee_slope_matches_oracle(v0 in 0.5f64..2.0, v1 in 0.5f64..2.0, v2 in 0.5f64..2.0, x in 0.35f64..2.85) {
        // away from the kinks, f'(a) equals u2'(a) c(a)
        prop_assume!((x - 1.5).abs() > 0.02);
        let cfg = ContractConfig::new(CostModel::power(2.5).unwrap(), 1.0)
            .unwrap()
            .with_interval(0.2, 3.0)
            .unwrap()
            .with_grid_size(2048)
            .unwrap();
        let u2 = IncentiveFunction::piecewise_linear(vec![0.3, 1.5, 2.9], vec![v0, v1, v2]).unwrap();
        let adj = adjustment::build_truthful_adjustment(&cfg, &u2, None).unwrap();
        let h = 1e-3;
        let numeric = (adj.fee().eval(x + h).unwrap() - adj.fee().eval(x - h).unwrap()) / (2.0 * h);
        let oracle = u2.derivative(x).unwrap() * adjustment::consistency_curve(&cfg, &u2, x).unwrap();
        prop_assert!((numeric - oracle).abs() <= 1e-5 * (1.0 + oracle.abs()), "{numeric} vs {oracle}");
    }

    #[test]
    fn built_fee_passes_verification(v0 in 0.6f64..1.6, v1 in 0.6f64..1.6, theta in 0.7f64..2.5) {
        let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)
            .unwrap()
            .with_interval(0.2, 3.0)
            .unwrap()
            .with_grid_size(256)
            .unwrap();
        let u2 = IncentiveFunction::piecewise_linear(vec![0.5, 2.5], vec![v0, v1]).unwrap();
        let adj = adjustment::build_truthful_adjustment(&cfg, &u2, None).unwrap();
        let v = adjustment::verify_adjustment(&cfg, &u2, &adj, &[theta]).unwrap();
        prop_assert!(v.holds, "{:?}", v.worst_margin);
        prop_assert!(v.all_agree);
    }

    #[test]
    fn ex_ante_dominance(t1 in 0.5f64..1.5, gap in 0.2f64..2.0, w in 0.1f64..0.9) {
        let cfg = ContractConfig::new(CostModel::quadratic(), 1.0).unwrap().with_grid_size(256).unwrap();
        let rho = PrincipalBenefit::Power { coeff: 2.0, exponent: 0.8 };
        let prior = TypePrior::new(vec![(t1, w), (t1 + gap, 1.0 - w)]).unwrap();
        let s = stackelberg::solve_ex_ante(&cfg, &rho, &prior).unwrap();
        let ci: f64 = prior
            .support()
            .map(|(t, w)| w * stackelberg::solve_complete_info(&cfg, &rho, th(t)).unwrap().value)
            .sum();
        prop_assert!(s.value <= ci + 1e-9);
        for u in [0.3, 0.6, 0.9, 1.2] {
            let fixed: f64 = prior
                .support()
                .map(|(t, w)| {
                    let a = agent::best_response(&cfg, u, th(t)).unwrap();
                    w * stackelberg::principal_utility(&rho, u, a).unwrap()
                })
                .sum();
            prop_assert!(s.value >= fixed - 1e-9);
        }
    }
}

#[test]
fn bregman_agrees_with_deviation_search_on_random_incentives() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0).unwrap().with_interval(0.1, 5.0).unwrap();
    let grid = truthfulness::default_bregman_grid(&cfg);
    for _ in 0..10 {
        let constant = rng.gen_bool(0.3);
        let u2 = if constant {
            IncentiveFunction::constant(rng.gen_range(0.5..2.0)).unwrap()
        } else {
            let knots = vec![0.1, rng.gen_range(0.5..2.5), 5.0];
            let values = (0..3).map(|_| rng.gen_range(0.5..2.0)).collect();
            IncentiveFunction::piecewise_linear(knots, values).unwrap()
        };
        let report = truthfulness::check_bregman_truthful(&cfg, &u2, Some(&grid)).unwrap();
        // types whose truthful action is a grid node
        let any_gain = grid
            .iter()
            .step_by(17)
            .map(|&a| agent::deviation_search_mh(&cfg, &u2, th(1.0 / a)).unwrap())
            .any(|r| !r.truthful);
        assert_eq!(report.is_truthful(), !any_gain, "{u2:?}");
    }
}
