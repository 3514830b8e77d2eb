use pairsurv::max_test::{diff_matrix, overall_test, OverallMethod, TimeGrid};
use pairsurv::mvn::MvnOptions;
use pairsurv::rand_test::{null_moments, pvalue_exact, pvalue_normal, t_statistic, Direction, Gamma};
use pairsurv::survival::{
    km_at, km_estimate, logrank_scores, pair_differences, pseudo_observations, pseudo_observations_naive, pw_scores,
    Assignment, Pair, PairedSample, ScoreKind, Unit,
};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = Unit> {
    // quarter-unit grid so ties between events and censorings are common
    (0u32..40, any::<bool>()).prop_map(|(k, e)| Unit::new(k as f64 / 4.0, e).unwrap())
}

fn units(max: usize) -> impl Strategy<Value = Vec<Unit>> {
    prop::collection::vec(unit(), 2..max)
}

fn pair() -> impl Strategy<Value = Pair> {
    (unit(), unit(), any::<bool>()).prop_map(|(a, b, first)| {
        Pair::new(a, b, if first { Assignment::FirstTreated } else { Assignment::SecondTreated })
    })
}

fn sample(max: usize) -> impl Strategy<Value = PairedSample> {
    prop::collection::vec(pair(), 1..max).prop_map(|p| PairedSample::new(p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_pseudo_matches_naive(u in units(120), tau in 0.0f64..11.0) {
        let fast = pseudo_observations(&u, tau).unwrap();
        let slow = pseudo_observations_naive(&u, tau).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn uncensored_pseudo_is_indicator(times in prop::collection::vec(0u32..40, 2..80), k in 0u32..40) {
        let u: Vec<Unit> = times.iter().map(|&t| Unit::event(t as f64 / 4.0).unwrap()).collect();
        let tau = k as f64 / 4.0 + 0.125;
        for (q, unit) in pseudo_observations(&u, tau).unwrap().iter().zip(&u) {
            let want = if unit.time > tau { 1.0 } else { 0.0 };
            prop_assert!((q - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn km_is_a_survival_curve(u in units(100)) {
        let c = km_estimate(&u).unwrap();
        let mut prev = 1.0;
        for k in 0..48 {
            let v = km_at(&c, k as f64 / 4.0);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn pw_scores_bounded(u in units(100)) {
        for q in pw_scores(&u).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn logrank_scores_sum_to_zero(u in units(100)) {
        // sum of H(Y) equals the number of events
        let s: f64 = logrank_scores(&u).unwrap().iter().sum();
        prop_assert!(s.abs() <= 1e-9);
    }

    #[test]
    fn statistic_ignores_pair_order(s in sample(40), tau in 0.0f64..10.0, rot in 0usize..40) {
        let mut pairs = s.pairs().to_vec();
        let r = rot % pairs.len();
        pairs.rotate_left(r);
        let t = PairedSample::new(pairs).unwrap();
        for kind in [ScoreKind::Pseudo, ScoreKind::Logrank, ScoreKind::Pw] {
            let a = t_statistic(&pair_differences(&s, kind, Some(tau)).unwrap(), &s).unwrap();
            let b = t_statistic(&pair_differences(&t, kind, Some(tau)).unwrap(), &t).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn swapping_units_and_label_keeps_statistic(s in sample(40), tau in 0.0f64..10.0, k in 0usize..40) {
        let mut pairs = s.pairs().to_vec();
        let i = k % pairs.len();
        let p = pairs[i];
        pairs[i] = Pair::new(p.second, p.first, Assignment::from_sign(-p.assignment.sign()));
        let t = PairedSample::new(pairs).unwrap();
        let a = t_statistic(&pair_differences(&s, ScoreKind::Pseudo, Some(tau)).unwrap(), &s).unwrap();
        let b = t_statistic(&pair_differences(&t, ScoreKind::Pseudo, Some(tau)).unwrap(), &t).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn tied_pairs_are_inert(s in sample(30), tied in unit(), tau in 0.0f64..10.0) {
        let mut pairs = s.pairs().to_vec();
        pairs.push(Pair::new(tied, tied, Assignment::SecondTreated));
        let t = PairedSample::new(pairs).unwrap();
        for kind in [ScoreKind::Pseudo, ScoreKind::Logrank, ScoreKind::Pw] {
            let d = pair_differences(&t, kind, Some(tau)).unwrap();
            prop_assert_eq!(*d.d.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn worst_case_p_grows_with_gamma(s in sample(14), tau in 0.5f64..8.0) {
        let d = pair_differences(&s, ScoreKind::Pseudo, Some(tau)).unwrap();
        let t = t_statistic(&d, &s).unwrap();
        let mut prev_n = 0.0;
        let mut prev_e = 0.0;
        for k in 0..8 {
            let g = Gamma::new(1.0 + 0.3 * k as f64).unwrap();
            let (mu, var) = null_moments(&d.d, g);
            let pn = pvalue_normal(t, mu, var, Direction::Upper);
            let pe = pvalue_exact(&d.d, t, g, Direction::Upper).unwrap();
            prop_assert!(pn >= prev_n - 1e-12);
            prop_assert!(pe >= prev_e - 1e-12);
            prev_n = pn;
            prev_e = pe;
        }
    }

    #[test]
    fn overall_p_is_a_probability(s in sample(30), gam in 1.0f64..3.0) {
        let grid = TimeGrid::new(vec![1.0, 3.0, 6.0]).unwrap();
        if let Ok(r) = overall_test(&s, &grid, Gamma::new(gam).unwrap(), true, OverallMethod::Normal(MvnOptions::default())) {
            prop_assert!((0.0..=1.0).contains(&r.result.p_value));
        }
        let d = diff_matrix(&s, &grid, true).unwrap();
        prop_assert_eq!(d.n_columns(), 4);
    }
}
