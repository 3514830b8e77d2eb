use pairsurv::max_test::TimeGrid;
use pairsurv::sim_engine::{
    calibrate_b, censoring_rate, derive_seed, generate_detailed, generate_pairs, power_study, sample_censoring_time,
    sample_survival_time, CalibrationSettings, CensoringForm, CensoringMeasure, ScenarioId, ScenarioSpec, StudyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn spec(id: ScenarioId, form: CensoringForm, b: f64) -> ScenarioSpec {
    ScenarioSpec::preset(id, form, b).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn inversion_against_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let id = ScenarioId::ALL[k % 5];
        let s = spec(id, CensoringForm::CovariateFree, 2.0);
        let x: f64 = rng.sample(StandardNormal);
        let z = rng.random_range(0..2u8);
        let u: f64 = rng.random_range(1e-6..1.0);
        let t = sample_survival_time(x, z, &s, u);
        assert!(t.is_finite());
        let h = simpson(|v| s.hazard(v, x, z), 0.0, t, 4000);
        worst = worst.max((h + u.ln()).abs());
    }
    assert!(worst <= 1e-8, "worst {worst:e}");
}

#[test]
fn exponential_means() {
    let s = spec(ScenarioId::NoEffect, CensoringForm::CovariateFree, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000;
    let (mut sum_s, mut sum_c) = (0.0, 0.0);
    for _ in 0..n {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let v: f64 = rng.random_range(f64::EPSILON..1.0);
        sum_s += sample_survival_time(0.0, 0, &s, u);
        sum_c += sample_censoring_time(0.0, &s, v);
    }
    let (ms, mc) = (sum_s / n as f64, sum_c / n as f64);
    assert!((ms - 5.0).abs() / 5.0 < 0.01, "{ms}");
    assert!((mc - 10.0).abs() / 10.0 < 0.01, "{mc}");
}

#[test]
fn covariate_free_censoring_is_independent_of_survival() {
    let s = spec(ScenarioId::Ph, CensoringForm::CovariateFree, 2.0);
    let sims = generate_detailed(100_000, &s, 3).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = sims.iter().map(|p| (p.survival(0).min(50.0), p.censoring[0])).unzip();
    let n = xs.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(&xs), mean(&ys));
    let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let sd = |v: &[f64], m: f64| (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
    let r = cov / (sd(&xs, mx) * sd(&ys, my));
    assert!(r.abs() <= 3.0 / n.sqrt(), "r = {r}");

    // the covariate-dependent form is visibly correlated
    let s = spec(ScenarioId::Ph, CensoringForm::CovariateDependent, 2.0);
    let sims = generate_detailed(100_000, &s, 3).unwrap();
    let pos = sims.iter().filter(|p| (p.survival(0) < 5.0) == (p.censoring[0] < 5.0)).count() as f64;
    assert!(pos / n > 0.55);
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn no_effect_arms_share_a_law() {
    let s = spec(ScenarioId::NoEffect, CensoringForm::CovariateDependent, 2.0);
    let sims = generate_detailed(100_000, &s, 4).unwrap();
    // treated unit of one half of the pairs against control unit of the other half
    let (mut treated, mut control) = (Vec::new(), Vec::new());
    for (k, p) in sims.iter().enumerate() {
        let t = if p.first_treated { 0 } else { 1 };
        if k % 2 == 0 {
            treated.push(p.survival(t));
        } else {
            control.push(p.survival(1 - t));
        }
    }
    let n = treated.len() as f64;
    let crit = 1.628 * (2.0 / n).sqrt();
    assert!(ks_statistic(treated, control) < crit);
}

#[test]
fn admin_cutoff_and_order_independence() {
    let s = spec(ScenarioId::LateDiv, CensoringForm::CovariateDependent, 1.5);
    let sample = generate_pairs(20_000, &s, 5).unwrap();
    assert!(sample.units().iter().all(|u| u.time <= 5.0));
    // pair k of a longer sample equals pair k of a shorter one
    let short = generate_pairs(100, &s, 5).unwrap();
    assert_eq!(short.pairs(), &sample.pairs()[..100]);
}

#[test]
fn calibration_reprobes_within_tolerance() {
    let s = spec(ScenarioId::EarlyDiv, CensoringForm::CovariateDependent, 2.0);
    let settings = CalibrationSettings {
        probe_pairs: 50_000,
        ..CalibrationSettings::default()
    };
    let cal = calibrate_b(&s, &settings, 6).unwrap();
    assert!((cal.achieved_rate - 0.25).abs() <= settings.tol);
    let fresh = s.with_b(cal.b).unwrap();
    let sims = generate_detailed(50_000, &fresh, 999).unwrap();
    let rate = censoring_rate(&sims, &fresh, CensoringMeasure::BeforeCutoff);
    let se = (0.25 * 0.75 / 100_000.0f64).sqrt();
    assert!((rate - 0.25).abs() <= settings.tol + 2.0 * se, "{rate}");

    let mut prev = 1.0;
    for b in [1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0] {
        let sp = s.with_b(b).unwrap();
        let r = censoring_rate(&generate_detailed(20_000, &sp, 7).unwrap(), &sp, CensoringMeasure::BeforeCutoff);
        assert!(r < prev);
        prev = r;
    }
}

#[test]
fn latent_measure_needs_more_b() {
    let s = spec(ScenarioId::Ph, CensoringForm::CovariateFree, 2.0);
    let base = CalibrationSettings {
        probe_pairs: 40_000,
        ..CalibrationSettings::default()
    };
    let a = calibrate_b(&s, &base, 8).unwrap();
    let b = calibrate_b(
        &s,
        &CalibrationSettings {
            measure: CensoringMeasure::Latent,
            ..base
        },
        8,
    )
    .unwrap();
    assert!(b.b > a.b);
}

fn small_config(seed: u64) -> StudyConfig {
    let mut cfg = StudyConfig::new(ScenarioId::Crossing, CensoringForm::CovariateDependent);
    cfg.b = Some(2.0);
    cfg.pairs = 60;
    cfg.replications = 12;
    cfg.seed = seed;
    cfg.gammas = vec![1.0, 1.5];
    cfg.closed_testing = true;
    cfg.grid = TimeGrid::new(vec![1.0, 3.0]).unwrap();
    cfg
}

#[test]
fn power_study_is_deterministic_across_thread_counts() {
    let cfg = small_config(10);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| power_study(&cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| power_study(&cfg).unwrap());
    assert_eq!(one, many);
    assert_ne!(one, power_study(&small_config(11)).unwrap());
    // T_1, T_3, M, PPW, closed_any for each gamma
    assert_eq!(one.rows.len(), 2 * 5);
    for r in &one.rows {
        assert!((0.0..=1.0).contains(&r.rate));
    }
}

#[test]
fn power_study_rejects_bad_configs() {
    let mut cfg = small_config(1);
    cfg.replications = 0;
    assert!(power_study(&cfg).is_err());
    let mut cfg = small_config(1);
    cfg.pairs = 1;
    assert!(power_study(&cfg).is_err());
    let mut cfg = small_config(1);
    cfg.gammas = vec![0.5];
    assert!(power_study(&cfg).is_err());
}

#[test]
fn seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for m in 0..20 {
        for r in 0..500 {
            assert!(seen.insert(derive_seed(m, r)));
        }
    }
}
