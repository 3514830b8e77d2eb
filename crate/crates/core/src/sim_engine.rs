//! Paired censored data under time-varying hazards, censoring calibration, and
//! the power and design-sensitivity study drivers.
//!
//! Potential survival times follow `h(t | x, z) = lambda * exp(x + eta(t, z))`
//! with `eta(t, z) = slope_common * t + z * (slope_z * t + intercept_z)`, so
//! the cumulative hazard inverts in closed form. `x ~ N(0, 1)` is shared by
//! both units of a pair. Censoring is exponential with rate `lambda / b`,
//! multiplied by `exp(x)` in the covariate-dependent form, and every observed
//! time is truncated at the administrative cutoff.
//!
//! Seeding: master seed -> replication seed -> one ChaCha stream per pair, so
//! a sample does not depend on how pairs or replications are scheduled.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_testing::closed_test_from_diffs;
use crate::design_sensitivity::{design_sensitivities, DesignSensitivityResult};
use crate::error::{Error, Result};
use crate::max_test::{diff_matrix, overall_test_from_diffs, OverallMethod, TimeGrid};
use crate::mvn::MvnOptions;
use crate::rand_test::{null_moments, pvalue_normal, Direction, Gamma, Method};
use crate::survival::{pair_differences, Assignment, Pair, PairedSample, ScoreKind, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    NoEffect,
    Ph,
    EarlyDiv,
    Crossing,
    LateDiv,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::NoEffect,
        ScenarioId::Ph,
        ScenarioId::EarlyDiv,
        ScenarioId::Crossing,
        ScenarioId::LateDiv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::NoEffect => "no_effect",
            ScenarioId::Ph => "ph",
            ScenarioId::EarlyDiv => "early_div",
            ScenarioId::Crossing => "crossing",
            ScenarioId::LateDiv => "late_div",
        }
    }

    pub fn eta(self) -> Eta {
        let (slope_z, intercept_z, slope_common) = match self {
            ScenarioId::NoEffect => (0.0, 0.0, 0.0),
            ScenarioId::Ph => (0.0, -0.4, 0.0),
            ScenarioId::EarlyDiv => (0.1, -0.5, 0.0),
            ScenarioId::Crossing => (0.3, -0.6, 0.0),
            ScenarioId::LateDiv => (-0.14, 0.0, 0.15),
        };
        Eta {
            slope_z,
            intercept_z,
            slope_common,
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{s}`")))
    }
}

/// `eta(t, z) = slope_common * t + z * (slope_z * t + intercept_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub slope_z: f64,
    pub intercept_z: f64,
    pub slope_common: f64,
}

impl Eta {
    pub fn value(&self, t: f64, z: u8) -> f64 {
        self.slope_common * t + z as f64 * (self.slope_z * t + self.intercept_z)
    }

    fn time_slope(&self, z: u8) -> f64 {
        self.slope_common + z as f64 * self.slope_z
    }

    fn constant(&self, z: u8) -> f64 {
        z as f64 * self.intercept_z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringForm {
    CovariateDependent,
    CovariateFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub lambda: f64,
    pub eta: Eta,
    pub b: f64,
    pub admin_cutoff: f64,
    pub censoring_form: CensoringForm,
}

pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const DEFAULT_ADMIN_CUTOFF: f64 = 5.0;

impl ScenarioSpec {
    pub fn preset(id: ScenarioId, censoring_form: CensoringForm, b: f64) -> Result<Self> {
        let spec = Self {
            id,
            lambda: DEFAULT_LAMBDA,
            eta: id.eta(),
            b,
            admin_cutoff: DEFAULT_ADMIN_CUTOFF,
            censoring_form,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be positive", self.lambda)));
        }
        if !(self.b > 1.0 && self.b.is_finite()) {
            return Err(Error::InvalidArgument(format!("b {} must exceed 1", self.b)));
        }
        if !(self.admin_cutoff > 0.0) {
            return Err(Error::InvalidArgument("administrative cutoff must be positive".into()));
        }
        Ok(())
    }

    pub fn with_b(mut self, b: f64) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    /// `H(t | x, z)`, the cumulative hazard of the potential survival time.
    pub fn cumulative_hazard(&self, t: f64, x: f64, z: u8) -> f64 {
        let k = self.eta.time_slope(z);
        let r = self.lambda * (x + self.eta.constant(z)).exp();
        if k == 0.0 {
            r * t
        } else {
            r * (k * t).exp_m1() / k
        }
    }

    pub fn hazard(&self, t: f64, x: f64, z: u8) -> f64 {
        self.lambda * (x + self.eta.value(t, z)).exp()
    }

    fn censoring_rate(&self, x: f64) -> f64 {
        let base = self.lambda / self.b;
        match self.censoring_form {
            CensoringForm::CovariateDependent => base * x.exp(),
            CensoringForm::CovariateFree => base,
        }
    }
}

/// Solve `H(S) = -ln(u)` for the potential survival time under arm `z`.
/// Returns `+inf` when a decreasing hazard never accumulates enough mass.
pub fn sample_survival_time(x: f64, z: u8, spec: &ScenarioSpec, u: f64) -> f64 {
    let e = -u.ln();
    let k = spec.eta.time_slope(z);
    let r = spec.lambda * (x + spec.eta.constant(z)).exp();
    if k == 0.0 {
        e / r
    } else {
        let arg = k * e / r;
        if arg <= -1.0 {
            f64::INFINITY
        } else {
            arg.ln_1p() / k
        }
    }
}

pub fn sample_censoring_time(x: f64, spec: &ScenarioSpec, u: f64) -> f64 {
    -u.ln() / spec.censoring_rate(x)
}

/// Everything drawn for one pair before the scenario is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPair {
    pub x: f64,
    pub u_survival: [f64; 2],
    pub u_censoring: [f64; 2],
    pub first_treated: bool,
}

impl LatentPair {
    fn draw(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let x: f64 = rng.sample(StandardNormal);
        let u_survival = [rng.sample(Open01), rng.sample(Open01)];
        let u_censoring = [rng.sample(Open01), rng.sample(Open01)];
        let first_treated = rng.random::<bool>();
        Self {
            x,
            u_survival,
            u_censoring,
            first_treated,
        }
    }
}

/// Latent draws and realized quantities for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedPair {
    pub x: f64,
    /// `[unit][arm]` potential survival times; one uniform per unit feeds both arms.
    pub potential: [[f64; 2]; 2],
    pub censoring: [f64; 2],
    pub first_treated: bool,
    pub pair: Pair,
}

impl SimulatedPair {
    fn realize(latent: &LatentPair, spec: &ScenarioSpec) -> Self {
        let mut potential = [[0.0; 2]; 2];
        let mut censoring = [0.0; 2];
        let mut units = [Unit { time: 0.0, event: false }; 2];
        for j in 0..2 {
            let u = latent.u_survival[j];
            potential[j] = [
                sample_survival_time(latent.x, 0, spec, u),
                sample_survival_time(latent.x, 1, spec, u),
            ];
            censoring[j] = sample_censoring_time(latent.x, spec, latent.u_censoring[j]);
            let treated = (j == 0) == latent.first_treated;
            let s = potential[j][treated as usize];
            let bound = censoring[j].min(spec.admin_cutoff);
            units[j] = Unit {
                time: s.min(bound),
                event: s <= bound,
            };
        }
        let assignment = if latent.first_treated {
            Assignment::FirstTreated
        } else {
            Assignment::SecondTreated
        };
        Self {
            x: latent.x,
            potential,
            censoring,
            first_treated: latent.first_treated,
            pair: Pair::new(units[0], units[1], assignment),
        }
    }

    /// Realized survival time of unit `j`.
    pub fn survival(&self, j: usize) -> f64 {
        let treated = (j == 0) == self.first_treated;
        self.potential[j][treated as usize]
    }
}

pub fn generate_detailed(pairs: usize, spec: &ScenarioSpec, seed: u64) -> Result<Vec<SimulatedPair>> {
    if pairs == 0 {
        return Err(Error::EmptyInput);
    }
    spec.validate()?;
    Ok((0..pairs as u64)
        .map(|i| SimulatedPair::realize(&LatentPair::draw(seed, i), spec))
        .collect())
}

pub fn generate_pairs(pairs: usize, spec: &ScenarioSpec, seed: u64) -> Result<PairedSample> {
    let sims = generate_detailed(pairs, spec, seed)?;
    PairedSample::new(sims.into_iter().map(|s| s.pair).collect())
}

/// Which event counts as non-administrative censoring during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringMeasure {
    /// `C < min(S, cutoff)`: censoring visible in the observed data.
    #[default]
    BeforeCutoff,
    /// `C < S`, ignoring the administrative cutoff.
    Latent,
}

impl CensoringMeasure {
    fn bound(self, s: f64, cutoff: f64) -> f64 {
        match self {
            CensoringMeasure::BeforeCutoff => s.min(cutoff),
            CensoringMeasure::Latent => s,
        }
    }
}

/// Fraction of units counted as censored under `measure`.
pub fn censoring_rate(sims: &[SimulatedPair], spec: &ScenarioSpec, measure: CensoringMeasure) -> f64 {
    let mut censored = 0usize;
    for s in sims {
        for j in 0..2 {
            if s.censoring[j] < measure.bound(s.survival(j), spec.admin_cutoff) {
                censored += 1;
            }
        }
    }
    censored as f64 / (2 * sims.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub target_rate: f64,
    pub tol: f64,
    pub probe_pairs: usize,
    #[serde(default)]
    pub measure: CensoringMeasure,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            target_rate: 0.25,
            tol: 0.005,
            probe_pairs: 200_000,
            measure: CensoringMeasure::BeforeCutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub b: f64,
    pub achieved_rate: f64,
    pub target_rate: f64,
    pub probe_pairs: usize,
    pub seed: u64,
}

const B_RANGE: (f64, f64) = (1.01, 1e4);

/// Bisection on `b` for the non-administrative censoring proportion. The probe
/// sample is drawn once, so the estimated rate is exactly monotone in `b`.
pub fn calibrate_b(spec: &ScenarioSpec, settings: &CalibrationSettings, seed: u64) -> Result<Calibration> {
    let target = settings.target_rate;
    if settings.probe_pairs == 0 {
        return Err(Error::EmptyInput);
    }
    let probe = generate_detailed(settings.probe_pairs, spec, seed)?;
    // censoring time scales linearly in b: C(b) = C(b0) * b / b0
    let scaled: Vec<(f64, f64)> = probe
        .iter()
        .flat_map(|s| {
            (0..2).map(move |j| (s.censoring[j] / spec.b, settings.measure.bound(s.survival(j), spec.admin_cutoff)))
        })
        .collect();
    let rate = |b: f64| -> f64 { scaled.iter().filter(|(c, s)| c * b < *s).count() as f64 / scaled.len() as f64 };

    let (lo_rate, hi_rate) = (rate(B_RANGE.0), rate(B_RANGE.1));
    if !(target > hi_rate && target < lo_rate) || !(0.0..1.0).contains(&target) {
        return Err(Error::TargetUnreachable {
            target,
            low: hi_rate,
            high: lo_rate,
        });
    }
    let (mut lo, mut hi) = (B_RANGE.0.ln(), B_RANGE.1.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let b = (0.5 * (lo + hi)).exp();
    let achieved_rate = rate(b);
    if (achieved_rate - target).abs() > settings.tol {
        return Err(Error::TargetUnreachable {
            target,
            low: achieved_rate,
            high: achieved_rate,
        });
    }
    Ok(Calibration {
        b,
        achieved_rate,
        target_rate: target,
        probe_pairs: settings.probe_pairs,
        seed,
    })
}

/// SplitMix64 finalizer over `(master, stream)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const CALIBRATION_STREAM: u64 = u64::MAX;
const DESIGN_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioId,
    pub censoring_form: CensoringForm,
    /// Fixed censoring divisor; calibrated when absent.
    pub b: Option<f64>,
    pub pairs: usize,
    pub replications: usize,
    pub alpha: f64,
    pub grid: TimeGrid,
    pub seed: u64,
    pub gammas: Vec<f64>,
    /// Also report how often closed testing rejects any `H0(tau)`.
    pub closed_testing: bool,
    pub calibration: CalibrationSettings,
    pub mvn_tol: f64,
}

impl StudyConfig {
    pub fn new(scenario: ScenarioId, censoring_form: CensoringForm) -> Self {
        Self {
            scenario,
            censoring_form,
            b: None,
            pairs: 500,
            replications: 2000,
            alpha: 0.05,
            grid: TimeGrid::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).expect("valid grid"),
            seed: 20_240_601,
            gammas: vec![1.0],
            closed_testing: false,
            calibration: CalibrationSettings::default(),
            mvn_tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if self.pairs < 2 {
            return Err(Error::InvalidArgument("pairs must be >= 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.gammas.is_empty() {
            return Err(Error::InvalidArgument("at least one gamma is required".into()));
        }
        for g in &self.gammas {
            Gamma::new(*g)?;
        }
        Ok(())
    }

    /// Scenario with `b` fixed, calibrating it if needed.
    pub fn resolve_scenario(&self) -> Result<(ScenarioSpec, Option<Calibration>)> {
        match self.b {
            Some(b) => Ok((ScenarioSpec::preset(self.scenario, self.censoring_form, b)?, None)),
            None => {
                let draft = ScenarioSpec::preset(self.scenario, self.censoring_form, 2.0)?;
                let cal = calibrate_b(&draft, &self.calibration, derive_seed(self.seed, CALIBRATION_STREAM))?;
                Ok((draft.with_b(cal.b)?, Some(cal)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub test: String,
    pub gamma: f64,
    pub rejections: usize,
    pub replications: usize,
    pub rate: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub scenario: ScenarioSpec,
    pub calibration: Option<Calibration>,
    pub pairs: usize,
    pub alpha: f64,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn rate(&self, test: &str, gamma: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.test == test && r.gamma == gamma).map(|r| r.rate)
    }
}

/// Row labels in table order.
pub fn power_test_names(grid: &TimeGrid, closed_testing: bool) -> Vec<String> {
    let mut names: Vec<String> = grid.taus().iter().map(|t| format!("T_{t}")).collect();
    names.push("M".into());
    names.push("PPW".into());
    if closed_testing {
        names.push("closed_any".into());
    }
    names
}

fn replicate(config: &StudyConfig, spec: &ScenarioSpec, rep: usize) -> Result<Vec<Vec<bool>>> {
    let seed = derive_seed(config.seed, rep as u64);
    let sample = generate_pairs(config.pairs, spec, seed)?;
    let diffs = diff_matrix(&sample, &config.grid, false)?;
    let signs = sample.signs();
    let ppw = pair_differences(&sample, ScoreKind::Pw, None)?;
    let mvn = MvnOptions {
        abs_tol: config.mvn_tol,
        seed: derive_seed(seed, 1),
        ..MvnOptions::default()
    };
    let alpha = config.alpha;

    config
        .gammas
        .iter()
        .map(|&g| {
            let gamma = Gamma::new(g)?;
            let mut out = Vec::with_capacity(config.grid.len() + 3);
            for col in &diffs.columns {
                let t: f64 = col.iter().zip(&signs).map(|(d, v)| d * v).sum();
                let (mu, var) = null_moments(col, gamma);
                out.push(pvalue_normal(t, mu, var, Direction::Upper) <= alpha);
            }
            let m = overall_test_from_diffs(&diffs, &sample, gamma, OverallMethod::Normal(mvn))?;
            out.push(m.result.p_value <= alpha);
            let p = crate::rand_test::score_test(&ppw, &sample, gamma, Method::Normal, Direction::Upper)?;
            out.push(p.p_value <= alpha);
            if config.closed_testing {
                let r = closed_test_from_diffs(&diffs, &sample, alpha, gamma, &mvn)?;
                out.push(r.entries.iter().any(|e| e.rejected));
            }
            Ok(out)
        })
        .collect()
}

/// Rejection rates of the time-specific tests, `M`, `PPW` (and optionally
/// closed testing) over independent replications, for each configured Gamma.
pub fn power_study(config: &StudyConfig) -> Result<PowerTable> {
    config.validate()?;
    let (spec, calibration) = config.resolve_scenario()?;
    let per_rep: Vec<Vec<Vec<bool>>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| replicate(config, &spec, rep))
        .collect::<Result<_>>()?;

    let names = power_test_names(&config.grid, config.closed_testing);
    let n = config.replications;
    let mut rows = Vec::new();
    for (gi, &g) in config.gammas.iter().enumerate() {
        for (ti, name) in names.iter().enumerate() {
            let rejections = per_rep.iter().filter(|r| r[gi][ti]).count();
            let rate = rejections as f64 / n as f64;
            rows.push(PowerRow {
                test: name.clone(),
                gamma: g,
                rejections,
                replications: n,
                rate,
                mc_se: (rate * (1.0 - rate) / n as f64).sqrt(),
            });
        }
    }
    Ok(PowerTable {
        scenario: spec,
        calibration,
        pairs: config.pairs,
        alpha: config.alpha,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSensitivityStudy {
    pub result: DesignSensitivityResult,
    pub calibration: Option<Calibration>,
    pub warnings: Vec<String>,
}

/// One large sample, then plug-in design sensitivities over the grid.
pub fn design_sensitivity_study(config: &StudyConfig) -> Result<DesignSensitivityStudy> {
    config.validate()?;
    let mut warnings = Vec::new();
    if config.censoring_form == CensoringForm::CovariateDependent {
        warnings.push(
            "covariate-dependent censoring is not random censoring; the design sensitivity formulas may not apply"
                .to_string(),
        );
    }
    let (spec, calibration) = config.resolve_scenario()?;
    let sample = generate_pairs(config.pairs, &spec, derive_seed(config.seed, DESIGN_STREAM))?;
    let diffs = diff_matrix(&sample, &config.grid, false)?;
    Ok(DesignSensitivityStudy {
        result: design_sensitivities(&diffs, &sample, spec)?,
        calibration,
        warnings,
    })
}
