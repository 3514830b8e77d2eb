use std::path::Path;

use pairsurv::sim_engine::{CalibrationSettings, CensoringForm, CensoringMeasure, ScenarioId, StudyConfig};
use pairsurv::TimeGrid;
use serde::{Deserialize, Serialize};

use crate::exit::{Failure, Kind};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    target_rate: Option<f64>,
    tol: Option<f64>,
    probe_pairs: Option<usize>,
    measure: Option<CensoringMeasure>,
}

/// Study configuration as written on disk. Missing keys fall back to the
/// library defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    scenario: Option<ScenarioId>,
    scenarios: Option<Vec<ScenarioId>>,
    censoring_form: CensoringForm,
    b: Option<f64>,
    pairs: Option<usize>,
    replications: Option<usize>,
    alpha: Option<f64>,
    grid: Option<Vec<f64>>,
    seed: Option<u64>,
    gammas: Option<Vec<f64>>,
    closed_testing: Option<bool>,
    mvn_tol: Option<f64>,
    #[serde(default)]
    calibration: CalibrationFile,
}

/// Fully resolved study: one library config per scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub scenarios: Vec<ScenarioId>,
    pub base: StudyConfig,
}

impl Study {
    pub fn for_scenario(&self, id: ScenarioId) -> StudyConfig {
        StudyConfig {
            scenario: id,
            ..self.base.clone()
        }
    }
}

fn config_err(msg: String) -> anyhow::Error {
    Failure::new(Kind::Config, msg).into()
}

/// Seed precedence: command-line flag, then the file, then the environment default.
pub fn load(path: &Path, seed_flag: Option<u64>, env_seed: Option<u64>, replications: Option<usize>) -> anyhow::Result<Study> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let file: StudyFile = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;

    let scenarios = match (file.scenario, file.scenarios) {
        (Some(_), Some(_)) => return Err(config_err("give either `scenario` or `scenarios`, not both".into())),
        (Some(s), None) => vec![s],
        (None, Some(v)) if !v.is_empty() => v,
        _ => return Err(config_err("no scenario given".into())),
    };

    let mut base = StudyConfig::new(scenarios[0], file.censoring_form);
    base.b = file.b;
    if let Some(v) = file.pairs {
        base.pairs = v;
    }
    if let Some(v) = replications.or(file.replications) {
        base.replications = v;
    }
    if let Some(v) = file.alpha {
        base.alpha = v;
    }
    if let Some(v) = file.grid {
        base.grid = TimeGrid::new(v).map_err(|e| config_err(format!("grid: {e}")))?;
    }
    if let Some(v) = seed_flag.or(file.seed).or(env_seed) {
        base.seed = v;
    }
    if let Some(v) = file.gammas {
        base.gammas = v;
    }
    if let Some(v) = file.closed_testing {
        base.closed_testing = v;
    }
    if let Some(v) = file.mvn_tol {
        base.mvn_tol = v;
    }
    let c = file.calibration;
    let d = CalibrationSettings::default();
    base.calibration = CalibrationSettings {
        target_rate: c.target_rate.unwrap_or(d.target_rate),
        tol: c.tol.unwrap_or(d.tol),
        probe_pairs: c.probe_pairs.unwrap_or(d.probe_pairs),
        measure: c.measure.unwrap_or(d.measure),
    };
    base.validate()?;
    Ok(Study { scenarios, base })
}
