//! Design sensitivities from sample moments of the pair differences.
//!
//! For a single analysis time the design sensitivity is
//! `(E|d| + E[dV]) / (E|d| - E[dV])`; for the max statistic the two
//! normalized moment vectors `E|d_l| / sqrt(E d_l^2)` and
//! `E[d_l V] / sqrt(E d_l^2)` are maximized separately over `l` before
//! forming the same ratio. The expectations are replaced by averages over a
//! large simulated sample; the influence-function boundedness these formulas
//! rely on is assumed, not checked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::max_test::{ColumnLabel, DiffMatrix};
use crate::sim_engine::ScenarioSpec;
use crate::survival::PairedSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub labels: Vec<ColumnLabel>,
    pub e_abs: Vec<f64>,
    pub e_dv: Vec<f64>,
    pub e_sq: Vec<f64>,
}

impl MomentEstimates {
    pub fn n_columns(&self) -> usize {
        self.e_abs.len()
    }
}

pub fn estimate_moments(diffs: &DiffMatrix, sample: &PairedSample) -> Result<MomentEstimates> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if diffs.n_pairs() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: diffs.n_pairs(),
        });
    }
    let v = sample.signs();
    let nf = n as f64;
    let mut e_abs = Vec::with_capacity(diffs.n_columns());
    let mut e_dv = Vec::with_capacity(diffs.n_columns());
    let mut e_sq = Vec::with_capacity(diffs.n_columns());
    for col in &diffs.columns {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (d, s) in col.iter().zip(&v) {
            a += d.abs();
            b += d * s;
            c += d * d;
        }
        e_abs.push(a / nf);
        e_dv.push(b / nf);
        e_sq.push(c / nf);
    }
    Ok(MomentEstimates {
        labels: diffs.labels.clone(),
        e_abs,
        e_dv,
        e_sq,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if a - b <= 0.0 {
        f64::INFINITY
    } else {
        (a + b) / (a - b)
    }
}

/// Design sensitivity of the time-specific test for one column.
/// Returns `+inf` when every informative pair favours treatment.
pub fn design_sensitivity_time(moments: &MomentEstimates, column: usize) -> Result<f64> {
    if column >= moments.n_columns() {
        return Err(Error::InvalidArgument(format!("column {column} out of range")));
    }
    let a = moments.e_abs[column];
    if a <= 0.0 {
        return Err(Error::NoInformation(column));
    }
    Ok(ratio(a, moments.e_dv[column]))
}

/// Design sensitivity of the max statistic over all columns.
pub fn design_sensitivity_overall(moments: &MomentEstimates) -> Result<f64> {
    if moments.n_columns() == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(l) = moments.e_sq.iter().position(|s| *s <= 0.0) {
        return Err(Error::NoInformation(l));
    }
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for l in 0..moments.n_columns() {
        let s = moments.e_sq[l].sqrt();
        a = a.max(moments.e_abs[l] / s);
        b = b.max(moments.e_dv[l] / s);
    }
    Ok(ratio(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSensitivityEntry {
    pub label: ColumnLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSensitivityResult {
    pub per_tau: Vec<DesignSensitivityEntry>,
    pub overall: f64,
    pub sample_size: usize,
    pub scenario: ScenarioSpec,
    pub moments: MomentEstimates,
}

pub fn design_sensitivities(
    diffs: &DiffMatrix,
    sample: &PairedSample,
    scenario: ScenarioSpec,
) -> Result<DesignSensitivityResult> {
    let moments = estimate_moments(diffs, sample)?;
    let per_tau = (0..moments.n_columns())
        .map(|l| {
            Ok(DesignSensitivityEntry {
                label: moments.labels[l],
                value: design_sensitivity_time(&moments, l)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DesignSensitivityResult {
        per_tau,
        overall: design_sensitivity_overall(&moments)?,
        sample_size: sample.len(),
        scenario,
        moments,
    })
}
