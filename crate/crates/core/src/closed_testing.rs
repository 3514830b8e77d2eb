//! Closed testing over the analysis grid: `H0(tau_l)` is rejected when every
//! intersection hypothesis over a subset containing `tau_l` is rejected by the
//! max test restricted to that subset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::max_test::{diff_matrix, ColumnLabel, overall_test_from_diffs, DiffMatrix, OverallMethod, TimeGrid};
use crate::mvn::MvnOptions;
use crate::rand_test::Gamma;
use crate::survival::PairedSample;

/// `2^L - 1` subsets are evaluated, so the grid is capped.
pub const MAX_GRID: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedTestEntry {
    pub tau: f64,
    pub unadjusted_p: f64,
    /// Maximum subset p-value over all subsets containing `tau`.
    pub adjusted_p: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedTestReport {
    pub gamma: Gamma,
    pub alpha: f64,
    pub entries: Vec<ClosedTestEntry>,
    /// p-value of the full-grid intersection hypothesis.
    pub global_p: f64,
}

fn subset_seed(base: u64, mask: u32) -> u64 {
    base ^ (mask as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn mask_indices(mask: u32, l: usize) -> Vec<usize> {
    (0..l).filter(|&k| mask >> k & 1 == 1).collect()
}

fn subset_p(diffs: &DiffMatrix, sample: &PairedSample, mask: u32, gamma: Gamma, mvn: &MvnOptions) -> Result<f64> {
    let idx = mask_indices(mask, diffs.n_columns());
    let sub = diffs.select(&idx);
    let method = OverallMethod::Normal(mvn.with_seed(subset_seed(mvn.seed, mask)));
    Ok(overall_test_from_diffs(&sub, sample, gamma, method)?.result.p_value)
}

/// Max-test p-value for the intersection hypothesis over `subset` (indices
/// into `grid`).
pub fn subset_test(
    sample: &PairedSample,
    grid: &TimeGrid,
    subset: &[usize],
    gamma: Gamma,
    mvn: &MvnOptions,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    if grid.len() > 32 || subset.iter().any(|&k| k >= grid.len()) {
        return Err(Error::InvalidArgument("subset index outside the grid".into()));
    }
    let diffs = diff_matrix(sample, grid, false)?;
    let mask = subset.iter().fold(0u32, |m, &k| m | 1 << k);
    subset_p(&diffs, sample, mask, gamma, mvn)
}

/// Closed testing at level `alpha`. Every subset is evaluated once.
pub fn closed_test(
    sample: &PairedSample,
    grid: &TimeGrid,
    alpha: f64,
    gamma: Gamma,
    mvn: &MvnOptions,
) -> Result<ClosedTestReport> {
    if grid.len() > MAX_GRID {
        return Err(Error::GridTooLarge(grid.len(), MAX_GRID));
    }
    let diffs = diff_matrix(sample, grid, false)?;
    closed_test_from_diffs(&diffs, sample, alpha, gamma, mvn)
}

/// Closed testing on precomputed pseudo-observation columns.
pub fn closed_test_from_diffs(
    diffs: &DiffMatrix,
    sample: &PairedSample,
    alpha: f64,
    gamma: Gamma,
    mvn: &MvnOptions,
) -> Result<ClosedTestReport> {
    let l = diffs.n_columns();
    if l > MAX_GRID {
        return Err(Error::GridTooLarge(l, MAX_GRID));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let full = (1u32 << l) - 1;
    let pvals: Vec<f64> = (1..=full)
        .into_par_iter()
        .map(|mask| subset_p(diffs, sample, mask, gamma, mvn))
        .collect::<Result<_>>()?;
    let p_of = |mask: u32| pvals[(mask - 1) as usize];

    let entries = (0..l)
        .map(|k| {
            let bit = 1u32 << k;
            let adjusted = (1..=full)
                .filter(|m| m & bit != 0)
                .map(p_of)
                .fold(0.0, f64::max);
            ClosedTestEntry {
                tau: match diffs.labels[k] {
                    ColumnLabel::Tau(t) => t,
                    ColumnLabel::Ppw => f64::NAN,
                },
                unadjusted_p: p_of(bit),
                adjusted_p: adjusted,
                rejected: adjusted <= alpha,
            }
        })
        .collect();
    Ok(ClosedTestReport {
        gamma,
        alpha,
        entries,
        global_p: p_of(full),
    })
}
