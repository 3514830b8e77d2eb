//! Multivariate normal orthant-type probabilities `P(X_1 <= a_1, ..., X_L <= a_L)`
//! for `X ~ N(0, R)`, `R` a correlation matrix.
//!
//! Separation of variables after a Cholesky factorization with the usual
//! "most constrained variable first" reordering, integrated with a randomly
//! shifted Richtmyer lattice under the tent (baker) periodization. Each round
//! extends the lattice, the shift averages give a standard error and rounds
//! are pooled by inverse variance until `3 * se <= tol`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

pub const MAX_DIM: usize = 25;
const JITTER: f64 = 1e-10;
const SINGULAR_PIVOT: f64 = 1e-8;
const SHIFTS: usize = 12;

const PRIMES: [f64; MAX_DIM] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0, 59.0, 61.0, 67.0,
    71.0, 73.0, 79.0, 83.0, 89.0, 97.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    /// Target absolute error (three standard errors).
    pub abs_tol: f64,
    pub seed: u64,
    /// Budget of integrand evaluations per random shift.
    pub max_points: usize,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-4,
            seed: 0x5eed_cafe,
            max_points: 1 << 17,
        }
    }
}

impl MvnOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnEstimate {
    pub value: f64,
    /// Three standard errors of the pooled estimate.
    pub error: f64,
    /// `false` when the point budget ran out before reaching `abs_tol`.
    pub converged: bool,
    pub evaluations: usize,
}

fn validate(limits: &[f64], corr: &[Vec<f64>]) -> Result<()> {
    let l = limits.len();
    if l == 0 {
        return Err(Error::EmptyInput);
    }
    if l > MAX_DIM {
        return Err(Error::DimensionTooLarge(l, MAX_DIM));
    }
    if corr.len() != l || corr.iter().any(|r| r.len() != l) {
        return Err(Error::NotACorrelationMatrix(format!("expected a {l}x{l} matrix")));
    }
    if limits.iter().any(|a| a.is_nan()) {
        return Err(Error::InvalidArgument("NaN integration limit".into()));
    }
    for i in 0..l {
        if (corr[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::NotACorrelationMatrix(format!("diagonal entry {i} is {}", corr[i][i])));
        }
        for j in 0..i {
            let (a, b) = (corr[i][j], corr[j][i]);
            if !a.is_finite() || (a - b).abs() > 1e-12 || a.abs() > 1.0 + 1e-12 {
                return Err(Error::NotACorrelationMatrix(format!("entry ({i},{j}) = {a} vs {b}")));
            }
        }
    }
    Ok(())
}

/// Reordered lower Cholesky factor; zero pivots mark directions that are
/// exact linear combinations of earlier ones.
struct Factor {
    chol: Vec<Vec<f64>>,
    limits: Vec<f64>,
}

fn factorize(limits: &[f64], corr: &[Vec<f64>]) -> Result<Factor> {
    let l = limits.len();
    let mut c: Vec<Vec<f64>> = corr.to_vec();
    for (i, row) in c.iter_mut().enumerate() {
        row[i] += JITTER;
    }
    let mut a = limits.to_vec();
    let mut y = vec![0.0; l];

    for i in 0..l {
        // choose the remaining variable with the smallest conditional probability
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..l {
            let var = c[j][j] - (0..i).map(|k| c[j][k] * c[j][k]).sum::<f64>();
            let s: f64 = (0..i).map(|k| c[j][k] * y[k]).sum();
            let p = if var > SINGULAR_PIVOT {
                normal::cdf((a[j] - s) / var.sqrt())
            } else {
                f64::INFINITY
            };
            if p < best_p {
                best_p = p;
                best = j;
            }
        }
        if best != i {
            c.swap(i, best);
            for row in c.iter_mut() {
                row.swap(i, best);
            }
            a.swap(i, best);
        }

        let var = c[i][i] - (0..i).map(|k| c[i][k] * c[i][k]).sum::<f64>();
        if var < -1e-8 {
            return Err(Error::NotACorrelationMatrix("matrix is not positive semidefinite".into()));
        }
        if var <= SINGULAR_PIVOT {
            c[i][i] = 0.0;
            for j in i + 1..l {
                c[j][i] = 0.0;
            }
            y[i] = 0.0;
        } else {
            let d = var.sqrt();
            c[i][i] = d;
            for j in i + 1..l {
                let s: f64 = (0..i).map(|k| c[j][k] * c[i][k]).sum();
                c[j][i] = (c[j][i] - s) / d;
            }
            let s: f64 = (0..i).map(|k| c[i][k] * y[k]).sum();
            let b = (a[i] - s) / d;
            let pb = normal::cdf(b);
            y[i] = if pb > 1e-300 {
                -(-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt() / pb
            } else {
                b
            };
        }
        for j in i + 1..l {
            c[i][j] = 0.0;
        }
    }
    Ok(Factor { chol: c, limits: a })
}

impl Factor {
    /// Separation-of-variables integrand at `w` in `[0,1]^{L-1}`.
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let l = self.limits.len();
        let mut f = 1.0;
        for i in 0..l {
            let row = &self.chol[i];
            let s: f64 = (0..i).map(|k| row[k] * y[k]).sum();
            let cii = row[i];
            let e = if cii > 0.0 {
                normal::cdf((self.limits[i] - s) / cii)
            } else if s <= self.limits[i] {
                1.0
            } else {
                0.0
            };
            f *= e;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < l {
                y[i] = if cii > 0.0 {
                    normal::quantile((w[i] * e).clamp(1e-300, 1.0 - 1e-16))
                } else {
                    0.0
                };
            }
        }
        f
    }
}

/// `P(X <= limits)` for `X ~ N(0, corr)`.
pub fn mvn_cdf(limits: &[f64], corr: &[Vec<f64>], opts: &MvnOptions) -> Result<MvnEstimate> {
    validate(limits, corr)?;
    let l = limits.len();
    if limits.contains(&f64::NEG_INFINITY) {
        return Ok(exact(0.0));
    }
    if l == 1 {
        return Ok(exact(normal::cdf(limits[0])));
    }
    let factor = factorize(limits, corr)?;
    let dims = l - 1;
    let gen: Vec<f64> = PRIMES[..dims].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut w = vec![0.0; dims];
    let mut y = vec![0.0; l];
    let mut n_round = 256usize;
    let mut start = 1usize;
    let mut pooled_mean = 0.0;
    let mut pooled_weight = 0.0;
    let mut evaluations = 0usize;
    let mut error = f64::INFINITY;

    while start <= opts.max_points {
        let shifts: Vec<Vec<f64>> = (0..SHIFTS)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mut means = [0.0; SHIFTS];
        for (m, shift) in means.iter_mut().zip(&shifts) {
            let mut acc = 0.0;
            for n in start..start + n_round {
                let nf = n as f64;
                for k in 0..dims {
                    let x = (nf * gen[k] + shift[k]).fract();
                    w[k] = (2.0 * x - 1.0).abs();
                }
                acc += factor.integrand(&w, &mut y);
            }
            *m = acc / n_round as f64;
        }
        evaluations += SHIFTS * n_round;
        start += n_round;
        n_round *= 2;

        let mean = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / ((SHIFTS - 1) * SHIFTS) as f64;
        if var <= 0.0 {
            pooled_mean = mean;
            error = 0.0;
            break;
        }
        let wgt = 1.0 / var;
        pooled_mean = (pooled_mean * pooled_weight + mean * wgt) / (pooled_weight + wgt);
        pooled_weight += wgt;
        error = 3.0 / pooled_weight.sqrt();
        if error <= opts.abs_tol {
            break;
        }
    }
    Ok(MvnEstimate {
        value: pooled_mean.clamp(0.0, 1.0),
        error,
        converged: error <= opts.abs_tol,
        evaluations,
    })
}

fn exact(value: f64) -> MvnEstimate {
    MvnEstimate {
        value,
        error: 0.0,
        converged: true,
        evaluations: 0,
    }
}
