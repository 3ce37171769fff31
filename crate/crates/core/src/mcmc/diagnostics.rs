//! Integrated autocorrelation time and effective sample size.

use super::SampleMatrix;
use crate::error::{Result, SmiError};

/// Per-column IACT and ESS of a sample matrix.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Integrated autocorrelation time per column; `+inf` for a constant
    /// column.
    pub iact: Vec<f64>,
    /// Effective sample size per column, capped at the number of draws;
    /// zero for a constant column.
    pub ess: Vec<f64>,
    /// Columns flagged as constant.
    pub constant: Vec<bool>,
}

impl Diagnostics {
    pub fn min_ess(&self) -> f64 {
        self.ess.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Monte Carlo standard error of a column mean implied by the ESS.
    pub fn mean_se(&self, samples: &SampleMatrix, j: usize) -> f64 {
        (samples.column_variance(j) / self.ess[j]).sqrt()
    }
}

/// IACT of one series by Geyer's initial positive sequence: sum paired
/// autocorrelations `rho_{2t} + rho_{2t+1}` while they stay positive.
fn iact_initial_positive(xs: &[f64]) -> Option<f64> {
    let s = xs.len();
    let mean = xs.iter().sum::<f64>() / s as f64;
    let centered: Vec<f64> = xs.iter().map(|v| v - mean).collect();
    let gamma = |lag: usize| -> f64 {
        centered[..s - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / s as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return None; // constant column
    }
    let mut tau = -1.0;
    let mut t = 0usize;
    loop {
        let lag0 = 2 * t;
        let lag1 = 2 * t + 1;
        if lag1 >= s {
            break;
        }
        let pair = (gamma(lag0) + gamma(lag1)) / g0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        t += 1;
    }
    Some(tau)
}

/// Computes [`Diagnostics`] for every column. Needs at least 100 draws.
pub fn diagnostics(samples: &SampleMatrix) -> Result<Diagnostics> {
    let s = samples.nrows();
    if s < 100 {
        return Err(SmiError::Precondition(format!(
            "diagnostics need at least 100 draws, got {s}"
        )));
    }
    let mut iact = Vec::with_capacity(samples.ncols());
    let mut ess = Vec::with_capacity(samples.ncols());
    let mut constant = Vec::with_capacity(samples.ncols());
    for j in 0..samples.ncols() {
        let xs: Vec<f64> = samples.column(j).collect();
        match iact_initial_positive(&xs) {
            Some(tau) => {
                iact.push(tau);
                // The truncated estimator can dip slightly below 1 on iid
                // input; ESS stays capped at the draw count.
                ess.push((s as f64 / tau).min(s as f64));
                constant.push(false);
            }
            None => {
                iact.push(f64::INFINITY);
                ess.push(0.0);
                constant.push(true);
            }
        }
    }
    Ok(Diagnostics { iact, ess, constant })
}
