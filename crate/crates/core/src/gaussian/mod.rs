//! Closed-form machinery for the biased-data Gaussian model:
//!
//! ```text
//! Z_i ~ N(phi, sigma_z^2)          i = 1..n   (module 1, reliable)
//! Y_i ~ N(phi + theta, sigma_y^2)  i = 1..m   (module 2, biased)
//! ```
//!
//! with known variances, prior `phi ~ N(0, sigma_phi^2)` (a constant prior
//! when `sigma_phi = +inf`), `theta ~ N(0, sigma_theta^2)` and
//! `theta_tilde ~ N(0, sigma_theta_tilde^2)`.
//!
//! For every eta the SMI posterior over `(phi, theta, theta_tilde)` is a
//! trivariate normal available exactly, which makes this module the ground
//! truth oracle for the samplers.

mod belief;
mod model;

pub use belief::SequentialBelief;
pub use model::BiasedDataModel;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmiError};
use crate::model::Eta;
use crate::rng::SmiRng;

/// Condition number above which moment computations refuse to invert.
const MAX_CONDITION: f64 = 1e12;

/// Known scales of the biased-data model.
///
/// `sigma_phi = +inf` encodes the constant (flat) prior on phi as zero prior
/// precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianHyper {
    pub sigma_z: f64,
    pub sigma_y: f64,
    pub sigma_phi: f64,
    pub sigma_theta: f64,
    pub sigma_theta_tilde: f64,
}

impl GaussianHyper {
    pub fn new(
        sigma_z: f64,
        sigma_y: f64,
        sigma_phi: f64,
        sigma_theta: f64,
        sigma_theta_tilde: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("sigma_z", sigma_z),
            ("sigma_y", sigma_y),
            ("sigma_theta", sigma_theta),
            ("sigma_theta_tilde", sigma_theta_tilde),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SmiError::Precondition(format!(
                    "{name} must be a finite positive real, got {v}"
                )));
            }
        }
        if !(sigma_phi > 0.0) {
            return Err(SmiError::Precondition(format!(
                "sigma_phi must be positive (possibly +inf), got {sigma_phi}"
            )));
        }
        Ok(GaussianHyper {
            sigma_z,
            sigma_y,
            sigma_phi,
            sigma_theta,
            sigma_theta_tilde,
        })
    }

    /// Prior precision of phi; zero for the flat prior.
    pub fn phi_precision(&self) -> f64 {
        if self.sigma_phi.is_infinite() {
            0.0
        } else {
            1.0 / (self.sigma_phi * self.sigma_phi)
        }
    }

    pub fn flat_phi_prior(&self) -> bool {
        self.sigma_phi.is_infinite()
    }
}

/// Sufficient statistics of one dataset: the closed-form moments
/// depend on the data only through `(n, m, z_bar, y_bar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSuffStats {
    pub n: usize,
    pub m: usize,
    pub z_bar: f64,
    pub y_bar: f64,
}

impl GaussianSuffStats {
    pub fn new(n: usize, m: usize, z_bar: f64, y_bar: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(SmiError::Precondition(
                "sufficient statistics need n >= 1 and m >= 1".into(),
            ));
        }
        Ok(GaussianSuffStats { n, m, z_bar, y_bar })
    }

    /// Reduces raw observation vectors to sufficient statistics.
    pub fn from_data(z: &[f64], y: &[f64]) -> Result<Self> {
        if z.is_empty() || y.is_empty() {
            return Err(SmiError::Precondition(
                "both data blocks must be non-empty".into(),
            ));
        }
        Ok(GaussianSuffStats {
            n: z.len(),
            m: y.len(),
            z_bar: z.iter().sum::<f64>() / z.len() as f64,
            y_bar: y.iter().sum::<f64>() / y.len() as f64,
        })
    }
}

/// True generative parameters of a synthetic study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueGenerative {
    pub phi_star: f64,
    pub theta_star: f64,
}

/// A multivariate normal given by mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MvnDist {
    /// Builds the distribution, checking that `cov` is symmetric (within
    /// 1e-12) and has no eigenvalue below -1e-10.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(SmiError::DimensionMismatch {
                context: "MvnDist: cov",
                expected: d,
                got: cov.nrows(),
            });
        }
        let scale = cov.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(SmiError::Numerical(format!(
                        "covariance not symmetric at ({i},{j}): {} vs {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(SmiError::Numerical(format!(
                "covariance not positive semi-definite: min eigenvalue {}",
                eig.eigenvalues.min()
            )));
        }
        Ok(MvnDist { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Marginal over the listed coordinates, in the listed order.
    pub fn marginal(&self, coords: &[usize]) -> Result<MvnDist> {
        for &c in coords {
            if c >= self.dim() {
                return Err(SmiError::Precondition(format!(
                    "marginal coordinate {c} out of range for dim {}",
                    self.dim()
                )));
            }
        }
        let mean = DVector::from_iterator(coords.len(), coords.iter().map(|&c| self.mean[c]));
        let cov = DMatrix::from_fn(coords.len(), coords.len(), |i, j| {
            self.cov[(coords[i], coords[j])]
        });
        MvnDist::new(mean, cov)
    }

    /// Exact log density at `x`. Fails if the covariance is singular.
    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(SmiError::DimensionMismatch {
                context: "MvnDist::logpdf",
                expected: d,
                got: x.len(),
            });
        }
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| SmiError::Numerical("covariance not positive definite".into()))?;
        let diff = DVector::from_column_slice(x) - &self.mean;
        let solved = chol.solve(&diff);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5
            * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + diff.dot(&solved)))
    }

    /// Draws `count` samples via the Cholesky factor, filling a row-major
    /// buffer of shape `count x dim`.
    pub fn sample_into(&self, rng: &mut SmiRng, count: usize, out: &mut Vec<f64>) -> Result<()> {
        let d = self.dim();
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| SmiError::Numerical("covariance not positive definite".into()))?;
        let l = chol.l();
        let mut g = DVector::zeros(d);
        for _ in 0..count {
            for k in 0..d {
                g[k] = StandardNormal.sample(rng);
            }
            let x = &self.mean + &l * &g;
            out.extend(x.iter());
        }
        Ok(())
    }
}

/// Inverts a symmetric positive definite matrix through its eigensystem,
/// enforcing the crate-wide condition-number bound. Returns a covariance that
/// is symmetric by construction.
fn invert_spd(p: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = p.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmin > 0.0) || lmax / lmin >= MAX_CONDITION {
        return Err(SmiError::Numerical(format!(
            "{what}: precision matrix ill-conditioned (min eigenvalue {lmin:.6e}, \
             max eigenvalue {lmax:.6e}, condition {:.6e})",
            lmax / lmin.abs().max(f64::MIN_POSITIVE)
        )));
    }
    let v = &eig.eigenvectors;
    let inv_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let mut cov = v * inv_l * v.transpose();
    // Symmetrize away the last bits of floating point noise.
    let sym = (&cov + cov.transpose()) * 0.5;
    cov = sym;
    Ok(cov)
}

/// Precision matrix and linear term of the eta-SMI posterior over
/// `(phi, theta, theta_tilde)`.
///
/// The `- m / (sigma_y^2 + m sigma_theta^2)` entries are the feedback
/// correction coming from the `+ log p(Y|phi)` term of the loss.
fn smi_natural_params(
    stats: &GaussianSuffStats,
    hyper: &GaussianHyper,
    eta: Eta,
) -> (DMatrix<f64>, DVector<f64>) {
    let e = eta.value();
    let n = stats.n as f64;
    let m = stats.m as f64;
    let var_z = hyper.sigma_z * hyper.sigma_z;
    let var_y = hyper.sigma_y * hyper.sigma_y;
    let var_t = hyper.sigma_theta * hyper.sigma_theta;
    let var_tt = hyper.sigma_theta_tilde * hyper.sigma_theta_tilde;
    let pz = n / var_z;
    let py = m / var_y;
    let feedback = m / (var_y + m * var_t);

    let p = DMatrix::from_row_slice(
        3,
        3,
        &[
            pz + py * (1.0 + e) - feedback + hyper.phi_precision(),
            py,
            e * py,
            py,
            py + 1.0 / var_t,
            0.0,
            e * py,
            0.0,
            e * py + 1.0 / var_tt,
        ],
    );
    let b = DVector::from_column_slice(&[
        pz * stats.z_bar + py * (1.0 + e) * stats.y_bar - feedback * stats.y_bar,
        py * stats.y_bar,
        e * py * stats.y_bar,
    ]);
    (p, b)
}

/// Exact eta-SMI posterior over `(phi, theta, theta_tilde)`.
pub fn smi_posterior_moments(
    stats: &GaussianSuffStats,
    hyper: &GaussianHyper,
    eta: Eta,
) -> Result<MvnDist> {
    let (p, b) = smi_natural_params(stats, hyper, eta);
    let cov = invert_spd(&p, "smi_posterior_moments")?;
    let mean = &cov * b;
    MvnDist::new(mean, cov)
}

/// Joint posterior over `(z0, y0, phi, theta)` for one new observation pair,
/// assembled from the `(phi, theta)` marginal of [`smi_posterior_moments`].
pub fn predictive_moments(
    stats: &GaussianSuffStats,
    hyper: &GaussianHyper,
    eta: Eta,
) -> Result<MvnDist> {
    let post = smi_posterior_moments(stats, hyper, eta)?;
    predictive_from_posterior(&post, hyper)
}

/// Same as [`predictive_moments`] but starting from an already computed
/// posterior over `(phi, theta, theta_tilde)` (or `(phi, theta)`).
pub fn predictive_from_posterior(post: &MvnDist, hyper: &GaussianHyper) -> Result<MvnDist> {
    let marg = post.marginal(&[0, 1])?;
    let s = marg.cov();
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    if !(det > 0.0) {
        return Err(SmiError::Numerical(format!(
            "predictive_moments: singular (phi, theta) marginal, det {det:.6e}"
        )));
    }
    // [[a, b], [b, c]] is the precision of the (phi, theta) marginal,
    // (d, e) its mean.
    let a = s[(1, 1)] / det;
    let b = -s[(0, 1)] / det;
    let c = s[(0, 0)] / det;
    let d = marg.mean()[0];
    let e = marg.mean()[1];

    let iz = 1.0 / (hyper.sigma_z * hyper.sigma_z);
    let iy = 1.0 / (hyper.sigma_y * hyper.sigma_y);
    let p = DMatrix::from_row_slice(
        4,
        4,
        &[
            iz, 0.0, -iz, 0.0, //
            0.0, iy, -iy, -iy, //
            -iz, -iy, a + iz + iy, b + iy, //
            0.0, -iy, b + iy, c + iy,
        ],
    );
    let lin = DVector::from_column_slice(&[0.0, 0.0, a * d + b * e, b * d + c * e]);
    let cov = invert_spd(&p, "predictive_moments")?;
    let mean = &cov * lin;
    MvnDist::new(mean, cov)
}

/// Monte Carlo estimate of the expected log pointwise predictive density of
/// one new `(z0, y0)` pair under the true generative process.
///
/// Draws `(z, y)` from the truth (`z ~ N(phi*, sigma_z^2)` then
/// `y ~ N(phi* + theta*, sigma_y^2)`, one pair per iteration) and averages
/// the exact bivariate-normal log density of the `(z0, y0)` marginal of
/// `pred`. Returns the estimate and its Monte Carlo standard error.
pub fn exact_elpd(
    pred: &MvnDist,
    truth: &TrueGenerative,
    hyper: &GaussianHyper,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_mc < 100 {
        return Err(SmiError::Precondition(format!(
            "exact_elpd needs n_mc >= 100, got {n_mc}"
        )));
    }
    let marg = pred.marginal(&[0, 1])?;
    let s = marg.cov();
    let (s11, s12, s22) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let det = s11 * s22 - s12 * s12;
    if !(det > 0.0 && s11 > 0.0) {
        return Err(SmiError::Numerical(format!(
            "exact_elpd: predictive (z0, y0) marginal not positive definite (det {det:.6e})"
        )));
    }
    let (mz, my) = (marg.mean()[0], marg.mean()[1]);
    let log_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
    let (q11, q12, q22) = (s22 / det, -s12 / det, s11 / det);

    let mut rng = SmiRng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n_mc {
        let gz: f64 = StandardNormal.sample(&mut rng);
        let gy: f64 = StandardNormal.sample(&mut rng);
        let z = truth.phi_star + hyper.sigma_z * gz;
        let y = truth.phi_star + truth.theta_star + hyper.sigma_y * gy;
        let (dz, dy) = (z - mz, y - my);
        let ll = log_norm - 0.5 * (q11 * dz * dz + 2.0 * q12 * dz * dy + q22 * dy * dy);
        let delta = ll - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (ll - mean);
    }
    let var = m2 / (n_mc - 1) as f64;
    Ok((mean, (var / n_mc as f64).sqrt()))
}

/// Posterior squared errors of the three parameter estimates against the
/// truth: `SE = posterior variance + (posterior mean - truth)^2`.
pub fn squared_errors(post: &MvnDist, truth: &TrueGenerative) -> Result<(f64, f64, f64)> {
    if post.dim() != 3 {
        return Err(SmiError::DimensionMismatch {
            context: "squared_errors: posterior",
            expected: 3,
            got: post.dim(),
        });
    }
    let m = post.mean();
    let s = post.cov();
    let se = |i: usize, target: f64| s[(i, i)] + (m[i] - target) * (m[i] - target);
    Ok((
        se(0, truth.phi_star),
        se(1, truth.theta_star),
        se(2, truth.theta_star),
    ))
}

/// Simulates one dataset from the true generative process. Deterministic
/// given the seed: the `n` Z draws come first, then the `m` Y draws.
pub fn simulate_dataset(
    truth: &TrueGenerative,
    hyper: &GaussianHyper,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, GaussianSuffStats)> {
    if n == 0 || m == 0 {
        return Err(SmiError::Precondition(
            "simulate_dataset needs n >= 1 and m >= 1".into(),
        ));
    }
    let mut rng = SmiRng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            truth.phi_star + hyper.sigma_z * g
        })
        .collect();
    let y: Vec<f64> = (0..m)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            truth.phi_star + truth.theta_star + hyper.sigma_y * g
        })
        .collect();
    let stats = GaussianSuffStats::from_data(&z, &y)?;
    Ok((z, y, stats))
}
