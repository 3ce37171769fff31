//! The two-module model contract and the loss functions / unnormalized MCMC
//! targets built on top of it.
//!
//! A two-module model ties a "reliable" data block `Z` to a shared parameter
//! `phi` (module 1) and a "suspect" block `Y` to `(phi, theta)` (module 2).
//! The auxiliary copy `theta_tilde` shares theta's prior family and appears
//! only in the eta-powered stage-one target; the reported posterior
//! marginalizes over it.
//!
//! Conventions used by every implementation:
//! - log densities are exact (normalizing constants included),
//! - parameters outside the declared support yield `-inf`, never an error,
//! - evaluations never return `+inf` or NaN for in-contract inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmiError};

/// Degree of influence of the suspect module, a real number in `[0, 1]`.
///
/// `eta = 0` reproduces cut-model inference, `eta = 1` full Bayes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Eta(f64);

impl Eta {
    pub const ZERO: Eta = Eta(0.0);
    pub const ONE: Eta = Eta(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Eta(value))
        } else {
            Err(SmiError::Precondition(format!(
                "eta must lie in [0, 1], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `j` equally spaced values covering `[0, 1]`, endpoints included.
    pub fn grid(j: usize) -> Result<Vec<Eta>> {
        if j < 2 {
            return Err(SmiError::Precondition(
                "an eta grid needs at least the two endpoints".into(),
            ));
        }
        Ok((0..j)
            .map(|k| Eta(k as f64 / (j - 1) as f64))
            .collect())
    }
}

impl TryFrom<f64> for Eta {
    type Error = SmiError;
    fn try_from(value: f64) -> Result<Self> {
        Eta::new(value)
    }
}

impl From<Eta> for f64 {
    fn from(eta: Eta) -> f64 {
        eta.0
    }
}

impl std::fmt::Display for Eta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A joint parameter point `(phi, theta, theta_tilde)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmiParams {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_tilde: Vec<f64>,
}

impl SmiParams {
    pub fn new(phi: Vec<f64>, theta: Vec<f64>, theta_tilde: Vec<f64>) -> Result<Self> {
        if theta.len() != theta_tilde.len() {
            return Err(SmiError::DimensionMismatch {
                context: "SmiParams: theta and theta_tilde",
                expected: theta.len(),
                got: theta_tilde.len(),
            });
        }
        Ok(SmiParams {
            phi,
            theta,
            theta_tilde,
        })
    }
}

/// Contract for a two-module model. Implementations bundle the four log
/// densities of the joint model plus, when available in closed form, the
/// marginal `log p(Y|phi)`.
///
/// The prior over `(phi, theta, theta_tilde)` factorizes as
/// `p(phi) p(theta) p(theta_tilde)`, with `theta_tilde` drawn from theta's
/// prior family (its hyperparameters may differ; the default forwards to
/// [`TwoModuleModel::log_prior_theta`]).
pub trait TwoModuleModel {
    /// Data type of module 1 (informs `phi` only).
    type ZData: ?Sized;
    /// Data type of module 2 (informs `phi` and `theta`).
    type YData: ?Sized;

    fn name(&self) -> &str;
    fn dim_phi(&self) -> usize;
    fn dim_theta(&self) -> usize;

    /// `log p(Z | phi)`, exact.
    fn log_z_lik(&self, phi: &[f64], z: &Self::ZData) -> f64;
    /// `log p(Y | phi, theta)`, exact.
    fn log_y_lik(&self, phi: &[f64], theta: &[f64], y: &Self::YData) -> f64;
    fn log_prior_phi(&self, phi: &[f64]) -> f64;
    fn log_prior_theta(&self, theta: &[f64]) -> f64;
    fn log_prior_theta_tilde(&self, theta_tilde: &[f64]) -> f64 {
        self.log_prior_theta(theta_tilde)
    }

    /// `log p(Y | phi)` with theta integrated out under its prior, when the
    /// model admits it in closed form. Samplers never need this; only loss
    /// evaluation and density-level checks do.
    fn log_y_marginal(&self, _phi: &[f64], _y: &Self::YData) -> Option<f64> {
        None
    }

    /// Starting point for the stage-one chain over `(phi, theta_tilde)`.
    /// Defaults to the origin of the unconstrained space; models may return
    /// a crude data-driven point instead. Must lie in the support.
    fn stage1_init(&self, _z: &Self::ZData, _y: &Self::YData) -> Vec<f64> {
        vec![0.0; self.dim_phi() + self.dim_theta()]
    }
}

/// Per-observation log likelihoods, needed to assemble pointwise predictive
/// matrices for WAIC scoring.
pub trait PointwiseLogLik: TwoModuleModel {
    fn n_z_points(&self, z: &Self::ZData) -> usize;
    fn n_y_points(&self, y: &Self::YData) -> usize;
    fn log_z_lik_point(&self, phi: &[f64], z: &Self::ZData, j: usize) -> f64;
    fn log_y_lik_point(&self, phi: &[f64], theta: &[f64], y: &Self::YData, j: usize) -> f64;
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SmiError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

/// `eta * x` with the convention `0 * (-inf) = 0`, so an out-of-support
/// powered term cannot poison an eta = 0 evaluation with NaN.
fn powered(eta: Eta, x: f64) -> f64 {
    if eta.value() == 0.0 {
        0.0
    } else {
        eta.value() * x
    }
}

/// Unnormalized log density of the stage-one power posterior over
/// `(phi, theta_tilde)`:
///
/// `log p(Z|phi) + eta * log p(Y|phi, theta_tilde) + log p(phi) + log p(theta_tilde)`.
pub fn power_stage1_logpdf<M: TwoModuleModel + ?Sized>(
    model: &M,
    phi: &[f64],
    theta_tilde: &[f64],
    z: &M::ZData,
    y: &M::YData,
    eta: Eta,
) -> Result<f64> {
    check_dim("power_stage1_logpdf: phi", model.dim_phi(), phi.len())?;
    check_dim(
        "power_stage1_logpdf: theta_tilde",
        model.dim_theta(),
        theta_tilde.len(),
    )?;
    Ok(model.log_z_lik(phi, z)
        + powered(eta, model.log_y_lik(phi, theta_tilde, y))
        + model.log_prior_phi(phi)
        + model.log_prior_theta_tilde(theta_tilde))
}

/// Unnormalized (in theta) log density of the stage-two conditional
/// `p(theta | Y, phi)`:
///
/// `log p(Y|phi, theta) + log p(theta)`.
///
/// Module-1 quantities are deliberately absent: no information from `Z` can
/// reach theta here.
pub fn stage2_conditional_logpdf<M: TwoModuleModel + ?Sized>(
    model: &M,
    theta: &[f64],
    phi: &[f64],
    y: &M::YData,
) -> Result<f64> {
    check_dim("stage2_conditional_logpdf: phi", model.dim_phi(), phi.len())?;
    check_dim(
        "stage2_conditional_logpdf: theta",
        model.dim_theta(),
        theta.len(),
    )?;
    Ok(model.log_y_lik(phi, theta, y) + model.log_prior_theta(theta))
}

/// The loss whose exponential update yields the eta-SMI posterior:
///
/// `-log p(Z|phi) - eta * log p(Y|phi, theta_tilde) - log p(Y|phi, theta) + log p(Y|phi)`.
///
/// Requires the model's closed-form `log p(Y|phi)`.
pub fn smi_log_loss<M: TwoModuleModel + ?Sized>(
    model: &M,
    params: &SmiParams,
    z: &M::ZData,
    y: &M::YData,
    eta: Eta,
) -> Result<f64> {
    check_dim("smi_log_loss: phi", model.dim_phi(), params.phi.len())?;
    check_dim("smi_log_loss: theta", model.dim_theta(), params.theta.len())?;
    check_dim(
        "smi_log_loss: theta_tilde",
        model.dim_theta(),
        params.theta_tilde.len(),
    )?;
    let marginal = model
        .log_y_marginal(&params.phi, y)
        .ok_or_else(|| SmiError::MissingMarginal {
            model: model.name().to_string(),
        })?;
    Ok(-model.log_z_lik(&params.phi, z)
        - powered(eta, model.log_y_lik(&params.phi, &params.theta_tilde, y))
        - model.log_y_lik(&params.phi, &params.theta, y)
        + marginal)
}

/// The loss yielding the cut-model posterior:
///
/// `-log p(Z|phi) - log p(Y|phi, theta) + log p(Y|phi)`.
///
/// Equals [`smi_log_loss`] at eta = 0 for every `theta_tilde`.
pub fn cut_log_loss<M: TwoModuleModel + ?Sized>(
    model: &M,
    phi: &[f64],
    theta: &[f64],
    z: &M::ZData,
    y: &M::YData,
) -> Result<f64> {
    check_dim("cut_log_loss: phi", model.dim_phi(), phi.len())?;
    check_dim("cut_log_loss: theta", model.dim_theta(), theta.len())?;
    let marginal = model
        .log_y_marginal(phi, y)
        .ok_or_else(|| SmiError::MissingMarginal {
            model: model.name().to_string(),
        })?;
    Ok(-model.log_z_lik(phi, z) - model.log_y_lik(phi, theta, y) + marginal)
}

/// Log density of `N(mean, sd^2)` at `x`.
pub(crate) fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}
