//! The biased-data model as a [`TwoModuleModel`], for use with the samplers
//! and loss functions.

use super::GaussianHyper;
use crate::model::{normal_logpdf, PointwiseLogLik, TwoModuleModel};

/// Two-module Gaussian location model with a possibly biased second block.
///
/// Data blocks are raw observation slices; support is all of R, so no
/// parameter value is ever rejected.
#[derive(Debug, Clone)]
pub struct BiasedDataModel {
    hyper: GaussianHyper,
}

impl BiasedDataModel {
    pub fn new(hyper: GaussianHyper) -> Self {
        BiasedDataModel { hyper }
    }

    pub fn hyper(&self) -> &GaussianHyper {
        &self.hyper
    }

    fn gaussian_block_loglik(data: &[f64], mean: f64, sd: f64) -> f64 {
        let k = data.len() as f64;
        let ss: f64 = data.iter().map(|&v| (v - mean) * (v - mean)).sum();
        -0.5 * k * (2.0 * std::f64::consts::PI * sd * sd).ln() - 0.5 * ss / (sd * sd)
    }
}

impl TwoModuleModel for BiasedDataModel {
    type ZData = [f64];
    type YData = [f64];

    fn name(&self) -> &str {
        "gaussian-biased"
    }

    fn dim_phi(&self) -> usize {
        1
    }

    fn dim_theta(&self) -> usize {
        1
    }

    fn log_z_lik(&self, phi: &[f64], z: &[f64]) -> f64 {
        Self::gaussian_block_loglik(z, phi[0], self.hyper.sigma_z)
    }

    fn log_y_lik(&self, phi: &[f64], theta: &[f64], y: &[f64]) -> f64 {
        Self::gaussian_block_loglik(y, phi[0] + theta[0], self.hyper.sigma_y)
    }

    fn log_prior_phi(&self, phi: &[f64]) -> f64 {
        if self.hyper.flat_phi_prior() {
            0.0
        } else {
            normal_logpdf(phi[0], 0.0, self.hyper.sigma_phi)
        }
    }

    fn log_prior_theta(&self, theta: &[f64]) -> f64 {
        normal_logpdf(theta[0], 0.0, self.hyper.sigma_theta)
    }

    fn log_prior_theta_tilde(&self, theta_tilde: &[f64]) -> f64 {
        normal_logpdf(theta_tilde[0], 0.0, self.hyper.sigma_theta_tilde)
    }

    /// Exact `log p(Y|phi)`: with theta integrated out, `Y | phi` is normal
    /// with mean `phi` and covariance `sigma_y^2 I + sigma_theta^2 J`;
    /// Sherman-Morrison gives the quadratic form and determinant directly.
    fn log_y_marginal(&self, phi: &[f64], y: &[f64]) -> Option<f64> {
        let m = y.len() as f64;
        let var_y = self.hyper.sigma_y * self.hyper.sigma_y;
        let var_t = self.hyper.sigma_theta * self.hyper.sigma_theta;
        let ss: f64 = y.iter().map(|&v| (v - phi[0]) * (v - phi[0])).sum();
        let t: f64 = y.iter().map(|&v| v - phi[0]).sum();
        let qf = ss / var_y - var_t * t * t / (var_y * (var_y + m * var_t));
        let log_det = (m - 1.0) * var_y.ln() + (var_y + m * var_t).ln();
        Some(-0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * qf)
    }
}

impl PointwiseLogLik for BiasedDataModel {
    fn n_z_points(&self, z: &[f64]) -> usize {
        z.len()
    }

    fn n_y_points(&self, y: &[f64]) -> usize {
        y.len()
    }

    fn log_z_lik_point(&self, phi: &[f64], z: &[f64], j: usize) -> f64 {
        normal_logpdf(z[j], phi[0], self.hyper.sigma_z)
    }

    fn log_y_lik_point(&self, phi: &[f64], theta: &[f64], y: &[f64], j: usize) -> f64 {
        normal_logpdf(y[j], phi[0] + theta[0], self.hyper.sigma_y)
    }
}
