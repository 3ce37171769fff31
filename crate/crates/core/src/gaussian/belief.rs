//! Sequential belief updates in the Gaussian family.
//!
//! The SMI update is coherent: observing data in blocks, in any order, must
//! land on the same posterior as one batch update. This type carries the
//! natural parameters (precision matrix and linear term) of a Gaussian belief
//! over `(phi, theta, theta_tilde)` and applies one data block at a time.
//!
//! The subtlety sits in the `+ log p(Y_b | phi)` feedback term of the loss:
//! for a later Y block it is the predictive of that block under the *current*
//! belief, not under the original prior. Concretely the update needs the
//! conditional `theta | phi` of the present belief, which the precision
//! parameterization exposes directly (`theta` and `theta_tilde` are never
//! coupled, so conditioning on phi is enough).

use nalgebra::{DMatrix, DVector};

use super::{invert_spd, GaussianHyper, MvnDist};
use crate::error::Result;
use crate::model::Eta;

#[derive(Debug, Clone)]
pub struct SequentialBelief {
    hyper: GaussianHyper,
    eta: f64,
    precision: DMatrix<f64>,
    linear: DVector<f64>,
}

impl SequentialBelief {
    /// Starts from the prior: diagonal precision, zero linear term.
    pub fn from_prior(hyper: &GaussianHyper, eta: Eta) -> Self {
        let var_t = hyper.sigma_theta * hyper.sigma_theta;
        let var_tt = hyper.sigma_theta_tilde * hyper.sigma_theta_tilde;
        let precision = DMatrix::from_diagonal(&DVector::from_column_slice(&[
            hyper.phi_precision(),
            1.0 / var_t,
            1.0 / var_tt,
        ]));
        SequentialBelief {
            hyper: *hyper,
            eta: eta.value(),
            precision,
            linear: DVector::zeros(3),
        }
    }

    /// Observes a Z block of `n` points with mean `z_bar`.
    pub fn observe_z(&mut self, n: usize, z_bar: f64) {
        let var_z = self.hyper.sigma_z * self.hyper.sigma_z;
        let pz = n as f64 / var_z;
        self.precision[(0, 0)] += pz;
        self.linear[0] += pz * z_bar;
    }

    /// Observes a Y block of `m` points with mean `y_bar`.
    pub fn observe_y(&mut self, m: usize, y_bar: f64) {
        let e = self.eta;
        let m = m as f64;
        let var_y = self.hyper.sigma_y * self.hyper.sigma_y;
        let py = m / var_y;

        // Conditional theta | phi under the current belief.
        let p_tt = self.precision[(1, 1)];
        let s2 = 1.0 / p_tt; // conditional variance
        let slope = -self.precision[(0, 1)] / p_tt; // d mean / d phi
        let alpha = 1.0 + slope;
        let beta = self.linear[1] / p_tt; // mean at phi = 0
        let kappa = m / (var_y + m * s2);

        self.precision[(0, 0)] += (1.0 + e) * py - alpha * alpha * kappa;
        self.precision[(0, 1)] += py;
        self.precision[(1, 0)] += py;
        self.precision[(1, 1)] += py;
        self.precision[(0, 2)] += e * py;
        self.precision[(2, 0)] += e * py;
        self.precision[(2, 2)] += e * py;

        self.linear[0] += (1.0 + e) * py * y_bar - alpha * kappa * (y_bar - beta);
        self.linear[1] += py * y_bar;
        self.linear[2] += e * py * y_bar;
    }

    /// Current belief as a proper distribution.
    pub fn posterior(&self) -> Result<MvnDist> {
        let cov = invert_spd(&self.precision, "SequentialBelief::posterior")?;
        let mean = &cov * &self.linear;
        MvnDist::new(mean, cov)
    }
}
