//! Semi-modular inference for two-module Bayesian models.
//!
//! A two-module model ties a reliable data block `Z` to a shared parameter
//! `phi`, and a suspect block `Y` to `(phi, theta)`. This crate implements
//! the family of candidate posteriors indexed by a degree of influence
//! `eta` in `[0, 1]` that interpolates between cut-model inference (`eta = 0`,
//! no feedback from the suspect module into `phi`) and full Bayes
//! (`eta = 1`), together with:
//!
//! - [`model`]: the model contract, loss functions and the two unnormalized
//!   targets of the nested sampler;
//! - [`gaussian`]: exact closed forms for the biased-data Gaussian model,
//!   used as the ground-truth oracle throughout;
//! - [`mcmc`]: a seedable random-walk Metropolis kernel, the two-stage nested
//!   sampler, an exact discrete detailed-balance harness, and IACT/ESS
//!   diagnostics;
//! - [`zoo`]: further concrete models (the HPV Poisson/Binomial model);
//! - [`eval`]: WAIC, eta-grid sweeps and selection of the influence
//!   parameter by estimated elpd.

pub mod error;
pub mod eval;
pub mod gaussian;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod zoo;

pub use error::{Result, SmiError};
pub use eval::{select_eta, waic, EstimatorTag, EtaSweepTable, LogLikMatrix, Smoothing};
pub use gaussian::{
    exact_elpd, predictive_moments, simulate_dataset, smi_posterior_moments, squared_errors,
    BiasedDataModel, GaussianHyper, GaussianSuffStats, MvnDist, SequentialBelief, TrueGenerative,
};
pub use mcmc::{
    diagnostics, nested_smi_sampler, rw_metropolis_chain, two_stage_kernel_stationarity,
    ChainConfig, Diagnostics, DiscreteTwoModule, SampleMatrix, SamplingMode,
};
pub use model::{
    cut_log_loss, power_stage1_logpdf, smi_log_loss, stage2_conditional_logpdf, Eta,
    PointwiseLogLik, SmiParams, TwoModuleModel,
};
pub use rng::{derive_seed, SmiRng};
pub use zoo::{hpv_model, hpv_simulate, HpvData, HpvModel, HpvParams, HpvPriorSpec};
