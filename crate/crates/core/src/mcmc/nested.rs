//! The two-stage nested sampler targeting the eta-SMI posterior.
//!
//! Stage one runs a random-walk chain on the power posterior over
//! `(phi, theta_tilde)`; burn-in and thinning happen here, before stage two.
//! Stage two runs, for each kept `phi`, a fresh sub-chain of `n2` steps on
//! the conditional `p(theta | Y, phi)` and keeps only its final state, so no
//! information from module 1 can reach theta.

use rayon::prelude::*;

use rand::SeedableRng;

use super::kernel::{metropolis_step, rw_metropolis_chain};
use super::{ChainConfig, SampleMatrix, SamplingMode};
use crate::error::{Result, SmiError};
use crate::model::{power_stage1_logpdf, stage2_conditional_logpdf, Eta, TwoModuleModel};
use crate::rng::{derive_seed, SmiRng};

fn param_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|k| format!("{prefix}_{k}")).collect()
    }
}

/// Samples the stage-one power posterior over `(phi, theta_tilde)`.
pub fn stage1_power_samples<M>(
    model: &M,
    z: &M::ZData,
    y: &M::YData,
    eta: Eta,
    cfg: &ChainConfig,
) -> Result<SampleMatrix>
where
    M: TwoModuleModel + ?Sized,
{
    let dp = model.dim_phi();
    let dt = model.dim_theta();
    let target = |v: &[f64]| {
        power_stage1_logpdf(model, &v[..dp], &v[dp..], z, y, eta)
            .expect("stage-one dimensions fixed by construction")
    };
    let stage1_cfg = ChainConfig {
        proposal_scales: cfg.proposal_scales[..dp + dt].to_vec(),
        seed: derive_seed(cfg.seed, "stage1", 0),
        ..cfg.clone()
    };
    let init = model.stage1_init(z, y);
    if init.len() != dp + dt {
        return Err(SmiError::DimensionMismatch {
            context: "stage1_power_samples: model init",
            expected: dp + dt,
            got: init.len(),
        });
    }
    let mut out = rw_metropolis_chain(target, &init, &stage1_cfg)?;
    let mut names = param_names("phi", dp);
    names.extend(param_names("theta_tilde", dt));
    out.names = names;
    out.seed = cfg.seed;
    out.eta = Some(eta.value());
    Ok(out)
}

struct SubChainResult {
    theta: Vec<f64>,
    accepted: usize,
}

/// One stage-two sub-chain: `n2` Metropolis steps on `p(theta | Y, phi)`,
/// returning the final state.
fn run_subchain<M>(
    model: &M,
    phi: &[f64],
    y: &M::YData,
    init: &[f64],
    scales: &[f64],
    n2: usize,
    seed: u64,
) -> Result<SubChainResult>
where
    M: TwoModuleModel + ?Sized,
{
    let target = |t: &[f64]| {
        stage2_conditional_logpdf(model, t, phi, y)
            .expect("stage-two dimensions fixed by construction")
    };
    let mut lp = target(init);
    if !lp.is_finite() {
        return Err(SmiError::Precondition(format!(
            "stage-two sub-chain initial state has log density {lp}"
        )));
    }
    let mut rng = SmiRng::seed_from_u64(seed);
    let mut theta = init.to_vec();
    let mut proposal = vec![0.0; theta.len()];
    let mut accepted = 0usize;
    for _ in 0..n2 {
        if metropolis_step(&target, &mut theta, &mut lp, scales, &mut proposal, &mut rng) {
            accepted += 1;
        }
    }
    Ok(SubChainResult { theta, accepted })
}

/// Completes a nested run from stage-one output: for each kept `phi` draw, a
/// stage-two sub-chain produces one theta. Output columns are ordered
/// `(phi, theta_tilde, theta)`.
///
/// This pass reads only module-2 data; stage-one draws enter solely through
/// the `phi` columns of `stage1`.
pub fn nested_stage2<M>(
    model: &M,
    stage1: &SampleMatrix,
    y: &M::YData,
    cfg: &ChainConfig,
    mode: SamplingMode,
) -> Result<SampleMatrix>
where
    M: TwoModuleModel + Sync + ?Sized,
    M::YData: Sync,
{
    let dp = model.dim_phi();
    let dt = model.dim_theta();
    if stage1.ncols() != dp + dt {
        return Err(SmiError::DimensionMismatch {
            context: "nested_stage2: stage-one columns",
            expected: dp + dt,
            got: stage1.ncols(),
        });
    }
    let scales = &cfg.proposal_scales[dp + dt..];
    if scales.len() != dt {
        return Err(SmiError::DimensionMismatch {
            context: "nested_stage2: stage-two proposal scales",
            expected: dt,
            got: scales.len(),
        });
    }
    let s_total = stage1.nrows();
    let prior_mean = vec![0.0; dt];

    let results: Vec<SubChainResult> = match mode {
        SamplingMode::NestedParallel => (0..s_total)
            .into_par_iter()
            .map(|s| {
                run_subchain(
                    model,
                    &stage1.row(s)[..dp],
                    y,
                    &prior_mean,
                    scales,
                    cfg.n2,
                    derive_seed(cfg.seed, "stage2", s as u64),
                )
            })
            .collect::<Result<_>>()?,
        _ => {
            let mut acc = Vec::with_capacity(s_total);
            let mut warm = prior_mean.clone();
            for s in 0..s_total {
                let r = run_subchain(
                    model,
                    &stage1.row(s)[..dp],
                    y,
                    &warm,
                    scales,
                    cfg.n2,
                    derive_seed(cfg.seed, "stage2", s as u64),
                )?;
                warm.copy_from_slice(&r.theta);
                acc.push(r);
            }
            acc
        }
    };

    let mut data = Vec::with_capacity(s_total * (dp + 2 * dt));
    let mut accepted_total = 0usize;
    let mut zero_accept = 0usize;
    for (s, r) in results.iter().enumerate() {
        data.extend_from_slice(stage1.row(s));
        data.extend_from_slice(&r.theta);
        accepted_total += r.accepted;
        if r.accepted == 0 {
            zero_accept += 1;
        }
    }

    let mut names = param_names("phi", dp);
    names.extend(param_names("theta_tilde", dt));
    names.extend(param_names("theta", dt));
    let mut out = SampleMatrix::new(names, data, cfg.seed, stage1.accept_rate, mode)?;
    out.eta = stage1.eta;
    out.zero_acceptance = stage1.zero_acceptance;
    out.stage2_accept_rate = Some(accepted_total as f64 / (s_total * cfg.n2) as f64);
    out.stage2_zero_accept = zero_accept;
    out.scales = {
        let mut sc = stage1.scales.clone();
        sc.extend_from_slice(scales);
        sc
    };
    Ok(out)
}

/// Nested MCMC for the eta-SMI posterior with warm-started sub-chains:
/// sub-chain `s` initializes from the previous kept theta (the first from the
/// prior mean). Warm starts only help mixing; correctness rests on `n2`.
pub fn nested_smi_sampler<M>(
    model: &M,
    z: &M::ZData,
    y: &M::YData,
    eta: Eta,
    cfg: &ChainConfig,
) -> Result<SampleMatrix>
where
    M: TwoModuleModel + Sync + ?Sized,
    M::YData: Sync,
{
    nested_smi_sampler_with_mode(model, z, y, eta, cfg, SamplingMode::NestedWarmStart)
}

/// Nested MCMC with an explicit stage-two mode. In
/// [`SamplingMode::NestedParallel`] every sub-chain starts from the prior
/// mean and sub-chains run concurrently; draws are bit-identical to a
/// sequential run of the same mode.
pub fn nested_smi_sampler_with_mode<M>(
    model: &M,
    z: &M::ZData,
    y: &M::YData,
    eta: Eta,
    cfg: &ChainConfig,
    mode: SamplingMode,
) -> Result<SampleMatrix>
where
    M: TwoModuleModel + Sync + ?Sized,
    M::YData: Sync,
{
    let dp = model.dim_phi();
    let dt = model.dim_theta();
    cfg.validate(dp + 2 * dt)?;
    let stage1 = stage1_power_samples(model, z, y, eta, cfg)?;
    nested_stage2(model, &stage1, y, cfg, mode)
}
