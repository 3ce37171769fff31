//! Gaussian random-walk Metropolis with fixed per-coordinate scales.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use super::{ChainConfig, SampleMatrix, SamplingMode};
use crate::error::{Result, SmiError};
use crate::rng::{derive_seed, SmiRng};

/// One Metropolis step: full-block Gaussian proposal, accept with probability
/// `min(1, exp(lp' - lp))`. A NaN proposal density rejects naturally.
pub(crate) fn metropolis_step<F: Fn(&[f64]) -> f64 + ?Sized>(
    target: &F,
    x: &mut [f64],
    lp: &mut f64,
    scales: &[f64],
    proposal: &mut [f64],
    rng: &mut SmiRng,
) -> bool {
    for (p, (&xi, &sc)) in proposal.iter_mut().zip(x.iter().zip(scales)) {
        let g: f64 = StandardNormal.sample(rng);
        *p = xi + sc * g;
    }
    let lp_new = target(proposal);
    let u: f64 = rng.gen();
    if u.ln() < lp_new - *lp {
        x.copy_from_slice(proposal);
        *lp = lp_new;
        true
    } else {
        false
    }
}

/// Pilot phase targeting an acceptance rate in [0.2, 0.5]: a short settle-in
/// run, then windows that re-derive per-coordinate scales from the pilot
/// sample spread (the 2.38/sqrt(d) rule) under a global factor nudged by the
/// observed acceptance. Pilot draws never reach the output; the scales are
/// frozen before the real run.
pub(crate) fn tune_scales<F: Fn(&[f64]) -> f64 + ?Sized>(
    target: &F,
    init: &[f64],
    scales: &[f64],
    rounds: usize,
    seed: u64,
) -> Vec<f64> {
    const WINDOW: usize = 300;
    let d = init.len();
    let mut scales = scales.to_vec();
    let mut rng = SmiRng::seed_from_u64(seed);
    let mut x = init.to_vec();
    let mut lp = target(&x);
    let mut proposal = vec![0.0; d];

    for _ in 0..WINDOW {
        metropolis_step(target, &mut x, &mut lp, &scales, &mut proposal, &mut rng);
    }

    let base = 2.38 / (d as f64).sqrt();
    let mut factor = 1.0f64;
    for round in 0..rounds {
        let mut accepted = 0usize;
        let mut sum = vec![0.0f64; d];
        let mut sumsq = vec![0.0f64; d];
        for _ in 0..WINDOW {
            if metropolis_step(target, &mut x, &mut lp, &scales, &mut proposal, &mut rng) {
                accepted += 1;
            }
            for (k, &v) in x.iter().enumerate() {
                sum[k] += v;
                sumsq[k] += v * v;
            }
        }
        let rate = accepted as f64 / WINDOW as f64;
        factor *= if rate < 0.05 {
            0.4
        } else if rate < 0.2 {
            0.75
        } else if rate > 0.7 {
            2.0
        } else if rate > 0.5 {
            1.3
        } else {
            1.0
        };
        let mut max_change = 0.0f64;
        for k in 0..d {
            let mean = sum[k] / WINDOW as f64;
            let var = (sumsq[k] / WINDOW as f64 - mean * mean).max(0.0);
            let new = if var > 0.0 {
                base * var.sqrt() * factor
            } else {
                // Coordinate never moved in the window; follow the factor.
                scales[k] * factor
            };
            max_change = max_change.max((new / scales[k] - 1.0).abs());
            scales[k] = new;
        }
        // Stop once acceptance sits in the band and no scale is still
        // drifting: slow coordinates bootstrap their range over rounds.
        if (0.2..=0.5).contains(&rate) && max_change < 0.2 && round >= 3 {
            break;
        }
    }
    scales
}

/// Runs a random-walk Metropolis chain on `target_logpdf`, returning `cfg.n1`
/// kept draws after burn-in and thinning. Deterministic given `cfg.seed`.
pub fn rw_metropolis_chain<F: Fn(&[f64]) -> f64>(
    target_logpdf: F,
    init: &[f64],
    cfg: &ChainConfig,
) -> Result<SampleMatrix> {
    cfg.validate(init.len())?;
    if init.is_empty() {
        return Err(SmiError::Precondition("empty initial state".into()));
    }
    let lp0 = target_logpdf(init);
    if !lp0.is_finite() {
        return Err(SmiError::Precondition(format!(
            "target log density at the initial state is {lp0}; init must lie in the support"
        )));
    }

    let scales = if cfg.tune_rounds > 0 {
        tune_scales(
            &target_logpdf,
            init,
            &cfg.proposal_scales,
            cfg.tune_rounds,
            derive_seed(cfg.seed, "tune", 0),
        )
    } else {
        cfg.proposal_scales.clone()
    };

    let d = init.len();
    let mut rng = SmiRng::seed_from_u64(cfg.seed);
    let mut x = init.to_vec();
    let mut lp = lp0;
    let mut proposal = vec![0.0; d];
    let total = cfg.burnin + cfg.n1 * cfg.thin;
    let mut kept = Vec::with_capacity(cfg.n1 * d);
    let mut accepted_post = 0usize;

    for step in 0..total {
        let accepted = metropolis_step(&target_logpdf, &mut x, &mut lp, &scales, &mut proposal, &mut rng);
        if step >= cfg.burnin {
            if accepted {
                accepted_post += 1;
            }
            if (step - cfg.burnin).is_multiple_of(cfg.thin) {
                kept.extend_from_slice(&x);
            }
        }
    }

    let post_steps = (total - cfg.burnin).max(1);
    let names = (0..d).map(|j| format!("x{}", j + 1)).collect();
    let mut out = SampleMatrix::new(
        names,
        kept,
        cfg.seed,
        accepted_post as f64 / post_steps as f64,
        SamplingMode::SingleChain,
    )?;
    out.zero_acceptance = accepted_post == 0;
    out.scales = scales;
    Ok(out)
}
