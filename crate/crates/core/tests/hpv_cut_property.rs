//! At eta = 0 the nested sampler's phi marginals must coincide with those of
//! a standalone sampler that has never seen the Poisson module: the cut
//! blocks all feedback from module 2 into the prevalences.

use smi::mcmc::{diagnostics, nested_smi_sampler, rw_metropolis_chain, ChainConfig};
use smi::model::{Eta, TwoModuleModel};
use smi::zoo::{hpv_model, hpv_simulate, HpvParams, HpvPriorSpec};

#[test]
fn cut_phi_marginals_ignore_the_poisson_module() {
    let phi_star = vec![0.08, 0.15, 0.22, 0.3, 0.12];
    let t = vec![1.0e4; 5];
    let n = vec![400u64; 5];
    let params = HpvParams::new(-5.0, 8.0, phi_star).unwrap();
    let data = hpv_simulate(&params, &t, &n, 7171).unwrap();
    let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();

    let mut scales = vec![0.1; 5];
    scales.extend_from_slice(&[0.012, 0.07]); // theta_tilde block
    scales.extend_from_slice(&[0.02, 0.12]); // theta block
    let cfg = ChainConfig {
        n1: 4000,
        n2: 200,
        burnin: 2000,
        thin: 5,
        proposal_scales: scales,
        seed: 31,
        tune_rounds: 40,
    };
    let nested = nested_smi_sampler(
        &model,
        &data.prevalence,
        &data.incidence,
        Eta::ZERO,
        &cfg,
    )
    .unwrap();
    let nested_diag = diagnostics(&nested).unwrap();

    // Standalone sampler on the Binomial module alone (prior included).
    let prev = data.prevalence.clone();
    let target = move |x: &[f64]| model.log_z_lik(x, &prev) + model.log_prior_phi(x);
    let alone_cfg = ChainConfig {
        n1: 4000,
        n2: 1,
        burnin: 2000,
        thin: 5,
        proposal_scales: vec![0.1; 5],
        seed: 97,
        tune_rounds: 40,
    };
    let init: Vec<f64> = data
        .prevalence
        .z
        .iter()
        .zip(&data.prevalence.n)
        .map(|(&z, &nn)| {
            let p = (z as f64 + 0.5) / (nn as f64 + 1.0);
            (p / (1.0 - p)).ln()
        })
        .collect();
    let alone = rw_metropolis_chain(target, &init, &alone_cfg).unwrap();
    let alone_diag = diagnostics(&alone).unwrap();

    for j in 0..5 {
        let m_nested = nested.column_mean(j);
        let m_alone = alone.column_mean(j);
        let se = (nested.column_variance(j) / nested_diag.ess[j]
            + alone.column_variance(j) / alone_diag.ess[j])
            .sqrt();
        assert!(
            (m_nested - m_alone).abs() < 3.0 * se,
            "phi_{j}: nested {m_nested} vs standalone {m_alone} (se {se})"
        );
    }
}
