use criterion::{black_box, criterion_group, criterion_main, Criterion};

use smi::eval::{build_loglik_matrix, waic, ParamLayout, ScoreTarget};
use smi::mcmc::{
    nested_smi_sampler, rw_metropolis_chain, two_stage_kernel_stationarity, ChainConfig,
    DiscreteTwoModule,
};
use smi::rng::rng_from_seed;
use smi::{
    exact_elpd, predictive_moments, simulate_dataset, smi_posterior_moments, BiasedDataModel,
    Eta, GaussianHyper, GaussianSuffStats, TrueGenerative, TwoModuleModel,
};

fn study_hyper() -> GaussianHyper {
    GaussianHyper::new(2.0, 1.0, f64::INFINITY, 0.5, 0.5).unwrap()
}

fn bench_closed_forms(c: &mut Criterion) {
    let stats = GaussianSuffStats::new(25, 50, -0.0667, 1.0562).unwrap();
    let hyper = study_hyper();
    let eta = Eta::new(0.55).unwrap();
    c.bench_function("smi_posterior_moments", |b| {
        b.iter(|| smi_posterior_moments(black_box(&stats), &hyper, eta).unwrap())
    });
    c.bench_function("predictive_moments", |b| {
        b.iter(|| predictive_moments(black_box(&stats), &hyper, eta).unwrap())
    });
    let pred = predictive_moments(&stats, &hyper, eta).unwrap();
    let truth = TrueGenerative { phi_star: 0.0, theta_star: 1.0 };
    c.bench_function("exact_elpd_4k", |b| {
        b.iter(|| exact_elpd(black_box(&pred), &truth, &hyper, 4000, 7).unwrap())
    });
}

fn bench_kernel(c: &mut Criterion) {
    let cfg = ChainConfig {
        n1: 2000,
        n2: 1,
        burnin: 200,
        thin: 1,
        proposal_scales: vec![2.4],
        seed: 11,
        tune_rounds: 0,
    };
    c.bench_function("rw_metropolis_2k_steps", |b| {
        b.iter(|| {
            rw_metropolis_chain(|x: &[f64]| -0.5 * x[0] * x[0], &[0.0], black_box(&cfg)).unwrap()
        })
    });
}

fn bench_nested(c: &mut Criterion) {
    let hyper = study_hyper();
    let model = BiasedDataModel::new(hyper);
    let truth = TrueGenerative { phi_star: 0.0, theta_star: 1.0 };
    let (z, y, _) = simulate_dataset(&truth, &hyper, 25, 50, 99).unwrap();
    let cfg = ChainConfig {
        n1: 500,
        n2: 100,
        burnin: 500,
        thin: 2,
        proposal_scales: vec![0.7, 0.9, 0.35],
        seed: 5,
        tune_rounds: 0,
    };
    let eta = Eta::new(0.5).unwrap();
    c.bench_function("nested_smi_sampler_500x100", |b| {
        b.iter(|| nested_smi_sampler(&model, &z[..], &y[..], eta, black_box(&cfg)).unwrap())
    });
}

fn bench_waic(c: &mut Criterion) {
    let hyper = study_hyper();
    let model = BiasedDataModel::new(hyper);
    let truth = TrueGenerative { phi_star: 0.0, theta_star: 1.0 };
    let (z, y, stats) = simulate_dataset(&truth, &hyper, 25, 50, 99).unwrap();
    let post = smi_posterior_moments(&stats, &hyper, Eta::new(0.5).unwrap()).unwrap();
    let mut rng = rng_from_seed(3);
    let mut draws = Vec::new();
    post.sample_into(&mut rng, 1000, &mut draws).unwrap();
    let layout = ParamLayout::phi_theta_first(model.dim_phi(), model.dim_theta());
    let ll = build_loglik_matrix(&model, &draws, 3, &layout, &z[..], &y[..], ScoreTarget::Both)
        .unwrap();
    c.bench_function("waic_1000x75", |b| b.iter(|| waic(black_box(&ll)).unwrap()));
}

fn bench_discrete(c: &mut Criterion) {
    let toy = DiscreteTwoModule {
        log_z_lik: vec![(0.7f64).ln(), (0.2f64).ln()],
        log_y_lik: vec![(0.4f64).ln(), (0.1f64).ln(), (0.25f64).ln(), (0.8f64).ln()],
        log_prior_phi: vec![(0.35f64).ln(), (0.65f64).ln()],
        log_prior_theta: vec![(0.55f64).ln(), (0.45f64).ln()],
        log_prior_theta_tilde: vec![(0.3f64).ln(), (0.7f64).ln()],
    };
    let eta = Eta::new(0.3).unwrap();
    c.bench_function("two_stage_kernel_stationarity_2x2x2", |b| {
        b.iter(|| two_stage_kernel_stationarity(black_box(&toy), eta).unwrap())
    });
}

criterion_group!(
    benches,
    bench_closed_forms,
    bench_kernel,
    bench_nested,
    bench_waic,
    bench_discrete
);
criterion_main!(benches);
