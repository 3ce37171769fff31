//! Density-level checks of the loss functions against the closed-form
//! Gaussian posterior, via trapezoid quadrature on 3-d grids.
//!
//! The quadrature machinery here is the independent oracle: it normalizes
//! `exp(-smi_log_loss) * prior` numerically and never touches the moment
//! formulas it is checking.

use smi::gaussian::{
    simulate_dataset, smi_posterior_moments, BiasedDataModel, GaussianHyper, TrueGenerative,
};
use smi::model::{smi_log_loss, Eta, SmiParams, TwoModuleModel};

struct Grid {
    start: f64,
    step: f64,
    k: usize,
}

impl Grid {
    fn around(center: f64, sd: f64, halfwidth: f64, k: usize) -> Self {
        let start = center - halfwidth * sd;
        let step = 2.0 * halfwidth * sd / (k - 1) as f64;
        Grid { start, step, k }
    }

    fn at(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    fn trap_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.k - 1 {
            0.5
        } else {
            1.0
        }
    }
}

/// Tabulated pieces of the joint SMI log density over a (phi, theta,
/// theta_tilde) product grid. The cell value is reconstructed exactly the way
/// `smi_log_loss` combines terms, which a random spot check enforces.
struct SmiDensityTable<'a> {
    model: &'a BiasedDataModel,
    z: &'a [f64],
    y: &'a [f64],
    eta: Eta,
    lz: Vec<f64>,
    lm: Vec<f64>,
    lp_phi: Vec<f64>,
    ly_theta: Vec<f64>,
    ly_tilde: Vec<f64>,
    lp_theta: Vec<f64>,
    lp_tilde: Vec<f64>,
}

impl<'a> SmiDensityTable<'a> {
    fn build(
        model: &'a BiasedDataModel,
        z: &'a [f64],
        y: &'a [f64],
        eta: Eta,
        gp: &Grid,
        gt: &Grid,
        gtt: &Grid,
    ) -> Self {
        let lz: Vec<f64> = (0..gp.k).map(|i| model.log_z_lik(&[gp.at(i)], z)).collect();
        let lm: Vec<f64> = (0..gp.k)
            .map(|i| model.log_y_marginal(&[gp.at(i)], y).unwrap())
            .collect();
        let lp_phi: Vec<f64> = (0..gp.k).map(|i| model.log_prior_phi(&[gp.at(i)])).collect();
        let mut ly_theta = Vec::with_capacity(gp.k * gt.k);
        for i in 0..gp.k {
            for j in 0..gt.k {
                ly_theta.push(model.log_y_lik(&[gp.at(i)], &[gt.at(j)], y));
            }
        }
        let mut ly_tilde = Vec::with_capacity(gp.k * gtt.k);
        for i in 0..gp.k {
            for j in 0..gtt.k {
                ly_tilde.push(model.log_y_lik(&[gp.at(i)], &[gtt.at(j)], y));
            }
        }
        let lp_theta: Vec<f64> = (0..gt.k)
            .map(|j| model.log_prior_theta(&[gt.at(j)]))
            .collect();
        let lp_tilde: Vec<f64> = (0..gtt.k)
            .map(|j| model.log_prior_theta_tilde(&[gtt.at(j)]))
            .collect();
        SmiDensityTable {
            model,
            z,
            y,
            eta,
            lz,
            lm,
            lp_phi,
            ly_theta,
            ly_tilde,
            lp_theta,
            lp_tilde,
        }
    }

    /// `-smi_log_loss` at cell `(i, j, k)`, combined in the same order the
    /// loss op uses.
    fn neg_loss(&self, nt: usize, ntt: usize, i: usize, j: usize, k: usize) -> f64 {
        let e = self.eta.value();
        let powered = if e == 0.0 {
            0.0
        } else {
            e * self.ly_tilde[i * ntt + k]
        };
        ((self.lz[i] + powered) + self.ly_theta[i * nt + j]) - self.lm[i]
    }

    fn log_joint(&self, nt: usize, ntt: usize, i: usize, j: usize, k: usize) -> f64 {
        self.neg_loss(nt, ntt, i, j, k) + self.lp_phi[i] + self.lp_theta[j] + self.lp_tilde[k]
    }

    fn spot_check(&self, gp: &Grid, gt: &Grid, gtt: &Grid, count: usize) {
        let mut state = 0x9E37u64;
        for _ in 0..count {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (state >> 33) as usize % gp.k;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % gt.k;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = (state >> 33) as usize % gtt.k;
            let params =
                SmiParams::new(vec![gp.at(i)], vec![gt.at(j)], vec![gtt.at(k)]).unwrap();
            let loss = smi_log_loss(self.model, &params, self.z, self.y, self.eta).unwrap();
            let table = self.neg_loss(gt.k, gtt.k, i, j, k);
            assert!(
                (table + loss).abs() <= 1e-12 * (1.0 + loss.abs()),
                "table reconstruction {} vs op {}",
                table,
                -loss
            );
        }
    }
}

/// Pointwise relative agreement between the quadrature-normalized density
/// and the closed-form MVN density over the full grid.
fn max_pointwise_relative_error(
    model: &BiasedDataModel,
    z: &[f64],
    y: &[f64],
    eta: Eta,
    k: usize,
) -> f64 {
    let stats = smi::gaussian::GaussianSuffStats::from_data(z, y).unwrap();
    let exact = smi_posterior_moments(&stats, model.hyper(), eta).unwrap();
    let sd = |i: usize| exact.cov()[(i, i)].sqrt();
    let gp = Grid::around(exact.mean()[0], sd(0), 6.0, k);
    let gt = Grid::around(exact.mean()[1], sd(1), 6.0, k);
    let gtt = Grid::around(exact.mean()[2], sd(2), 6.0, k);

    let table = SmiDensityTable::build(model, z, y, eta, &gp, &gt, &gtt);
    table.spot_check(&gp, &gt, &gtt, 50);

    // Pass 1: max log value; pass 2: trapezoid normalizer.
    let mut max_log = f64::NEG_INFINITY;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                max_log = max_log.max(table.log_joint(k, k, i, j, l));
            }
        }
    }
    let mut z_trap = 0.0;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let w = gp.trap_weight(i) * gt.trap_weight(j) * gtt.trap_weight(l);
                z_trap += w * (table.log_joint(k, k, i, j, l) - max_log).exp();
            }
        }
    }
    let log_norm = max_log + z_trap.ln() + (gp.step * gt.step * gtt.step).ln();

    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let quad_log_density = table.log_joint(k, k, i, j, l) - log_norm;
                let exact_log_density = exact
                    .logpdf(&[gp.at(i), gt.at(j), gtt.at(l)])
                    .unwrap();
                let rel = (quad_log_density.exp() / exact_log_density.exp() - 1.0).abs();
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn smi_density_matches_quadrature_normalization() {
    let hyper = GaussianHyper::new(2.0, 1.0, f64::INFINITY, 0.5, 0.5).unwrap();
    let model = BiasedDataModel::new(hyper);
    let truth = TrueGenerative { phi_star: 0.0, theta_star: 1.0 };
    let (z, y, _) = simulate_dataset(&truth, &hyper, 25, 50, 1234).unwrap();
    for eta in [0.0, 0.5, 1.0] {
        let worst =
            max_pointwise_relative_error(&model, &z, &y, Eta::new(eta).unwrap(), 81);
        assert!(
            worst < 1e-6,
            "eta {eta}: worst pointwise relative error {worst:.3e}"
        );
    }
}

/// Marginalizing theta_tilde out of the SMI density must reproduce the full
/// posterior at eta = 1 and the cut posterior at eta = 0, with both endpoint
/// densities built by independent direct routes (no loss functions).
#[test]
fn smi_marginal_hits_both_endpoints() {
    let hyper = GaussianHyper::new(2.0, 1.0, f64::INFINITY, 0.5, 0.5).unwrap();
    let model = BiasedDataModel::new(hyper);
    let truth = TrueGenerative { phi_star: 0.0, theta_star: 1.0 };
    let (z, y, stats) = simulate_dataset(&truth, &hyper, 20, 40, 4321).unwrap();
    let k = 121;

    for (eta, is_full) in [(Eta::ONE, true), (Eta::ZERO, false)] {
        let exact = smi_posterior_moments(&stats, &hyper, eta).unwrap();
        let sd = |i: usize| exact.cov()[(i, i)].sqrt();
        // Wide grids: the theta_tilde conditional ridge drifts by up to the
        // full correlation times the phi excursion, so +-7 marginal sds is
        // not enough for the marginalization axis.
        let gp = Grid::around(exact.mean()[0], sd(0), 14.0, k);
        let gt = Grid::around(exact.mean()[1], sd(1), 14.0, k);
        let gtt = Grid::around(exact.mean()[2], sd(2), 14.0, k);
        let table = SmiDensityTable::build(&model, &z, &y, eta, &gp, &gt, &gtt);

        // SMI joint marginalized over theta_tilde (trapezoid along axis 3).
        let mut smi_marg = vec![0.0f64; k * k];
        let mut max_log = f64::NEG_INFINITY;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    max_log = max_log.max(table.log_joint(k, k, i, j, l));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += gtt.trap_weight(l)
                        * (table.log_joint(k, k, i, j, l) - max_log).exp();
                }
                smi_marg[i * k + j] = acc;
            }
        }

        // Independent endpoint density on the same (phi, theta) grid.
        let mut want = vec![0.0f64; k * k];
        if is_full {
            // Full posterior: p(Z|phi) p(Y|phi,theta) p(phi) p(theta).
            let mut wmax = f64::NEG_INFINITY;
            let mut logs = vec![0.0f64; k * k];
            for i in 0..k {
                for j in 0..k {
                    let lp = model.log_z_lik(&[gp.at(i)], &z)
                        + model.log_y_lik(&[gp.at(i)], &[gt.at(j)], &y)
                        + model.log_prior_phi(&[gp.at(i)])
                        + model.log_prior_theta(&[gt.at(j)]);
                    logs[i * k + j] = lp;
                    wmax = wmax.max(lp);
                }
            }
            for (w, l) in want.iter_mut().zip(&logs) {
                *w = (l - wmax).exp();
            }
        } else {
            // Cut posterior: p(phi|Z) p(theta|Y,phi), each factor normalized
            // by its own one-dimensional quadrature.
            let lz: Vec<f64> = (0..k)
                .map(|i| model.log_z_lik(&[gp.at(i)], &z) + model.log_prior_phi(&[gp.at(i)]))
                .collect();
            let lz_max = lz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z_norm: f64 = (0..k)
                .map(|i| gp.trap_weight(i) * (lz[i] - lz_max).exp())
                .sum();
            for i in 0..k {
                let cond: Vec<f64> = (0..k)
                    .map(|j| {
                        model.log_y_lik(&[gp.at(i)], &[gt.at(j)], &y)
                            + model.log_prior_theta(&[gt.at(j)])
                    })
                    .collect();
                let cmax = cond.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let cnorm: f64 = (0..k)
                    .map(|j| gt.trap_weight(j) * (cond[j] - cmax).exp())
                    .sum();
                for j in 0..k {
                    want[i * k + j] =
                        (lz[i] - lz_max).exp() / z_norm * (cond[j] - cmax).exp() / cnorm;
                }
            }
        }

        // Normalize both on the grid and compare where mass is non-trivial.
        let smi_total: f64 = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| gp.trap_weight(i) * gt.trap_weight(j) * smi_marg[i * k + j])
            .sum();
        let want_total: f64 = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| gp.trap_weight(i) * gt.trap_weight(j) * want[i * k + j])
            .sum();
        let peak = smi_marg.iter().cloned().fold(0.0f64, f64::max) / smi_total;
        let mut worst = 0.0f64;
        for idx in 0..k * k {
            let a = smi_marg[idx] / smi_total;
            let b = want[idx] / want_total;
            if a / peak > 1e-12 {
                worst = worst.max((a / b - 1.0).abs());
            }
        }
        assert!(
            worst < 1e-6,
            "endpoint eta={} worst relative density error {worst:.3e}",
            eta.value()
        );
    }
}
