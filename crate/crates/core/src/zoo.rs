//! Concrete two-module models beyond the Gaussian oracle.
//!
//! The HPV model ties, per population `i`, a Binomial count of infections
//! `Z_i` out of `N_i` sampled women to a prevalence `phi_i` (module 1), and a
//! Poisson count of cancer cases `Y_i` over `T_i` women-years with rate
//! `mu_i = T_i * exp(theta_1 + theta_2 * phi_i)` (module 2).
//!
//! For sampling, the prevalences are carried on the logit scale so the
//! random-walk kernel moves through an unconstrained space; the Beta(1, 1)
//! prior picks up the Jacobian of the transform.

use rand::SeedableRng;
use rand_distr::{Binomial, Distribution, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::error::{Result, SmiError};
use crate::model::{normal_logpdf, PointwiseLogLik, TwoModuleModel};
use crate::rng::SmiRng;

/// Module-1 data: HPV-positive counts out of per-population sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct HpvPrevalenceData {
    pub z: Vec<u64>,
    pub n: Vec<u64>,
}

/// Module-2 data: cancer case counts over women-years of follow-up.
#[derive(Debug, Clone, PartialEq)]
pub struct HpvIncidenceData {
    pub y: Vec<u64>,
    pub t: Vec<f64>,
}

/// One row per population: `(Y_i, T_i, Z_i, N_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HpvData {
    pub prevalence: HpvPrevalenceData,
    pub incidence: HpvIncidenceData,
}

impl HpvData {
    pub fn new(y: Vec<u64>, t: Vec<f64>, z: Vec<u64>, n: Vec<u64>) -> Result<Self> {
        let i = y.len();
        if i == 0 {
            return Err(SmiError::DataValidation(
                "HPV data needs at least one population".into(),
            ));
        }
        if t.len() != i || z.len() != i || n.len() != i {
            return Err(SmiError::DataValidation(format!(
                "HPV columns must share one length, got Y:{} T:{} Z:{} N:{}",
                i,
                t.len(),
                z.len(),
                n.len()
            )));
        }
        for (k, &tk) in t.iter().enumerate() {
            if !(tk.is_finite() && tk > 0.0) {
                return Err(SmiError::DataValidation(format!(
                    "T must be positive and finite, got {tk} in row {k}"
                )));
            }
        }
        for k in 0..i {
            if n[k] == 0 {
                return Err(SmiError::DataValidation(format!(
                    "N must be >= 1, got 0 in row {k}"
                )));
            }
            if z[k] > n[k] {
                return Err(SmiError::DataValidation(format!(
                    "Z ({}) exceeds N ({}) in row {k}",
                    z[k], n[k]
                )));
            }
        }
        Ok(HpvData {
            prevalence: HpvPrevalenceData { z, n },
            incidence: HpvIncidenceData { y, t },
        })
    }

    pub fn n_populations(&self) -> usize {
        self.incidence.y.len()
    }

    /// Reads `pop,Y,T,Z,N` rows (header required).
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let want = ["pop", "Y", "T", "Z", "N"];
        let idx: Vec<usize> = want
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| SmiError::DataValidation(format!("missing CSV column `{name}`")))
            })
            .collect::<Result<_>>()?;
        let (mut y, mut t, mut z, mut n) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(idx[k]).ok_or_else(|| {
                    SmiError::DataValidation(format!("short CSV record: {rec:?}"))
                })
            };
            y.push(field(1)?.trim().parse::<u64>().map_err(|e| {
                SmiError::DataValidation(format!("bad Y value `{}`: {e}", field(1).unwrap()))
            })?);
            t.push(field(2)?.trim().parse::<f64>().map_err(|e| {
                SmiError::DataValidation(format!("bad T value `{}`: {e}", field(2).unwrap()))
            })?);
            z.push(field(3)?.trim().parse::<u64>().map_err(|e| {
                SmiError::DataValidation(format!("bad Z value `{}`: {e}", field(3).unwrap()))
            })?);
            n.push(field(4)?.trim().parse::<u64>().map_err(|e| {
                SmiError::DataValidation(format!("bad N value `{}`: {e}", field(4).unwrap()))
            })?);
        }
        HpvData::new(y, t, z, n)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pop", "Y", "T", "Z", "N"])?;
        for i in 0..self.n_populations() {
            w.write_record([
                (i + 1).to_string(),
                self.incidence.y[i].to_string(),
                self.incidence.t[i].to_string(),
                self.prevalence.z[i].to_string(),
                self.prevalence.n[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Natural-scale parameters of the HPV model.
#[derive(Debug, Clone, PartialEq)]
pub struct HpvParams {
    pub theta1: f64,
    pub theta2: f64,
    /// Prevalences, each strictly inside (0, 1).
    pub phi: Vec<f64>,
}

impl HpvParams {
    pub fn new(theta1: f64, theta2: f64, phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(SmiError::Precondition(
                "every phi must lie strictly inside (0, 1)".into(),
            ));
        }
        Ok(HpvParams { theta1, theta2, phi })
    }
}

/// Priors for the HPV model. The observation model leaves them open;
/// these weak defaults are recorded in run configuration for
/// reproducibility: `theta ~ N(0, 10^2)`, `phi_i ~ Uniform(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpvPriorSpec {
    pub theta_sd: f64,
}

impl Default for HpvPriorSpec {
    fn default() -> Self {
        HpvPriorSpec { theta_sd: 10.0 }
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t
    } else if t < -35.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub(crate) fn binomial_ln_pmf(k: u64, n: u64, logit_p: f64) -> f64 {
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    // ln p = -softplus(-x), ln(1-p) = -softplus(x); both stay finite.
    ln_choose - k as f64 * softplus(-logit_p) - (n - k) as f64 * softplus(logit_p)
}

pub(crate) fn poisson_ln_pmf(k: u64, ln_mu: f64) -> f64 {
    let mu = ln_mu.exp();
    k as f64 * ln_mu - mu - ln_factorial(k)
}

/// The HPV model over `phi` in logit space (dimension = number of
/// populations) and `theta = (theta_1, theta_2)`.
#[derive(Debug, Clone)]
pub struct HpvModel {
    n_populations: usize,
    prior: HpvPriorSpec,
}

/// Builds the HPV [`TwoModuleModel`] for a dataset shape, validating the data.
pub fn hpv_model(data: &HpvData, prior: HpvPriorSpec) -> Result<HpvModel> {
    // HpvData is validated on construction; re-check the Z <= N invariant to
    // catch hand-built structs.
    for (k, (&z, &n)) in data.prevalence.z.iter().zip(&data.prevalence.n).enumerate() {
        if z > n {
            return Err(SmiError::DataValidation(format!(
                "Z ({z}) exceeds N ({n}) in row {k}"
            )));
        }
    }
    if !(prior.theta_sd.is_finite() && prior.theta_sd > 0.0) {
        return Err(SmiError::Precondition(
            "theta prior sd must be positive and finite".into(),
        ));
    }
    Ok(HpvModel {
        n_populations: data.n_populations(),
        prior,
    })
}

impl TwoModuleModel for HpvModel {
    type ZData = HpvPrevalenceData;
    type YData = HpvIncidenceData;

    fn name(&self) -> &str {
        "hpv"
    }

    fn dim_phi(&self) -> usize {
        self.n_populations
    }

    fn dim_theta(&self) -> usize {
        2
    }

    fn log_z_lik(&self, phi: &[f64], z: &HpvPrevalenceData) -> f64 {
        phi.iter()
            .zip(z.z.iter().zip(&z.n))
            .map(|(&x, (&k, &n))| binomial_ln_pmf(k, n, x))
            .sum()
    }

    fn log_y_lik(&self, phi: &[f64], theta: &[f64], y: &HpvIncidenceData) -> f64 {
        phi.iter()
            .zip(y.y.iter().zip(&y.t))
            .map(|(&x, (&k, &t))| {
                let ln_mu = t.ln() + theta[0] + theta[1] * sigmoid(x);
                poisson_ln_pmf(k, ln_mu)
            })
            .sum()
    }

    /// Uniform(0, 1) prior on each prevalence plus the logit Jacobian:
    /// log p(x) = log sigma(x) + log(1 - sigma(x)).
    fn log_prior_phi(&self, phi: &[f64]) -> f64 {
        phi.iter().map(|&x| -softplus(-x) - softplus(x)).sum()
    }

    fn log_prior_theta(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .map(|&t| normal_logpdf(t, 0.0, self.prior.theta_sd))
            .sum()
    }

    /// Crude moment-based starting point: smoothed empirical prevalences on
    /// the logit scale and the pooled log incidence rate for theta_1.
    fn stage1_init(&self, z: &HpvPrevalenceData, y: &HpvIncidenceData) -> Vec<f64> {
        let mut init: Vec<f64> = z
            .z
            .iter()
            .zip(&z.n)
            .map(|(&zi, &ni)| {
                let p = (zi as f64 + 0.5) / (ni as f64 + 1.0);
                (p / (1.0 - p)).ln()
            })
            .collect();
        let total_y: f64 = y.y.iter().map(|&v| v as f64).sum();
        let total_t: f64 = y.t.iter().sum();
        init.push((total_y.max(0.5) / total_t).ln());
        init.push(0.0);
        init
    }
}

impl PointwiseLogLik for HpvModel {
    fn n_z_points(&self, z: &HpvPrevalenceData) -> usize {
        z.z.len()
    }

    fn n_y_points(&self, y: &HpvIncidenceData) -> usize {
        y.y.len()
    }

    fn log_z_lik_point(&self, phi: &[f64], z: &HpvPrevalenceData, j: usize) -> f64 {
        binomial_ln_pmf(z.z[j], z.n[j], phi[j])
    }

    fn log_y_lik_point(&self, phi: &[f64], theta: &[f64], y: &HpvIncidenceData, j: usize) -> f64 {
        let ln_mu = y.t[j].ln() + theta[0] + theta[1] * sigmoid(phi[j]);
        poisson_ln_pmf(y.y[j], ln_mu)
    }
}

/// Forward simulation from the HPV model. Deterministic given the seed;
/// populations are drawn in order, Z before Y within each.
pub fn hpv_simulate(params: &HpvParams, t: &[f64], n: &[u64], seed: u64) -> Result<HpvData> {
    if t.len() != params.phi.len() || n.len() != params.phi.len() {
        return Err(SmiError::DimensionMismatch {
            context: "hpv_simulate: T/N vectors",
            expected: params.phi.len(),
            got: t.len().min(n.len()),
        });
    }
    let mut rng = SmiRng::seed_from_u64(seed);
    let mut z = Vec::with_capacity(params.phi.len());
    let mut y = Vec::with_capacity(params.phi.len());
    for (i, &p) in params.phi.iter().enumerate() {
        let zb = Binomial::new(n[i], p)
            .map_err(|e| SmiError::Precondition(format!("binomial draw: {e}")))?;
        z.push(zb.sample(&mut rng));
        let mu = t[i] * (params.theta1 + params.theta2 * p).exp();
        let py = Poisson::new(mu)
            .map_err(|e| SmiError::Precondition(format!("poisson draw (mu={mu}): {e}")))?;
        y.push(py.sample(&mut rng) as u64);
    }
    HpvData::new(y, t.to_vec(), z, n.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_data() -> HpvData {
        HpvData::new(
            vec![20, 35, 12],
            vec![1000.0, 2500.0, 800.0],
            vec![7, 15, 2],
            vec![100, 200, 50],
        )
        .unwrap()
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn poisson_unit_rate_at_zero_counts() {
        // theta2 = 0, T = 1, theta1 = 0 gives mu = 1 and log pmf(0) = -1.
        let data = HpvData::new(vec![0], vec![1.0], vec![0], vec![1]).unwrap();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        let ll = model.log_y_lik(&[0.3], &[0.0, 0.0], &data.incidence);
        assert_relative_eq!(ll, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn binomial_single_trial_at_half() {
        let data = HpvData::new(vec![0], vec![1.0], vec![0], vec![1]).unwrap();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        let ll = model.log_z_lik(&[logit(0.5)], &data.prevalence);
        assert_relative_eq!(ll, (0.5f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_densities_match_independent_pmf_summation() {
        // Independent oracle: compensated (Kahan) summation of log factors,
        // with binomial coefficients accumulated as a product of ratios.
        fn kahan_sum(terms: impl Iterator<Item = f64>) -> f64 {
            let mut sum = 0.0;
            let mut c = 0.0;
            for t in terms {
                let y = t - c;
                let s = sum + y;
                c = (s - sum) - y;
                sum = s;
            }
            sum
        }
        fn ln_choose_oracle(n: u64, k: u64) -> f64 {
            let k = k.min(n - k);
            kahan_sum((1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()))
        }

        let data = small_data();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        let phi = [0.07, 0.11, 0.033];
        let x: Vec<f64> = phi.iter().map(|&p| logit(p)).collect();
        let theta = [-4.2, 9.0];

        let mut want_z = 0.0;
        for i in 0..3 {
            let (zk, nk) = (data.prevalence.z[i], data.prevalence.n[i]);
            want_z += ln_choose_oracle(nk, zk)
                + zk as f64 * phi[i].ln()
                + (nk - zk) as f64 * (1.0 - phi[i]).ln();
        }
        assert_relative_eq!(
            model.log_z_lik(&x, &data.prevalence),
            want_z,
            max_relative = 1e-10
        );

        let mut want_y = 0.0;
        for i in 0..3 {
            let mu = data.incidence.t[i] * (theta[0] + theta[1] * phi[i]).exp();
            let yk = data.incidence.y[i];
            want_y += yk as f64 * mu.ln() - mu - kahan_sum((1..=yk).map(|v| (v as f64).ln()));
        }
        assert_relative_eq!(
            model.log_y_lik(&x, &theta, &data.incidence),
            want_y,
            max_relative = 1e-10
        );
    }

    #[test]
    fn pointwise_terms_sum_to_the_block() {
        use crate::model::PointwiseLogLik;
        let data = small_data();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        let x = [-2.0, -1.5, -3.0];
        let theta = [-4.0, 7.0];
        let sum_z: f64 = (0..3)
            .map(|j| model.log_z_lik_point(&x, &data.prevalence, j))
            .sum();
        let sum_y: f64 = (0..3)
            .map(|j| model.log_y_lik_point(&x, &theta, &data.incidence, j))
            .sum();
        assert_relative_eq!(sum_z, model.log_z_lik(&x, &data.prevalence), epsilon = 1e-12);
        assert_relative_eq!(
            sum_y,
            model.log_y_lik(&x, &theta, &data.incidence),
            epsilon = 1e-12
        );
    }

    #[test]
    fn extreme_parameters_stay_off_nan() {
        let data = small_data();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        for x in [-500.0, 500.0] {
            let lz = model.log_z_lik(&[x, x, x], &data.prevalence);
            assert!(!lz.is_nan() && lz < f64::INFINITY);
        }
        // Huge theta1 overflows mu to +inf; the log pmf must go to -inf.
        let ly = model.log_y_lik(&[0.0, 0.0, 0.0], &[800.0, 0.0], &data.incidence);
        assert_eq!(ly, f64::NEG_INFINITY);
    }

    #[test]
    fn data_validation_rejects_bad_rows() {
        assert!(HpvData::new(vec![1], vec![10.0], vec![5], vec![4]).is_err()); // Z > N
        assert!(HpvData::new(vec![], vec![], vec![], vec![]).is_err());
        assert!(HpvData::new(vec![1], vec![-3.0], vec![1], vec![4]).is_err()); // bad T
        assert!(HpvData::new(vec![1, 2], vec![10.0], vec![1], vec![4]).is_err()); // ragged
    }

    #[test]
    fn csv_round_trip() {
        let data = small_data();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hpv.csv");
        data.write_csv(&path).unwrap();
        let back = HpvData::from_csv_path(&path).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn simulation_is_deterministic_and_respects_bounds() {
        let params = HpvParams::new(-4.0, 8.0, vec![0.05, 0.1, 0.2]).unwrap();
        let t = [1.0e4, 2.0e4, 5.0e3];
        let n = [500, 800, 300];
        let a = hpv_simulate(&params, &t, &n, 99).unwrap();
        let b = hpv_simulate(&params, &t, &n, 99).unwrap();
        assert_eq!(a, b);
        for i in 0..3 {
            assert!(a.prevalence.z[i] <= n[i]);
        }
    }

    #[test]
    fn simulated_prevalence_counts_match_binomial_mean() {
        // E[Z_i] = N_i phi_i within 4 binomial standard errors over many
        // replicates.
        let phi = 0.12;
        let n_trials = 50u64;
        let reps = 100_000usize;
        let params = HpvParams::new(-2.0, 0.0, vec![phi]).unwrap();
        let mut total = 0u64;
        for r in 0..reps {
            let d = hpv_simulate(&params, &[100.0], &[n_trials], 1000 + r as u64).unwrap();
            total += d.prevalence.z[0];
        }
        let mean = total as f64 / reps as f64;
        let want = n_trials as f64 * phi;
        let se = (n_trials as f64 * phi * (1.0 - phi) / reps as f64).sqrt();
        assert!(
            (mean - want).abs() < 4.0 * se,
            "mean Z {mean} vs {want} (se {se})"
        );
    }

    #[test]
    fn theta2_zero_decouples_y_from_phi() {
        // With theta2 = 0 the Poisson block cannot depend on phi.
        let data = small_data();
        let model = hpv_model(&data, HpvPriorSpec::default()).unwrap();
        let a = model.log_y_lik(&[-3.0, 0.0, 2.0], &[-4.0, 0.0], &data.incidence);
        let b = model.log_y_lik(&[1.0, -2.0, 0.5], &[-4.0, 0.0], &data.incidence);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn theta2_zero_makes_simulated_y_independent_of_phi() {
        // Two-sample rank test: Y draws simulated at very different
        // prevalences must be exchangeable when theta2 = 0.
        let reps = 4000usize;
        let draw = |phi: f64, seed0: u64| -> Vec<u64> {
            let params = HpvParams::new(1.5, 0.0, vec![phi]).unwrap();
            (0..reps)
                .map(|r| {
                    hpv_simulate(&params, &[25.0], &[40], seed0 + r as u64)
                        .unwrap()
                        .incidence
                        .y[0]
                })
                .collect()
        };
        let a = draw(0.05, 10_000);
        let b = draw(0.90, 90_000);

        // Mann-Whitney U via average ranks, normal approximation.
        let mut all: Vec<(u64, usize)> = a
            .iter()
            .map(|&v| (v, 0))
            .chain(b.iter().map(|&v| (v, 1)))
            .collect();
        all.sort_by_key(|&(v, _)| v);
        let mut rank_sum_a = 0.0;
        let mut i = 0;
        while i < all.len() {
            let mut j = i;
            while j < all.len() && all[j].0 == all[i].0 {
                j += 1;
            }
            let avg_rank = (i + 1 + j) as f64 / 2.0;
            for k in i..j {
                if all[k].1 == 0 {
                    rank_sum_a += avg_rank;
                }
            }
            i = j;
        }
        let na = reps as f64;
        let nb = reps as f64;
        let u = rank_sum_a - na * (na + 1.0) / 2.0;
        let mean_u = na * nb / 2.0;
        let sd_u = (na * nb * (na + nb + 1.0) / 12.0).sqrt();
        let zscore = (u - mean_u) / sd_u;
        assert!(zscore.abs() < 4.0, "rank test z = {zscore}");
    }
}
