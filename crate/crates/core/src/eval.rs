//! Predictive evaluation: WAIC from sample log-likelihood matrices, eta-grid
//! sweeps, and selection of the influence parameter by estimated elpd.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Result, SmiError};
use crate::gaussian::{
    exact_elpd, predictive_from_posterior, smi_posterior_moments, BiasedDataModel, GaussianHyper,
    GaussianSuffStats, TrueGenerative,
};
use crate::mcmc::{diagnostics, nested_smi_sampler_with_mode, ChainConfig, SamplingMode};
use crate::model::{Eta, PointwiseLogLik};
use crate::rng::{derive_seed, eta_seed_index, SmiRng};
use rand::SeedableRng;

/// Which observations a log-likelihood matrix scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreTarget {
    /// Module-1 observations only (the Z block).
    Module1,
    /// Module-2 observations only (the Y block).
    Module2,
    /// All observations of both modules; the total weights each point once.
    Both,
    /// Per-point average of each module, summed: estimates the predictive
    /// density of one new observation *pair*, comparable with the exact
    /// pair elpd of the Gaussian oracle.
    PairAverage,
}

impl std::fmt::Display for ScoreTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScoreTarget::Module1 => "module1",
            ScoreTarget::Module2 => "module2",
            ScoreTarget::Both => "both",
            ScoreTarget::PairAverage => "pair-average",
        };
        write!(f, "{s}")
    }
}

/// S x n matrix of pointwise log likelihoods: entry `(s, j)` is
/// `log p(point_j | params_s)`.
#[derive(Debug, Clone)]
pub struct LogLikMatrix {
    values: Vec<f64>,
    n_draws: usize,
    n_points: usize,
    /// Which module's observations are scored.
    pub target_label: String,
    /// Number of leading points belonging to module 1 (used by
    /// [`ScoreTarget::PairAverage`] scoring).
    pub module1_points: usize,
}

impl LogLikMatrix {
    pub fn new(
        values: Vec<f64>,
        n_draws: usize,
        n_points: usize,
        target_label: String,
        module1_points: usize,
    ) -> Result<Self> {
        if n_draws < 2 {
            return Err(SmiError::Precondition(format!(
                "log-likelihood matrix needs at least 2 draws, got {n_draws}"
            )));
        }
        if values.len() != n_draws * n_points || n_points == 0 {
            return Err(SmiError::Precondition(
                "log-likelihood matrix shape mismatch".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(SmiError::Numerical(
                "log-likelihood matrix contains NaN or +inf".into(),
            ));
        }
        Ok(LogLikMatrix {
            values,
            n_draws,
            n_points,
            target_label,
            module1_points,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    fn entry(&self, s: usize, j: usize) -> f64 {
        self.values[s * self.n_points + j]
    }
}

/// Where parameter blocks live inside a sample matrix's columns.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub phi: std::ops::Range<usize>,
    pub theta: std::ops::Range<usize>,
}

impl ParamLayout {
    /// Layout of [`crate::mcmc::nested_smi_sampler`] output:
    /// `(phi, theta_tilde, theta)`.
    pub fn nested(dim_phi: usize, dim_theta: usize) -> Self {
        ParamLayout {
            phi: 0..dim_phi,
            theta: dim_phi + dim_theta..dim_phi + 2 * dim_theta,
        }
    }

    /// Layout of closed-form `(phi, theta, theta_tilde)` posterior draws.
    pub fn phi_theta_first(dim_phi: usize, dim_theta: usize) -> Self {
        ParamLayout {
            phi: 0..dim_phi,
            theta: dim_phi..dim_phi + dim_theta,
        }
    }
}

/// Builds the pointwise log-likelihood matrix for `target` from parameter
/// draws stored row-major in `draws` (`ncols` values per draw).
pub fn build_loglik_matrix<M>(
    model: &M,
    draws: &[f64],
    ncols: usize,
    layout: &ParamLayout,
    z: &M::ZData,
    y: &M::YData,
    target: ScoreTarget,
) -> Result<LogLikMatrix>
where
    M: PointwiseLogLik + ?Sized,
{
    if ncols == 0 || !draws.len().is_multiple_of(ncols) {
        return Err(SmiError::Precondition(
            "draws buffer is not rectangular".into(),
        ));
    }
    let s = draws.len() / ncols;
    let nz = model.n_z_points(z);
    let ny = model.n_y_points(y);
    let (count_z, count_y) = match target {
        ScoreTarget::Module1 => (nz, 0),
        ScoreTarget::Module2 => (0, ny),
        ScoreTarget::Both | ScoreTarget::PairAverage => (nz, ny),
    };
    let n_points = count_z + count_y;
    let mut values = Vec::with_capacity(s * n_points);
    for row in draws.chunks_exact(ncols) {
        let phi = &row[layout.phi.clone()];
        let theta = &row[layout.theta.clone()];
        for j in 0..count_z {
            values.push(model.log_z_lik_point(phi, z, j));
        }
        for j in 0..count_y {
            values.push(model.log_y_lik_point(phi, theta, y, j));
        }
    }
    LogLikMatrix::new(values, s, n_points, target.to_string(), count_z)
}

/// WAIC decomposition: `elpd_waic = lppd - p_waic`, with the variance-form
/// penalty and the conventional standard error over pointwise contributions.
#[derive(Debug, Clone)]
pub struct WaicResult {
    pub elpd_waic: f64,
    pub p_waic: f64,
    pub se: f64,
    /// Pointwise `lppd_j - p_j` contributions.
    pub pointwise: Vec<f64>,
    /// Points with penalty above 0.4, conventionally flagged as unreliable.
    pub n_flagged: usize,
}

/// Computes WAIC from a log-likelihood matrix. `lppd_j` uses a max-shifted
/// log-sum-exp, so columns with huge spread stay finite.
pub fn waic(ll: &LogLikMatrix) -> Result<WaicResult> {
    let s = ll.n_draws();
    let n = ll.n_points();
    let mut pointwise = Vec::with_capacity(n);
    let mut p_total = 0.0;
    let mut n_flagged = 0usize;
    for j in 0..n {
        let mut max = f64::NEG_INFINITY;
        for i in 0..s {
            max = max.max(ll.entry(i, j));
        }
        let lppd = if max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let sum_exp: f64 = (0..s).map(|i| (ll.entry(i, j) - max).exp()).sum();
            max + (sum_exp / s as f64).ln()
        };
        let mean: f64 = (0..s).map(|i| ll.entry(i, j)).sum::<f64>() / s as f64;
        let var: f64 = (0..s)
            .map(|i| {
                let d = ll.entry(i, j) - mean;
                d * d
            })
            .sum::<f64>()
            / (s - 1) as f64;
        if var > 0.4 {
            n_flagged += 1;
        }
        p_total += var;
        pointwise.push(lppd - var);
    }
    let elpd: f64 = pointwise.iter().sum();
    let se = if n > 1 {
        let mean = elpd / n as f64;
        let var_j = pointwise
            .iter()
            .map(|c| (c - mean) * (c - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        (n as f64 * var_j).sqrt()
    } else {
        0.0
    };
    Ok(WaicResult {
        elpd_waic: elpd,
        p_waic: p_total,
        se,
        pointwise,
        n_flagged,
    })
}

/// WAIC-based estimate of the elpd of one new observation pair: per-point
/// averages of the two modules, summed. Standard errors propagate from the
/// pointwise contributions of each module.
pub fn waic_pair_average(ll: &LogLikMatrix) -> Result<(f64, f64)> {
    let full = waic(ll)?;
    let nz = ll.module1_points;
    let ny = ll.n_points() - nz;
    if nz == 0 || ny == 0 {
        return Err(SmiError::Precondition(
            "pair-average scoring needs points from both modules".into(),
        ));
    }
    let (z_part, y_part) = full.pointwise.split_at(nz);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sem2 = |v: &[f64]| {
        if v.len() < 2 {
            return 0.0;
        }
        let m = mean(v);
        v.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64
    };
    let estimate = mean(z_part) + mean(y_part);
    let se = (sem2(z_part) + sem2(y_part)).sqrt();
    Ok((estimate, se))
}

/// Which estimator produced a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    Waic,
    Exact,
    /// Reserved tag; leave-one-out is not implemented.
    Loo,
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorTag::Waic => "waic",
            EstimatorTag::Exact => "exact",
            EstimatorTag::Loo => "loo",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// One row of an eta sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eta: f64,
    pub elpd_hat: f64,
    pub se: f64,
    pub estimator: EstimatorTag,
    pub ess_min: f64,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, RowStatus::Ok)
    }
}

/// Sweep results over a strictly increasing eta grid containing 0 and 1.
#[derive(Debug, Clone)]
pub struct EtaSweepTable {
    rows: Vec<SweepRow>,
}

impl EtaSweepTable {
    pub fn new(rows: Vec<SweepRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(SmiError::Precondition("empty sweep table".into()));
        }
        for w in rows.windows(2) {
            if !(w[0].eta < w[1].eta) {
                return Err(SmiError::Precondition(
                    "sweep grid must be strictly increasing".into(),
                ));
            }
        }
        let first = rows.first().unwrap().eta;
        let last = rows.last().unwrap().eta;
        if first != 0.0 || last != 1.0 {
            return Err(SmiError::Precondition(format!(
                "sweep grid must contain both endpoints 0 and 1, spans [{first}, {last}]"
            )));
        }
        Ok(EtaSweepTable { rows })
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    /// CSV with columns `eta,elpd_hat,se,estimator,ess_min,status`; numeric
    /// fields of failed rows stay empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["eta", "elpd_hat", "se", "estimator", "ess_min", "status"])?;
        for r in &self.rows {
            let (elpd, se, ess, status) = match &r.status {
                RowStatus::Ok => (
                    r.elpd_hat.to_string(),
                    r.se.to_string(),
                    r.ess_min.to_string(),
                    "ok".to_string(),
                ),
                RowStatus::Failed(msg) => (
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {msg}"),
                ),
            };
            w.write_record([
                r.eta.to_string(),
                elpd,
                se,
                r.estimator.to_string(),
                ess,
                status,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scored quantities of one sweep row.
#[derive(Debug, Clone, Copy)]
pub struct RowScore {
    pub elpd_hat: f64,
    pub se: f64,
    pub estimator: EstimatorTag,
    pub ess_min: f64,
}

/// Scores one sweep row at a given eta. Implementations must be pure given
/// `(eta, seed)` so rows can run concurrently and reproducibly.
pub trait EtaRowRunner: Sync {
    fn run(&self, eta: Eta, seed: u64) -> Result<RowScore>;
}

/// Runs the runner over the grid. Per-row seeds derive from the master seed
/// and the eta value itself (never the grid position), so permuting the input
/// grid changes nothing. Failed rows are recorded, not fatal.
pub fn eta_sweep<R: EtaRowRunner>(
    runner: &R,
    grid: &[Eta],
    master_seed: u64,
    parallel: bool,
) -> Result<EtaSweepTable> {
    let mut etas: Vec<f64> = grid.iter().map(|e| e.value()).collect();
    etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    etas.dedup();
    if etas.first() != Some(&0.0) || etas.last() != Some(&1.0) {
        return Err(SmiError::Precondition(
            "eta grid must contain both endpoints 0 and 1".into(),
        ));
    }

    let run_one = |&eta_val: &f64| -> SweepRow {
        let eta = Eta::new(eta_val).expect("grid values validated");
        let seed = derive_seed(master_seed, "eta-row", eta_seed_index(eta_val));
        match runner.run(eta, seed) {
            Ok(score) => SweepRow {
                eta: eta_val,
                elpd_hat: score.elpd_hat,
                se: score.se,
                estimator: score.estimator,
                ess_min: score.ess_min,
                status: RowStatus::Ok,
            },
            Err(e) => SweepRow {
                eta: eta_val,
                elpd_hat: f64::NAN,
                se: f64::NAN,
                estimator: EstimatorTag::Waic,
                ess_min: f64::NAN,
                status: RowStatus::Failed(e.to_string()),
            },
        }
    };

    let rows: Vec<SweepRow> = if parallel {
        etas.par_iter().map(run_one).collect()
    } else {
        etas.iter().map(run_one).collect()
    };
    EtaSweepTable::new(rows)
}

/// Sweep rows by nested MCMC plus WAIC scoring, for any pointwise model.
pub struct NestedWaicRunner<'a, M: PointwiseLogLik + Sync + ?Sized>
where
    M::ZData: Sync,
    M::YData: Sync,
{
    pub model: &'a M,
    pub z: &'a M::ZData,
    pub y: &'a M::YData,
    pub cfg: ChainConfig,
    pub target: ScoreTarget,
    pub mode: SamplingMode,
}

impl<M: PointwiseLogLik + Sync + ?Sized> EtaRowRunner for NestedWaicRunner<'_, M>
where
    M::ZData: Sync,
    M::YData: Sync,
{
    fn run(&self, eta: Eta, seed: u64) -> Result<RowScore> {
        let cfg = ChainConfig {
            seed,
            ..self.cfg.clone()
        };
        let samples =
            nested_smi_sampler_with_mode(self.model, self.z, self.y, eta, &cfg, self.mode)?;
        let layout = ParamLayout::nested(self.model.dim_phi(), self.model.dim_theta());
        let draws: Vec<f64> = (0..samples.nrows())
            .flat_map(|s| samples.row(s).to_vec())
            .collect();
        let ll = build_loglik_matrix(
            self.model,
            &draws,
            samples.ncols(),
            &layout,
            self.z,
            self.y,
            self.target,
        )?;
        let ess_min = diagnostics(&samples)?.min_ess();
        let (elpd_hat, se) = match self.target {
            ScoreTarget::PairAverage => waic_pair_average(&ll)?,
            _ => {
                let w = waic(&ll)?;
                (w.elpd_waic, w.se)
            }
        };
        Ok(RowScore {
            elpd_hat,
            se,
            estimator: EstimatorTag::Waic,
            ess_min,
        })
    }
}

/// Sweep rows from the Gaussian closed form scored by exact Monte Carlo elpd.
///
/// The p* draws use one stream shared across every row (common random
/// numbers): the truth does not depend on eta, and sharing draws makes the
/// elpd curve smooth in eta. Rows therefore ignore the per-row seed.
pub struct GaussianExactRunner {
    pub stats: GaussianSuffStats,
    pub hyper: GaussianHyper,
    pub truth: TrueGenerative,
    pub n_mc: usize,
    /// Seed of the shared p* draw stream.
    pub elpd_seed: u64,
}

impl EtaRowRunner for GaussianExactRunner {
    fn run(&self, eta: Eta, _seed: u64) -> Result<RowScore> {
        let post = smi_posterior_moments(&self.stats, &self.hyper, eta)?;
        let pred = predictive_from_posterior(&post, &self.hyper)?;
        let (elpd, se) = exact_elpd(&pred, &self.truth, &self.hyper, self.n_mc, self.elpd_seed)?;
        Ok(RowScore {
            elpd_hat: elpd,
            se,
            estimator: EstimatorTag::Exact,
            ess_min: self.n_mc as f64,
        })
    }
}

/// Sweep rows from the Gaussian closed form scored by WAIC over iid
/// posterior draws.
///
/// Draws are `mu(eta) + L(eta) g` with one block of standard normals `g`
/// shared across rows (common random numbers), so the WAIC curve varies in
/// eta only through the posterior, not through fresh noise.
pub struct GaussianWaicRunner<'a> {
    pub z: &'a [f64],
    pub y: &'a [f64],
    pub hyper: GaussianHyper,
    pub n_draws: usize,
    pub target: ScoreTarget,
    /// Seed of the shared standard-normal block.
    pub draw_seed: u64,
}

impl EtaRowRunner for GaussianWaicRunner<'_> {
    fn run(&self, eta: Eta, _seed: u64) -> Result<RowScore> {
        let stats = GaussianSuffStats::from_data(self.z, self.y)?;
        let post = smi_posterior_moments(&stats, &self.hyper, eta)?;
        let mut rng = SmiRng::seed_from_u64(self.draw_seed);
        let mut draws = Vec::with_capacity(3 * self.n_draws);
        post.sample_into(&mut rng, self.n_draws, &mut draws)?;
        let model = BiasedDataModel::new(self.hyper);
        let layout = ParamLayout::phi_theta_first(1, 1);
        let ll = build_loglik_matrix(&model, &draws, 3, &layout, self.z, self.y, self.target)?;
        let (elpd_hat, se) = match self.target {
            ScoreTarget::PairAverage => waic_pair_average(&ll)?,
            _ => {
                let w = waic(&ll)?;
                (w.elpd_waic, w.se)
            }
        };
        Ok(RowScore {
            elpd_hat,
            se,
            estimator: EstimatorTag::Waic,
            ess_min: self.n_draws as f64,
        })
    }
}

/// Optional smoothing applied before selecting eta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    None,
    /// Centered moving average of the given (odd) width; windows shrink at
    /// the edges.
    MovingAverage(usize),
}

/// Picks the eta maximizing the (optionally smoothed) elpd estimate. Failed
/// rows are skipped; ties break toward the larger eta. Returns the selected
/// eta and the smoothed curve aligned with the table rows (NaN at failed
/// rows).
pub fn select_eta(table: &EtaSweepTable, smoothing: Smoothing) -> Result<(Eta, Vec<f64>)> {
    let ok: Vec<(usize, f64, f64)> = table
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_ok())
        .map(|(i, r)| (i, r.eta, r.elpd_hat))
        .collect();
    if ok.is_empty() {
        return Err(SmiError::Selection(
            "every sweep row failed; nothing to select from".into(),
        ));
    }
    let smoothed_ok: Vec<f64> = match smoothing {
        Smoothing::None => ok.iter().map(|&(_, _, v)| v).collect(),
        Smoothing::MovingAverage(w) => {
            if w == 0 || w % 2 == 0 {
                return Err(SmiError::Precondition(format!(
                    "moving-average width must be odd and positive, got {w}"
                )));
            }
            let half = w / 2;
            (0..ok.len())
                .map(|i| {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half).min(ok.len() - 1);
                    ok[lo..=hi].iter().map(|&(_, _, v)| v).sum::<f64>()
                        / (hi - lo + 1) as f64
                })
                .collect()
        }
    };

    let mut best = 0usize;
    for i in 1..smoothed_ok.len() {
        if smoothed_ok[i] >= smoothed_ok[best] {
            best = i;
        }
    }
    let mut curve = vec![f64::NAN; table.rows().len()];
    for (k, &(row_idx, _, _)) in ok.iter().enumerate() {
        curve[row_idx] = smoothed_ok[k];
    }
    Ok((Eta::new(ok[best].1)?, curve))
}
