//! Run configuration: a TOML file selecting a model, a data source, chain
//! settings, the eta grid and the scorer. Every field has a default; the
//! effective configuration (defaults filled in, CLI overrides applied) is
//! echoed next to the outputs of each run for audit.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use smi::{Eta, GaussianHyper, SmiError, TrueGenerative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    /// Biased-data Gaussian model with known truth (closed forms available).
    GaussianBiased,
    /// HPV Poisson/Binomial model.
    Hpv,
    /// The Gaussian two-module family over user-supplied CSV data, with no
    /// assumed truth (sampled path and WAIC scoring only).
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Simulate,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerId {
    /// Closed-form posterior plus exact Monte Carlo elpd (Gaussian only).
    ExactElpd,
    /// WAIC over posterior draws.
    Waic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelId,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Worker threads for sweep rows and replicates; 0 picks the number of
    /// cores.
    pub threads: usize,
    /// Replicate count for `replicate-study`.
    pub replicates: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            model: ModelId::GaussianBiased,
            output_dir: PathBuf::from("out"),
            master_seed: 20200031,
            threads: 0,
            replicates: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSection {
    pub sigma_z: f64,
    pub sigma_y: f64,
    /// `inf` encodes the constant prior on phi.
    pub sigma_phi: f64,
    pub sigma_theta: f64,
    pub sigma_theta_tilde: f64,
    pub phi_star: f64,
    pub theta_star: f64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        GaussianSection {
            sigma_z: 2.0,
            sigma_y: 1.0,
            sigma_phi: f64::INFINITY,
            sigma_theta: 0.5,
            sigma_theta_tilde: 0.5,
            phi_star: 0.0,
            theta_star: 1.0,
        }
    }
}

impl GaussianSection {
    pub fn hyper(&self) -> Result<GaussianHyper, SmiError> {
        GaussianHyper::new(
            self.sigma_z,
            self.sigma_y,
            self.sigma_phi,
            self.sigma_theta,
            self.sigma_theta_tilde,
        )
    }

    pub fn truth(&self) -> TrueGenerative {
        TrueGenerative {
            phi_star: self.phi_star,
            theta_star: self.theta_star,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpvSection {
    /// Prior sd of theta_1 and theta_2.
    pub theta_sd: f64,
    /// Generative parameters for simulation.
    pub theta1_star: f64,
    pub theta2_star: f64,
    pub phi_star: Vec<f64>,
    /// Women-years per population (simulation).
    pub t: Vec<f64>,
    /// Sample sizes per population (simulation).
    pub n: Vec<u64>,
}

impl Default for HpvSection {
    fn default() -> Self {
        HpvSection {
            theta_sd: 10.0,
            theta1_star: -5.0,
            theta2_star: 8.0,
            phi_star: vec![
                0.06, 0.09, 0.12, 0.15, 0.18, 0.21, 0.24, 0.1, 0.13, 0.16, 0.19, 0.22, 0.08,
            ],
            t: vec![1.0e4; 13],
            n: vec![500; 13],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Gaussian module-1 sample size (simulation).
    pub n: usize,
    /// Gaussian module-2 sample size (simulation).
    pub m: usize,
    pub z_csv: Option<PathBuf>,
    pub y_csv: Option<PathBuf>,
    pub hpv_csv: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Simulate,
            n: 25,
            m: 50,
            z_csv: None,
            y_csv: None,
            hpv_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub n1: usize,
    pub n2: usize,
    pub burnin: usize,
    pub thin: usize,
    /// Empty picks per-model defaults.
    pub proposal_scales: Vec<f64>,
    pub tune_rounds: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            n1: 5000,
            n2: 500,
            burnin: 1000,
            thin: 2,
            proposal_scales: Vec::new(),
            tune_rounds: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Number of equally spaced grid points, endpoints included.
    pub grid: usize,
    pub scorer: ScorerId,
    /// WAIC target: module1 | module2 | both | pair-average.
    pub waic_target: String,
    pub waic_draws: usize,
    /// Monte Carlo draws of the exact elpd estimator.
    pub n_mc: usize,
    /// `none` or `ma:<odd width>`.
    pub smoothing: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            grid: 21,
            scorer: ScorerId::ExactElpd,
            waic_target: "pair-average".into(),
            waic_draws: 2000,
            n_mc: 8000,
            smoothing: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub gaussian: GaussianSection,
    pub hpv: HpvSection,
    pub data: DataSection,
    pub chain: ChainSection,
    pub sweep: SweepSection,
}

/// A configuration problem: reported with exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("cannot parse config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Structural validation: exactly one data source, readable paths,
    /// positive counts, a well-formed grid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.replicates == 0 {
            return Err(ConfigError("run.replicates must be >= 1".into()));
        }
        if self.sweep.grid < 2 {
            return Err(ConfigError("sweep.grid needs at least 2 points".into()));
        }
        self.gaussian
            .hyper()
            .map_err(|e| ConfigError(format!("gaussian section: {e}")))?;
        match self.data.source {
            DataSource::Simulate => {
                if self.data.z_csv.is_some() || self.data.y_csv.is_some() || self.data.hpv_csv.is_some()
                {
                    return Err(ConfigError(
                        "data.source = \"simulate\" excludes csv paths; configs declare exactly one data source"
                            .into(),
                    ));
                }
                if self.data.n == 0 || self.data.m == 0 {
                    return Err(ConfigError("data.n and data.m must be >= 1".into()));
                }
                if self.run.model == ModelId::Hpv {
                    let h = &self.hpv;
                    if h.phi_star.is_empty()
                        || h.phi_star.len() != h.t.len()
                        || h.phi_star.len() != h.n.len()
                    {
                        return Err(ConfigError(
                            "hpv.phi_star, hpv.t and hpv.n must share one positive length".into(),
                        ));
                    }
                }
                if self.run.model == ModelId::Custom {
                    return Err(ConfigError(
                        "model = \"custom\" works on user data; set data.source = \"csv\"".into(),
                    ));
                }
            }
            DataSource::Csv => match self.run.model {
                ModelId::GaussianBiased | ModelId::Custom => {
                    let z = self.data.z_csv.as_ref().ok_or_else(|| {
                        ConfigError("data.source = \"csv\" needs data.z_csv".into())
                    })?;
                    let y = self.data.y_csv.as_ref().ok_or_else(|| {
                        ConfigError("data.source = \"csv\" needs data.y_csv".into())
                    })?;
                    if self.data.hpv_csv.is_some() {
                        return Err(ConfigError(
                            "gaussian csv source excludes data.hpv_csv".into(),
                        ));
                    }
                    for p in [z, y] {
                        readable(p)?;
                    }
                }
                ModelId::Hpv => {
                    let p = self.data.hpv_csv.as_ref().ok_or_else(|| {
                        ConfigError("hpv csv source needs data.hpv_csv".into())
                    })?;
                    if self.data.z_csv.is_some() || self.data.y_csv.is_some() {
                        return Err(ConfigError("hpv csv source excludes z_csv/y_csv".into()));
                    }
                    readable(p)?;
                }
            },
        }
        parse_smoothing(&self.sweep.smoothing)?;
        parse_waic_target(&self.sweep.waic_target)?;
        if self.run.model != ModelId::GaussianBiased && self.sweep.scorer == ScorerId::ExactElpd {
            return Err(ConfigError(
                "scorer = \"exact-elpd\" needs the closed-form gaussian-biased model".into(),
            ));
        }
        Ok(())
    }

    pub fn eta_grid(&self) -> Vec<Eta> {
        Eta::grid(self.sweep.grid).expect("validated grid size")
    }

    /// Writes the fully resolved configuration next to the run outputs.
    pub fn write_effective(&self, out_dir: &Path) -> std::io::Result<()> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(out_dir.join("effective_config.toml"), text)
    }
}

fn readable(p: &Path) -> Result<(), ConfigError> {
    std::fs::File::open(p)
        .map(|_| ())
        .map_err(|e| ConfigError(format!("cannot open {}: {e}", p.display())))
}

pub fn parse_smoothing(s: &str) -> Result<smi::Smoothing, ConfigError> {
    if s == "none" {
        return Ok(smi::Smoothing::None);
    }
    if let Some(w) = s.strip_prefix("ma:") {
        let w: usize = w
            .parse()
            .map_err(|_| ConfigError(format!("bad smoothing width in `{s}`")))?;
        if w == 0 || w.is_multiple_of(2) {
            return Err(ConfigError("moving-average width must be odd".into()));
        }
        return Ok(smi::Smoothing::MovingAverage(w));
    }
    Err(ConfigError(format!(
        "unknown smoothing `{s}` (use `none` or `ma:<odd width>`)"
    )))
}

pub fn parse_waic_target(s: &str) -> Result<smi::eval::ScoreTarget, ConfigError> {
    use smi::eval::ScoreTarget::*;
    match s {
        "module1" => Ok(Module1),
        "module2" => Ok(Module2),
        "both" => Ok(Both),
        "pair-average" => Ok(PairAverage),
        other => Err(ConfigError(format!(
            "unknown waic_target `{other}` (module1|module2|both|pair-average)"
        ))),
    }
}
