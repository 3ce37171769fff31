//! Random-walk Metropolis kernel, the two-stage nested sampler for the SMI
//! posterior, an exact discrete-state detailed-balance harness, and chain
//! diagnostics.

mod diagnostics;
mod discrete;
mod kernel;
mod nested;

pub use diagnostics::{diagnostics, Diagnostics};
pub use discrete::{two_stage_kernel_stationarity, DiscreteTwoModule};
pub use kernel::rw_metropolis_chain;
pub use nested::{
    nested_smi_sampler, nested_smi_sampler_with_mode, nested_stage2, stage1_power_samples,
};

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SmiError};

/// Run lengths, proposal scales and seed for a sampler run.
///
/// `proposal_scales` covers the sampled block:
/// - for [`rw_metropolis_chain`] its length is the state dimension;
/// - for [`nested_smi_sampler`] it is `dim_phi + 2 * dim_theta`: the first
///   `dim_phi + dim_theta` entries drive the stage-one `(phi, theta_tilde)`
///   chain, the rest the stage-two theta sub-chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Kept draws of the main chain, after burn-in and thinning.
    pub n1: usize,
    /// Length of each stage-two sub-chain.
    pub n2: usize,
    pub burnin: usize,
    pub thin: usize,
    pub proposal_scales: Vec<f64>,
    pub seed: u64,
    /// Pre-run scale-tuning rounds (0 disables). Tuning pilots are excluded
    /// from kept samples; the kernel itself never adapts.
    #[serde(default)]
    pub tune_rounds: usize,
}

impl ChainConfig {
    pub fn validate(&self, expected_scales: usize) -> Result<()> {
        if self.n1 == 0 {
            return Err(SmiError::Precondition("n1 must be >= 1".into()));
        }
        if self.n2 == 0 {
            return Err(SmiError::Precondition("n2 must be >= 1".into()));
        }
        if self.thin == 0 {
            return Err(SmiError::Precondition("thin must be >= 1".into()));
        }
        if self.proposal_scales.len() != expected_scales {
            return Err(SmiError::DimensionMismatch {
                context: "ChainConfig: proposal_scales",
                expected: expected_scales,
                got: self.proposal_scales.len(),
            });
        }
        if self
            .proposal_scales
            .iter()
            .any(|&s| !(s.is_finite() && s > 0.0))
        {
            return Err(SmiError::Precondition(
                "proposal scales must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// How stage-two sub-chains were initialized and scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// A single random-walk chain (no stage two).
    SingleChain,
    /// Sub-chain `s` starts from the previous kept theta; sequential.
    NestedWarmStart,
    /// Every sub-chain starts from the prior mean; embarrassingly parallel.
    NestedParallel,
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SamplingMode::SingleChain => "single-chain",
            SamplingMode::NestedWarmStart => "nested-warm-start",
            SamplingMode::NestedParallel => "nested-parallel",
        };
        write!(f, "{s}")
    }
}

/// Post burn-in, thinned draws with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    ncols: usize,
    pub seed: u64,
    pub eta: Option<f64>,
    /// Main-chain acceptance rate over post burn-in proposals.
    pub accept_rate: f64,
    /// Mean acceptance rate of stage-two sub-chains, when applicable.
    pub stage2_accept_rate: Option<f64>,
    pub mode: SamplingMode,
    /// Set when the main chain accepted nothing after burn-in.
    pub zero_acceptance: bool,
    /// Number of stage-two sub-chains that accepted nothing.
    pub stage2_zero_accept: usize,
    /// Proposal scales actually used (after optional tuning).
    pub scales: Vec<f64>,
}

impl SampleMatrix {
    pub(crate) fn new(
        names: Vec<String>,
        data: Vec<f64>,
        seed: u64,
        accept_rate: f64,
        mode: SamplingMode,
    ) -> Result<Self> {
        let ncols = names.len();
        if ncols == 0 || data.is_empty() || !data.len().is_multiple_of(ncols) {
            return Err(SmiError::Precondition(
                "sample matrix must be non-empty and rectangular".into(),
            ));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(SmiError::Numerical("sample matrix contains NaN".into()));
        }
        if !(0.0..=1.0).contains(&accept_rate) {
            return Err(SmiError::Numerical(format!(
                "acceptance rate {accept_rate} outside [0, 1]"
            )));
        }
        Ok(SampleMatrix {
            names,
            data,
            ncols,
            seed,
            eta: None,
            accept_rate,
            stage2_accept_rate: None,
            mode,
            zero_acceptance: false,
            stage2_zero_accept: 0,
            scales: Vec::new(),
        })
    }

    /// Builds a matrix from equal-length columns, e.g. for running
    /// [`diagnostics`] on externally produced draws.
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>], seed: u64) -> Result<Self> {
        if columns.len() != names.len() || columns.is_empty() {
            return Err(SmiError::Precondition(
                "from_columns needs one name per column".into(),
            ));
        }
        let nrows = columns[0].len();
        if columns.iter().any(|c| c.len() != nrows) {
            return Err(SmiError::Precondition(
                "from_columns needs equal-length columns".into(),
            ));
        }
        let mut data = Vec::with_capacity(nrows * columns.len());
        for r in 0..nrows {
            for c in columns {
                data.push(c[r]);
            }
        }
        SampleMatrix::new(names, data, seed, 0.0, SamplingMode::SingleChain)
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.ncols..(s + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.ncols).copied()
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.column(j).sum::<f64>() / self.nrows() as f64
    }

    /// Unbiased sample variance of a column.
    pub fn column_variance(&self, j: usize) -> f64 {
        let n = self.nrows() as f64;
        let mean = self.column_mean(j);
        self.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    }

    /// Writes draws as CSV (header of names, one row per draw) plus a sidecar
    /// `<path>.meta.json` with seed, eta, acceptance rates and mode.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for s in 0..self.nrows() {
            w.write_record(self.row(s).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;

        let meta = serde_json::json!({
            "seed": self.seed,
            "eta": self.eta,
            "accept_rate": self.accept_rate,
            "stage2_accept_rate": self.stage2_accept_rate,
            "mode": self.mode,
            "zero_acceptance": self.zero_acceptance,
            "stage2_zero_accept": self.stage2_zero_accept,
            "proposal_scales": self.scales,
            "columns": self.names,
            "rows": self.nrows(),
        });
        let meta_path = sidecar_path(path);
        let mut f = std::fs::File::create(meta_path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

pub(crate) fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut p = csv_path.to_path_buf();
    p.set_extension("meta.json");
    p
}

impl From<serde_json::Error> for SmiError {
    fn from(e: serde_json::Error) -> Self {
        SmiError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_serialization_writes_draws_and_sidecar_metadata() {
        let mut m = SampleMatrix::from_columns(
            vec!["phi".into(), "theta".into()],
            &[vec![0.25, -1.5, 3.0], vec![1.0, 2.0, 0.125]],
            42,
        )
        .unwrap();
        m.eta = Some(0.3);
        m.accept_rate = 0.44;
        m.mode = SamplingMode::NestedWarmStart;
        m.scales = vec![0.7, 0.9];

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        m.write_csv(&path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("phi,theta"));
        assert_eq!(lines.next(), Some("0.25,1"));
        assert_eq!(text.lines().count(), 4);

        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("samples.meta.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta["seed"], 42);
        assert_eq!(meta["eta"], 0.3);
        assert_eq!(meta["mode"], "nested-warm-start");
        assert_eq!(meta["rows"], 3);
    }

    #[test]
    fn nan_draws_and_bad_rates_are_rejected() {
        assert!(SampleMatrix::from_columns(
            vec!["x".into()],
            &[vec![0.0, f64::NAN]],
            0
        )
        .is_err());
        assert!(SampleMatrix::new(
            vec!["x".into()],
            vec![1.0],
            0,
            1.5,
            SamplingMode::SingleChain
        )
        .is_err());
    }
}
