//! The four batch commands: simulate, sweep, replicate-study, report.

use std::path::{Path, PathBuf};

use smi::eval::{
    eta_sweep, EtaSweepTable, GaussianExactRunner, GaussianWaicRunner, NestedWaicRunner,
};
use smi::rng::derive_seed;
use smi::zoo::{hpv_model, hpv_simulate, HpvData, HpvParams, HpvPriorSpec};
use smi::{
    select_eta, simulate_dataset, ChainConfig, GaussianSuffStats, SamplingMode, SmiError,
};

use crate::config::{parse_smoothing, parse_waic_target, DataSource, ModelId, RunConfig, ScorerId};
use crate::study::{self, StudySettings};
use crate::svg;
use crate::CliError;

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.run.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    cfg.write_effective(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot write effective config: {e}")))?;
    Ok(dir)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn write_value_csv(path: &Path, values: &[f64]) -> Result<(), SmiError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_value_csv(path: &Path) -> Result<Vec<f64>, SmiError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("value") {
        return Err(SmiError::DataValidation(format!(
            "{}: expected a `value` column header",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = rec
            .get(0)
            .ok_or_else(|| SmiError::DataValidation("empty record".into()))?;
        out.push(field.trim().parse::<f64>().map_err(|e| {
            SmiError::DataValidation(format!("{}: bad value `{field}`: {e}", path.display()))
        })?);
    }
    if out.is_empty() {
        return Err(SmiError::DataValidation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(out)
}

pub enum Dataset {
    Gaussian { z: Vec<f64>, y: Vec<f64> },
    Hpv(HpvData),
}

/// Builds the dataset a run works on: forward simulation (with a seed derived
/// from the master seed) or user CSVs.
pub fn acquire_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let seed = derive_seed(cfg.run.master_seed, "dataset", 0);
    match (cfg.run.model, cfg.data.source) {
        (ModelId::Hpv, DataSource::Simulate) => {
            let params = HpvParams::new(
                cfg.hpv.theta1_star,
                cfg.hpv.theta2_star,
                cfg.hpv.phi_star.clone(),
            )
            .map_err(runtime)?;
            let data = hpv_simulate(&params, &cfg.hpv.t, &cfg.hpv.n, seed).map_err(runtime)?;
            Ok(Dataset::Hpv(data))
        }
        (ModelId::Hpv, DataSource::Csv) => {
            let path = cfg.data.hpv_csv.as_ref().expect("validated");
            Ok(Dataset::Hpv(HpvData::from_csv_path(path).map_err(validation)?))
        }
        (_, DataSource::Simulate) => {
            let hyper = cfg.gaussian.hyper().map_err(validation)?;
            let (z, y, _) =
                simulate_dataset(&cfg.gaussian.truth(), &hyper, cfg.data.n, cfg.data.m, seed)
                    .map_err(runtime)?;
            Ok(Dataset::Gaussian { z, y })
        }
        (_, DataSource::Csv) => {
            let z = read_value_csv(cfg.data.z_csv.as_ref().expect("validated"))
                .map_err(validation)?;
            let y = read_value_csv(cfg.data.y_csv.as_ref().expect("validated"))
                .map_err(validation)?;
            Ok(Dataset::Gaussian { z, y })
        }
    }
}

fn validation(e: SmiError) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: SmiError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_dataset(cfg: &RunConfig, data: &Dataset, dir: &Path) -> Result<(), CliError> {
    match data {
        Dataset::Gaussian { z, y } => {
            write_value_csv(&dir.join("z.csv"), z).map_err(runtime)?;
            write_value_csv(&dir.join("y.csv"), y).map_err(runtime)?;
        }
        Dataset::Hpv(h) => {
            h.write_csv(&dir.join("hpv.csv")).map_err(runtime)?;
        }
    }
    let manifest = match cfg.run.model {
        ModelId::Hpv => serde_json::json!({
            "model": cfg.run.model,
            "seed": derive_seed(cfg.run.master_seed, "dataset", 0),
            "source": cfg.data.source,
            "truth": {
                "theta1_star": cfg.hpv.theta1_star,
                "theta2_star": cfg.hpv.theta2_star,
                "phi_star": cfg.hpv.phi_star,
            },
            "t": cfg.hpv.t,
            "n": cfg.hpv.n,
            "rng": "chacha20",
        }),
        _ => serde_json::json!({
            "model": cfg.run.model,
            "seed": derive_seed(cfg.run.master_seed, "dataset", 0),
            "source": cfg.data.source,
            "truth": {
                "phi_star": cfg.gaussian.phi_star,
                "theta_star": cfg.gaussian.theta_star,
            },
            "hyper": {
                "sigma_z": cfg.gaussian.sigma_z,
                "sigma_y": cfg.gaussian.sigma_y,
                "sigma_phi": if cfg.gaussian.sigma_phi.is_infinite() {
                    serde_json::Value::String("inf".into())
                } else {
                    serde_json::json!(cfg.gaussian.sigma_phi)
                },
                "sigma_theta": cfg.gaussian.sigma_theta,
                "sigma_theta_tilde": cfg.gaussian.sigma_theta_tilde,
            },
            "n": cfg.data.n,
            "m": cfg.data.m,
            "rng": "chacha20",
        }),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

/// `smi simulate`: writes dataset CSV(s) plus a manifest with seed, truth and
/// hyperparameters.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.data.source != DataSource::Simulate {
        return Err(CliError::Validation(
            "simulate needs data.source = \"simulate\"".into(),
        ));
    }
    let dir = ensure_out_dir(cfg)?;
    let data = acquire_data(cfg)?;
    write_dataset(cfg, &data, &dir)?;
    println!("wrote dataset under {}", dir.display());
    Ok(())
}

/// Per-model default proposal scales for the nested sampler, used when the
/// config leaves `chain.proposal_scales` empty.
pub fn default_scales(model: ModelId, dim_phi: usize) -> Vec<f64> {
    match model {
        // (phi, theta_tilde | theta): posterior scales of the biased-data
        // model sit near 0.3-0.5.
        ModelId::GaussianBiased | ModelId::Custom => vec![0.7, 0.9, 0.35],
        ModelId::Hpv => {
            // Stage one: logit-prevalences then (theta1, theta2); stage two:
            // (theta1, theta2). Tuning refines the common factor.
            let mut s = vec![0.08; dim_phi];
            s.extend_from_slice(&[0.012, 0.07]);
            s.extend_from_slice(&[0.02, 0.12]);
            s
        }
    }
}

pub fn chain_config(cfg: &RunConfig, dim_phi: usize, seed: u64) -> ChainConfig {
    let scales = if cfg.chain.proposal_scales.is_empty() {
        default_scales(cfg.run.model, dim_phi)
    } else {
        cfg.chain.proposal_scales.clone()
    };
    ChainConfig {
        n1: cfg.chain.n1,
        n2: cfg.chain.n2,
        burnin: cfg.chain.burnin,
        thin: cfg.chain.thin,
        proposal_scales: scales,
        seed,
        tune_rounds: cfg.chain.tune_rounds,
    }
}

fn run_sweep_table(cfg: &RunConfig, data: &Dataset) -> Result<EtaSweepTable, CliError> {
    let grid = cfg.eta_grid();
    let master = cfg.run.master_seed;
    let target = parse_waic_target(&cfg.sweep.waic_target)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    match (data, cfg.sweep.scorer) {
        (Dataset::Gaussian { z, y }, ScorerId::ExactElpd) => {
            let stats = GaussianSuffStats::from_data(z, y).map_err(validation)?;
            let runner = GaussianExactRunner {
                stats,
                hyper: cfg.gaussian.hyper().map_err(validation)?,
                truth: cfg.gaussian.truth(),
                n_mc: cfg.sweep.n_mc,
                elpd_seed: derive_seed(master, "elpd-common", 0),
            };
            with_pool(cfg.run.threads, || eta_sweep(&runner, &grid, master, true))?
                .map_err(runtime)
        }
        (Dataset::Gaussian { z, y }, ScorerId::Waic) => {
            let runner = GaussianWaicRunner {
                z,
                y,
                hyper: cfg.gaussian.hyper().map_err(validation)?,
                n_draws: cfg.sweep.waic_draws,
                target,
                draw_seed: derive_seed(master, "waic-draws", 0),
            };
            with_pool(cfg.run.threads, || eta_sweep(&runner, &grid, master, true))?
                .map_err(runtime)
        }
        (Dataset::Hpv(h), ScorerId::Waic) => {
            let model =
                hpv_model(h, HpvPriorSpec { theta_sd: cfg.hpv.theta_sd }).map_err(validation)?;
            let chain = chain_config(cfg, h.n_populations(), master);
            let runner = NestedWaicRunner {
                model: &model,
                z: &h.prevalence,
                y: &h.incidence,
                cfg: chain,
                target,
                mode: SamplingMode::NestedWarmStart,
            };
            with_pool(cfg.run.threads, || eta_sweep(&runner, &grid, master, true))?
                .map_err(runtime)
        }
        (Dataset::Hpv(_), ScorerId::ExactElpd) => Err(CliError::Validation(
            "exact-elpd scoring needs the gaussian-biased model".into(),
        )),
    }
}

/// `smi sweep`: runs the eta sweep, writes `sweep.csv` and `sweep.svg`.
/// Returns true when every row failed (exit code 3).
pub fn cmd_sweep(cfg: &RunConfig) -> Result<bool, CliError> {
    let dir = ensure_out_dir(cfg)?;
    let data = acquire_data(cfg)?;
    if cfg.data.source == DataSource::Simulate {
        write_dataset(cfg, &data, &dir)?;
    }
    let table = run_sweep_table(cfg, &data)?;
    table.write_csv(&dir.join("sweep.csv")).map_err(runtime)?;

    let ok_rows: Vec<_> = table.rows().iter().filter(|r| r.is_ok()).collect();
    if ok_rows.is_empty() {
        eprintln!("every sweep row failed; see sweep.csv status column");
        return Ok(true);
    }
    let smoothing = parse_smoothing(&cfg.sweep.smoothing)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (star, _) = select_eta(&table, smoothing).map_err(runtime)?;
    let xs: Vec<f64> = ok_rows.iter().map(|r| r.eta).collect();
    let ys: Vec<f64> = ok_rows.iter().map(|r| -r.elpd_hat).collect();
    let band: Vec<f64> = ok_rows.iter().map(|r| r.se).collect();
    svg::line_plot(
        &dir.join("sweep.svg"),
        "negative estimated elpd over the influence grid",
        "eta",
        "-elpd",
        &xs,
        &ys,
        Some(&band),
        Some((star.value(), "eta*")),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "sweep finished: {} rows ({} failed), eta* = {}",
        table.rows().len(),
        table.n_failed(),
        star.value()
    );
    Ok(false)
}

/// `smi replicate-study`: the full synthetic study over `run.replicates`
/// datasets through the closed-form path.
pub fn cmd_replicate_study(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.run.model != ModelId::GaussianBiased {
        return Err(CliError::Validation(
            "replicate-study runs the closed-form gaussian-biased model only".into(),
        ));
    }
    if cfg.data.source != DataSource::Simulate {
        return Err(CliError::Validation(
            "replicate-study simulates its own datasets; set data.source = \"simulate\"".into(),
        ));
    }
    let dir = ensure_out_dir(cfg)?;
    let settings = StudySettings {
        hyper: cfg.gaussian.hyper().map_err(validation)?,
        truth: cfg.gaussian.truth(),
        n: cfg.data.n,
        m: cfg.data.m,
        replicates: cfg.run.replicates,
        grid: cfg.eta_grid(),
        n_mc: cfg.sweep.n_mc,
        master_seed: cfg.run.master_seed,
        smoothing: parse_smoothing(&cfg.sweep.smoothing)
            .map_err(|e| CliError::Validation(e.to_string()))?,
    };
    let outcome = with_pool(cfg.run.threads, || study::run_study(&settings))?
        .map_err(runtime)?;

    study::write_rows_csv(&outcome.rows, &dir.join("replicates.csv")).map_err(runtime)?;
    study::write_summaries_csv(&outcome.summaries, &dir.join("replicate_summary.csv"))
        .map_err(runtime)?;
    write_report_artifacts(&dir, &outcome.report)?;
    write_se_difference_histograms(&dir, &outcome.summaries)?;
    if outcome.report.n_failed > 0 {
        eprintln!(
            "{} of {} replicates failed and were excluded",
            outcome.report.n_failed, cfg.run.replicates
        );
    }
    println!(
        "study finished: {} replicates, interior eta* fraction {:.3}",
        outcome.report.n_replicates, outcome.report.frac_eta_star_interior
    );
    Ok(())
}

/// `smi report`: recompute the aggregate report from the per-replicate CSVs
/// emitted by `replicate-study`.
pub fn cmd_report(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run.output_dir.clone();
    let rows = study::read_rows_csv(&dir.join("replicates.csv")).map_err(runtime)?;
    let summaries =
        study::read_summaries_csv(&dir.join("replicate_summary.csv")).map_err(runtime)?;
    let grid = study::grid_from_rows(&rows);
    let n_failed = cfg.run.replicates.saturating_sub(summaries.len());
    let report = study::aggregate(&grid, &rows, &summaries, n_failed);
    write_report_artifacts(&dir, &report)?;
    write_se_difference_histograms(&dir, &summaries)?;
    println!("report rebuilt from {} replicates", report.n_replicates);
    Ok(())
}

fn write_report_artifacts(dir: &Path, report: &study::StudyReport) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Runtime(e.to_string());

    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("report.json"), text + "\n").map_err(io_err)?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_record(["eta", "avg_neg_elpd", "mse_phi", "mse_theta", "mse_theta_tilde"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for k in 0..report.grid.len() {
        w.write_record([
            report.grid[k].to_string(),
            report.avg_neg_elpd[k].to_string(),
            report.mse_phi[k].to_string(),
            report.mse_theta[k].to_string(),
            report.mse_theta_tilde[k].to_string(),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(io_err)?;

    svg::line_plot(
        &dir.join("neg_elpd_curve.svg"),
        "average negative elpd over the influence grid",
        "eta",
        "average -elpd",
        &report.grid,
        &report.avg_neg_elpd,
        None,
        None,
    )
    .map_err(io_err)?;
    svg::line_plot(
        &dir.join("mse_phi_curve.svg"),
        "average squared error of the shared parameter",
        "eta",
        "MSE(phi)",
        &report.grid,
        &report.mse_phi,
        None,
        None,
    )
    .map_err(io_err)?;
    svg::line_plot(
        &dir.join("mse_theta_curve.svg"),
        "average squared error of the bias parameter",
        "eta",
        "MSE(theta)",
        &report.grid,
        &report.mse_theta,
        None,
        None,
    )
    .map_err(io_err)?;
    svg::line_plot(
        &dir.join("mse_theta_tilde_curve.svg"),
        "average squared error of the auxiliary copy",
        "eta",
        "MSE(theta tilde)",
        &report.grid,
        &report.mse_theta_tilde,
        None,
        None,
    )
    .map_err(io_err)?;

    let counts: Vec<f64> = report.eta_star_counts.iter().map(|&c| c as f64).collect();
    svg::histogram(
        &dir.join("eta_star_hist.svg"),
        "selected eta across replicates",
        "eta*",
        &report.grid,
        &counts,
    )
    .map_err(io_err)?;
    Ok(())
}

/// Histograms of per-replicate SE differences, drawn from the summaries.
pub fn write_se_difference_histograms(
    dir: &Path,
    summaries: &[study::ReplicateSummary],
) -> Result<(), CliError> {
    let smi_minus_cut: Vec<f64> = summaries
        .iter()
        .map(|s| s.se_phi_star - s.se_phi_cut)
        .collect();
    let cut_minus_bayes: Vec<f64> = summaries
        .iter()
        .map(|s| s.se_phi_cut - s.se_phi_bayes)
        .collect();
    svg::histogram_of(
        &dir.join("se_diff_smi_cut.svg"),
        "SE(phi) difference: selected eta minus cut",
        "SE difference",
        &smi_minus_cut,
        30,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    svg::histogram_of(
        &dir.join("se_diff_cut_bayes.svg"),
        "SE(phi) difference: cut minus full Bayes",
        "SE difference",
        &cut_minus_bayes,
        30,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}
