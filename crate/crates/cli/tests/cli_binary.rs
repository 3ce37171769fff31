//! End-to-end checks of the `smi` binary: exit codes and artifact shapes.

use std::path::Path;
use std::process::Command;

fn smi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smi"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn missing_config_exits_with_validation_code() {
    let out = smi()
        .args(["simulate", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation error"));
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[run]\nmodel = \"no-such-model\"\n");
    let out = smi()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn conflicting_data_sources_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("conflict.toml");
    write(
        &cfg,
        "[data]\nsource = \"simulate\"\nz_csv = \"somewhere.csv\"\n",
    );
    let out = smi()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_the_contracted_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write(&cfg, "[data]\nn = 25\nm = 50\n");
    let out_dir = dir.path().join("out");
    let out = smi()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let z = std::fs::read_to_string(out_dir.join("z.csv")).unwrap();
    let y = std::fs::read_to_string(out_dir.join("y.csv")).unwrap();
    assert_eq!(z.lines().count(), 26); // header + 25 rows
    assert_eq!(y.lines().count(), 51);
    assert_eq!(z.lines().next(), Some("value"));
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("effective_config.toml").exists());

    // The manifest truth echoes the config truth.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["truth"]["phi_star"], 0.0);
    assert_eq!(manifest["truth"]["theta_star"], 1.0);
}

#[test]
fn two_point_grid_gives_two_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    write(
        &cfg,
        "[sweep]\ngrid = 2\nn_mc = 500\n",
    );
    let out_dir = dir.path().join("out");
    let out = smi()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3); // header + 2 rows
    assert!(out_dir.join("sweep.svg").exists());
}

#[test]
fn seed_override_changes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write(&cfg, "");
    let run = |sub: &str, seed: &str| {
        let out_dir = dir.path().join(sub);
        let out = smi()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(out_dir.join("z.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let a2 = run("a2", "1");
    assert_ne!(a, b);
    assert_eq!(a, a2);
}

#[test]
fn report_recomputes_identical_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    write(
        &cfg,
        "[run]\nreplicates = 12\n\n[sweep]\ngrid = 5\nn_mc = 500\n",
    );
    let out_dir = dir.path().join("out");
    let out = smi()
        .args(["replicate-study", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report_from_study = std::fs::read(out_dir.join("report.json")).unwrap();
    assert!(out_dir.join("eta_star_hist.svg").exists());
    assert!(out_dir.join("se_diff_smi_cut.svg").exists());

    let out = smi()
        .args(["report", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report_rebuilt = std::fs::read(out_dir.join("report.json")).unwrap();
    assert_eq!(report_from_study, report_rebuilt);
}

#[test]
fn custom_model_runs_waic_sweep_on_user_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let z_path = dir.path().join("z.csv");
    let y_path = dir.path().join("y.csv");
    let mut z = String::from("value\n");
    let mut y = String::from("value\n");
    for i in 0..20 {
        z.push_str(&format!("{}\n", 0.3 + 0.1 * (i as f64 % 7.0)));
    }
    for i in 0..30 {
        y.push_str(&format!("{}\n", 1.2 + 0.05 * (i as f64 % 9.0)));
    }
    write(&z_path, &z);
    write(&y_path, &y);
    let cfg = dir.path().join("custom.toml");
    write(
        &cfg,
        &format!(
            "[run]\nmodel = \"custom\"\n\n[data]\nsource = \"csv\"\nz_csv = \"{}\"\ny_csv = \"{}\"\n\n\
             [sweep]\ngrid = 3\nscorer = \"waic\"\nwaic_draws = 400\n",
            z_path.display(),
            y_path.display()
        ),
    );
    let out_dir = dir.path().join("out");
    let out = smi()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.contains("waic"));
}
