use std::process::Command as Proc;

use clap::Parser;
use ppbell_cli::config::Sweep;
use ppbell_cli::{resolve_config, run_from_args, Cli, CliError};

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_ppbell"))
}

#[test]
fn dedicated_flags_become_overrides() {
    let cli = Cli::try_parse_from([
        "ppbell", "dynamic-chsh", "--n-traj", "512", "--sweep", "phi", "--postselect", "--tau", "0.05",
        "--seed", "9",
    ])
    .unwrap();
    let c = resolve_config(&cli).unwrap();
    assert_eq!(c.dynamic.n_traj, 512);
    assert_eq!(c.dynamic.sweep, Sweep::Phi);
    assert!(c.dynamic.postselect);
    assert_eq!(c.dynamic.tau, 0.05);
    assert_eq!(c.run.seed, 9);

    let cli = Cli::try_parse_from(["ppbell", "static-chd", "--n-pairs", "3", "--set", "static.n_pairs=2"]).unwrap();
    // explicit --set wins over the dedicated flag
    assert_eq!(resolve_config(&cli).unwrap().static_run.n_pairs, 2);
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[run]\nseed = 5\n[dynamic]\ndt = 1e-4\nn_traj = 100\n").unwrap();
    let p = path.to_str().unwrap();
    let cli = Cli::try_parse_from(["ppbell", "dynamic-ch", "--config", p, "--n-traj", "200"]).unwrap();
    let c = resolve_config(&cli).unwrap();
    assert_eq!((c.run.seed, c.dynamic.dt, c.dynamic.n_traj), (5, 1e-4, 200));
}

#[test]
fn bad_configuration_is_rejected_before_running() {
    for args in [
        vec!["ppbell", "dynamic-ch", "--set", "dynamic.nope=1"],
        vec!["ppbell", "dynamic-ch", "--set", "dynamic.taus=[0.1,0.3]"],
        vec!["ppbell", "dynamic-ch", "--set", "dynamic.taus=[0.1,0.05]"],
        vec!["ppbell", "static-chd", "--n-pairs", "0"],
        vec!["ppbell", "waveguide", "--set", "waveguide.n_t=0"],
    ] {
        let e = run_from_args(&args).unwrap_err();
        assert!(matches!(e, CliError::Config(_)), "{args:?}: {e}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn static_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let out_s = out.to_str().unwrap();
    let report = run_from_args([
        "ppbell", "static-chd", "--n-samples", "8192", "--workers", "2", "--output", out_s, "--set",
        "static.phis=[0.3926990816987241]",
    ])
    .unwrap();
    let csv = std::fs::read_to_string(&report.csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# manifest: s.csv.manifest.json"));
    assert_eq!(lines.next(), Some("phi,s_chd,stderr,imag_residual,n_samples,s_chd_exact"));
    let row: Vec<_> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[4], "8192");
    assert_eq!(row[5], "1.20710678e0");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report.manifest).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "static-chd");
    assert_eq!(manifest["mode_order"], "A1,A2,B1,B2");
    assert_eq!(manifest["workers"], 2);
    assert_eq!(manifest["config"]["static"]["n_samples"], 8192);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .current_dir(dir.path())
        .args(["dynamic-ch", "--set", "dynamic.tau=-1", "--sweep", "phi"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().current_dir(dir.path()).args(["no-such-command"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    // vacuum-dominated denominators at tiny τ and few trajectories
    let st = bin()
        .current_dir(dir.path())
        .args(["dynamic-ch", "--n-traj", "64", "--set", "dynamic.taus=[0.001]"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
}
