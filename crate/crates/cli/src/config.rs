//! Run configuration: a TOML file with sections, flag overrides on top.
//!
//! Resolution order is defaults, then the file, then `--set key=value`
//! overrides (and the dedicated flags, which are rewritten into overrides).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ppbell_core::Complex64;
use serde::{Deserialize, Serialize};

use ppbell_core::estimators::AngleSet;
use ppbell_core::waveguide::{PumpProfile, WaveguideConfig};
use ppbell_core::{PairCount, SdeConfig};

use crate::error::{CliError, Result};

/// Largest `τ` accepted on a dynamic sweep grid.
pub const MAX_SWEEP_TAU: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            batch_size: ppbell_core::stats::DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticSection {
    pub n_pairs: u32,
    /// Defaults to 2¹⁸ for one pair and 2²⁴ otherwise.
    pub n_samples: Option<usize>,
    /// Defaults to `k·π/64`, `k = 0..=16`.
    pub phis: Option<Vec<f64>>,
    pub lhv_bound: f64,
}

impl Default for StaticSection {
    fn default() -> Self {
        StaticSection {
            n_pairs: 1,
            n_samples: None,
            phis: None,
            lhv_bound: 1.0,
        }
    }
}

impl StaticSection {
    pub fn samples(&self) -> usize {
        self.n_samples
            .unwrap_or(if self.n_pairs == 1 { 1 << 18 } else { 1 << 24 })
    }

    pub fn phi_grid(&self) -> Vec<f64> {
        self.phis
            .clone()
            .unwrap_or_else(|| (0..=16).map(|k| k as f64 * PI / 64.0).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Tau,
    Phi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicSection {
    pub kappa_e: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub sweep: Sweep,
    /// τ grid for a τ sweep; defaults to `0.025·k`, `k = 1..=10`.
    pub taus: Option<Vec<f64>>,
    /// Fixed τ of a φ sweep.
    pub tau: f64,
    /// Relative angles of a φ sweep; defaults to `k·π/16`, `k = 0..=8`.
    pub phis: Option<Vec<f64>>,
    pub theta: f64,
    pub phi: f64,
    pub theta_p: f64,
    pub phi_p: f64,
    pub postselect: bool,
    /// Correlation order `I = J` of the CHD moments.
    pub order: u32,
    pub lhv_bound: f64,
}

impl Default for DynamicSection {
    fn default() -> Self {
        let a = AngleSet::default();
        DynamicSection {
            kappa_e: 1.0,
            dt: 2e-4,
            n_traj: 1 << 18,
            sweep: Sweep::Tau,
            taus: None,
            tau: 0.1,
            phis: None,
            theta: a.theta,
            phi: a.phi,
            theta_p: a.theta_p,
            phi_p: a.phi_p,
            postselect: false,
            order: 1,
            lhv_bound: 1.0,
        }
    }
}

impl DynamicSection {
    pub fn angles(&self) -> AngleSet {
        AngleSet::new(self.theta, self.phi, self.theta_p, self.phi_p)
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        self.taus
            .clone()
            .unwrap_or_else(|| (1..=10).map(|k| 0.025 * k as f64).collect())
    }

    pub fn phi_grid(&self) -> Vec<f64> {
        self.phis
            .clone()
            .unwrap_or_else(|| (0..=8).map(|k| k as f64 * PI / 16.0).collect())
    }

    /// Record times in simulation time units.
    pub fn record_times(&self) -> Vec<f64> {
        match self.sweep {
            Sweep::Tau => self.tau_grid().iter().map(|t| t / self.kappa_e).collect(),
            Sweep::Phi => vec![self.tau / self.kappa_e],
        }
    }

    pub fn sde_config(&self, run: &RunSection) -> Result<SdeConfig> {
        let taus = match self.sweep {
            Sweep::Tau => self.tau_grid(),
            Sweep::Phi => vec![self.tau],
        };
        if taus.is_empty() {
            return Err(CliError::Config("empty tau grid".into()));
        }
        for w in taus.windows(2) {
            if !(w[0] < w[1]) {
                return Err(CliError::Config("tau grid must be strictly increasing".into()));
            }
        }
        if let Some(&t) = taus.iter().find(|&&t| !(t > 0.0 && t <= MAX_SWEEP_TAU)) {
            return Err(CliError::Config(format!(
                "tau {t} outside (0, {MAX_SWEEP_TAU}]"
            )));
        }
        if self.order == 0 {
            return Err(CliError::Config("order must be at least 1".into()));
        }
        let record_times = self.record_times();
        let cfg = SdeConfig {
            kappa_e: self.kappa_e,
            dt: self.dt,
            t_end: record_times.iter().cloned().fold(0.0, f64::max),
            n_traj: self.n_traj,
            seed: run.seed,
            record_times,
            batch_size: run.batch_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpShape {
    Constant,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveguideSection {
    pub k2: f64,
    pub k2_p: f64,
    pub gamma: f64,
    pub gamma_p: f64,
    pub kappa: f64,
    pub kappa_im: f64,
    pub z_end: f64,
    pub dz: f64,
    pub n_t: usize,
    pub window: f64,
    pub n_traj: usize,
    pub pump: PumpShape,
    pub pump_amplitude: f64,
    pub pump_width: f64,
    pub frozen_pump: bool,
    pub probe: Option<usize>,
    /// Defaults to `[z_end]`.
    pub record_z: Option<Vec<f64>>,
    pub theta: f64,
    pub phi: f64,
    pub theta_p: f64,
    pub phi_p: f64,
}

impl Default for WaveguideSection {
    fn default() -> Self {
        let w = WaveguideConfig::default();
        let a = AngleSet::default();
        WaveguideSection {
            k2: w.k2,
            k2_p: w.k2_p,
            gamma: w.gamma_loss,
            gamma_p: w.gamma_p,
            kappa: w.kappa.re,
            kappa_im: w.kappa.im,
            z_end: w.z_end,
            dz: w.dz,
            n_t: w.n_t,
            window: w.window,
            n_traj: w.n_traj,
            pump: PumpShape::Constant,
            pump_amplitude: 1.0,
            pump_width: 1.0,
            frozen_pump: w.frozen_pump,
            probe: None,
            record_z: None,
            theta: a.theta,
            phi: a.phi,
            theta_p: a.theta_p,
            phi_p: a.phi_p,
        }
    }
}

impl WaveguideSection {
    pub fn angles(&self) -> AngleSet {
        AngleSet::new(self.theta, self.phi, self.theta_p, self.phi_p)
    }

    pub fn core_config(&self, run: &RunSection) -> Result<WaveguideConfig> {
        let amplitude = Complex64::new(self.pump_amplitude, 0.0);
        let cfg = WaveguideConfig {
            k2: self.k2,
            k2_p: self.k2_p,
            gamma_loss: self.gamma,
            gamma_p: self.gamma_p,
            kappa: Complex64::new(self.kappa, self.kappa_im),
            z_end: self.z_end,
            dz: self.dz,
            n_t: self.n_t,
            window: self.window,
            seed: run.seed,
            n_traj: self.n_traj,
            pump: match self.pump {
                PumpShape::Constant => PumpProfile::Constant { amplitude },
                PumpShape::Gaussian => PumpProfile::Gaussian {
                    amplitude,
                    width: self.pump_width,
                },
            },
            frozen_pump: self.frozen_pump,
            probe: self.probe,
            record_z: self.record_z.clone().unwrap_or_else(|| vec![self.z_end]),
            batch_size: run.batch_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    #[serde(rename = "static")]
    pub static_run: StaticSection,
    pub dynamic: DynamicSection,
    pub waveguide: WaveguideSection,
}

impl Config {
    pub fn static_pairs(&self) -> Result<PairCount> {
        Ok(PairCount::new(self.static_run.n_pairs)?)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `section.key=value` override to a raw table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Defaults, then `file`, then overrides.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

/// Default output path for a subcommand.
pub fn default_output(subcommand: &str) -> PathBuf {
    PathBuf::from(format!("{subcommand}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = load(None, &[]).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.static_run.samples(), 1 << 18);
        assert_eq!(c.static_run.phi_grid().len(), 17);
        assert_eq!(c.dynamic.phi_grid().len(), 9);
        assert_eq!(c.dynamic.n_traj, 1 << 18);
        let mut s = c.static_run.clone();
        s.n_pairs = 2;
        assert_eq!(s.samples(), 1 << 24);
    }

    #[test]
    fn precedence_file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[run]\nseed = 5\n[dynamic]\nn_traj = 100\nsweep = \"phi\"\n").unwrap();
        let c = load(Some(&path), &["dynamic.n_traj=64".into()]).unwrap();
        assert_eq!(c.run.seed, 5);
        assert_eq!(c.dynamic.n_traj, 64);
        assert_eq!(c.dynamic.sweep, Sweep::Phi);
        let c = load(Some(&path), &["dynamic.taus=[0.05, 0.1]".into(), "dynamic.sweep=tau".into()]).unwrap();
        assert_eq!(c.dynamic.taus, Some(vec![0.05, 0.1]));
        assert_eq!(c.dynamic.sweep, Sweep::Tau);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(load(None, &["dynamic.bogus=1".into()]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["run.seed=-1".into()]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["noequals".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn dynamic_grid_validation() {
        let mut d = DynamicSection::default();
        let run = RunSection::default();
        assert!(d.sde_config(&run).is_ok());
        d.taus = Some(vec![0.1, 0.3]);
        assert!(matches!(d.sde_config(&run), Err(CliError::Config(_))));
        d.taus = Some(vec![0.1, 0.05]);
        assert!(matches!(d.sde_config(&run), Err(CliError::Config(_))));
        d.taus = Some(vec![0.0, 0.05]);
        assert!(matches!(d.sde_config(&run), Err(CliError::Config(_))));
    }
}
