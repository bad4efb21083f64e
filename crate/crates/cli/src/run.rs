//! Subcommand runners. Each produces a table plus bookkeeping; writing and
//! exit-code policy live in the caller.

use std::f64::consts::PI;

use ppbell_core::estimators::{BellStatistic, ChPlan, ChdPlan, ChshPlan};
use ppbell_core::oracle::{self, FockPdcState};
use ppbell_core::sde::{simulate_observables, SdeConfig};
use ppbell_core::stats::{Estimate, LinearForm, MomentAccumulator};
use ppbell_core::waveguide::{self, Field, FieldState};
use ppbell_core::{
    AngleSet, Complex64, Ensemble, Mode, ObservableSet, PhasePoint, StaticEnsemble,
};

use crate::config::{Config, Sweep};
use crate::error::{CliError, Result};
use crate::output::{fmt_f64, StatResidual, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicStatistic {
    Chd,
    Ch,
    Chsh,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub table: Table,
    pub samples: u64,
    pub failures: usize,
    pub residuals: Vec<StatResidual>,
    pub violations: Vec<String>,
    /// Human-readable lines for stdout (and the manifest).
    pub summary: Vec<String>,
}

impl RunOutput {
    fn record(&mut self, row: String, name: &str, value: Complex64, se_im: f64) {
        let ok = value.im.abs() <= 3.0 * se_im || value.im.abs() <= 1e-14 * (1.0 + value.re.abs());
        if !ok {
            self.violations.push(format!(
                "{name} at {row}: imag {:.3e} vs 3 x {:.3e}",
                value.im, se_im
            ));
        }
        self.residuals.push(StatResidual {
            row,
            statistic: name.to_string(),
            imag_residual: value.im,
            imag_stderr: se_im,
        });
    }

    fn record_stat(&mut self, row: String, s: &BellStatistic) {
        self.record(
            row,
            s.kind.name(),
            Complex64::new(s.value, s.imag_residual),
            s.imag_stderr,
        );
    }
}

pub fn run_static_chd(cfg: &Config) -> Result<RunOutput> {
    let n = cfg.static_pairs()?;
    let samples = cfg.static_run.samples();
    if samples < 2 {
        return Err(CliError::Config("static.n_samples must be at least 2".into()));
    }
    let phis = cfg.static_run.phi_grid();
    if phis.is_empty() {
        return Err(CliError::Config("empty phi grid".into()));
    }
    let mut ens = StaticEnsemble::new(n, samples, cfg.run.seed);
    ens.batch_size = cfg.run.batch_size;
    let mut obs = ObservableSet::new();
    let plan = ChdPlan::register(&mut obs, n.get(), n.get(), &phis)?;
    let acc = ens.accumulate(&obs)?;
    let mut out = RunOutput {
        table: Table::new(["phi", "s_chd", "stderr", "imag_residual", "n_samples", "s_chd_exact"]),
        samples: acc.samples(),
        ..Default::default()
    };
    for (k, &phi) in phis.iter().enumerate() {
        let s = plan.statistic(&acc, k)?.with_bound(cfg.static_run.lhv_bound);
        out.record_stat(fmt_f64(phi), &s);
        out.table.push(vec![
            fmt_f64(phi),
            fmt_f64(s.value),
            fmt_f64(s.stderr),
            fmt_f64(s.imag_residual),
            s.n_samples.to_string(),
            fmt_f64(oracle::s_chd_exact(n.get(), phi)),
        ]);
    }
    Ok(out)
}

enum DynPlan {
    Chd(ChdPlan),
    Ch(ChPlan),
    Chsh(ChshPlan),
}

pub fn run_dynamic(cfg: &Config, stat: DynamicStatistic) -> Result<RunOutput> {
    let d = &cfg.dynamic;
    let sde = d.sde_config(&cfg.run)?;
    let (angle_sets, chd_phis): (Vec<AngleSet>, Vec<f64>) = match d.sweep {
        Sweep::Tau => (vec![d.angles()], vec![d.phi - d.theta]),
        Sweep::Phi => (
            d.phi_grid().into_iter().map(AngleSet::from_relative).collect(),
            d.phi_grid(),
        ),
    };
    let mut obs = ObservableSet::new();
    let plan = match stat {
        DynamicStatistic::Chd => DynPlan::Chd(ChdPlan::register(&mut obs, d.order, d.order, &chd_phis)?),
        DynamicStatistic::Ch => DynPlan::Ch(ChPlan::register(&mut obs, &angle_sets)),
        DynamicStatistic::Chsh => DynPlan::Chsh(ChshPlan::register(&mut obs, &angle_sets)),
    };
    let (accs, failures) = simulate_observables(&sde, &obs)?;
    let name = match (stat, d.postselect) {
        (DynamicStatistic::Chd, _) => "s_chd",
        (DynamicStatistic::Ch, _) => "s_ch",
        (DynamicStatistic::Chsh, false) => "s_chsh",
        (DynamicStatistic::Chsh, true) => "s_chsh_postselected",
    };
    let key = match d.sweep {
        Sweep::Tau => "tau",
        Sweep::Phi => "phi",
    };
    let mut out = RunOutput {
        table: Table::new([key, name, "stderr", "imag_residual", "n_traj", "oracle"]),
        samples: accs[0].samples(),
        failures,
        ..Default::default()
    };
    if failures > 0 {
        out.summary.push(format!("warning: {failures} trajectories failed and were excluded"));
    }
    // (sweep value, τ, accumulator index, plan index)
    let rows: Vec<(f64, f64, usize, usize)> = match d.sweep {
        Sweep::Tau => d.tau_grid().into_iter().enumerate().map(|(i, t)| (t, t, i, 0)).collect(),
        Sweep::Phi => d.phi_grid().into_iter().enumerate().map(|(k, p)| (p, d.tau, 0, k)).collect(),
    };
    for (x, tau, ai, k) in rows {
        let acc = &accs[ai];
        let fock = FockPdcState::auto(tau)?;
        let (s, exact) = match &plan {
            DynPlan::Chd(p) => (p.statistic(acc, k)?, fock.s_chd(d.order, d.order, chd_phis[k])?),
            DynPlan::Ch(p) => (
                p.statistic(acc, k, d.postselect)?,
                fock.s_ch(&angle_sets[k], d.postselect)?,
            ),
            DynPlan::Chsh(p) => (
                p.statistic(acc, k, d.postselect)?,
                fock.s_chsh(&angle_sets[k], d.postselect)?,
            ),
        };
        let s = s.with_bound(d.lhv_bound).with_tau(tau);
        out.record_stat(format!("{key}={}", fmt_f64(x)), &s);
        out.table.push(vec![
            fmt_f64(x),
            fmt_f64(s.value),
            fmt_f64(s.stderr),
            fmt_f64(s.imag_residual),
            s.n_samples.to_string(),
            fmt_f64(exact),
        ]);
    }
    Ok(out)
}

/// Moments and CH statistic computed identically for the waveguide probe
/// cell and the four-mode engine.
struct ReducedObservables {
    n_a1: usize,
    n_b2: usize,
    pair: usize,
    ch: ChPlan,
}

impl ReducedObservables {
    fn register(obs: &mut ObservableSet, angles: AngleSet) -> Self {
        let n_a1 = obs.push("n_A1", |p: &PhasePoint| p.quasi_number(Mode::A1).value());
        let n_b2 = obs.push("n_B2", |p: &PhasePoint| p.quasi_number(Mode::B2).value());
        let pair = obs.push("pair_A1B1", |p: &PhasePoint| p.amplitude(Mode::A1) * p.amplitude(Mode::B1));
        let ch = ChPlan::register(obs, &[angles]);
        ReducedObservables { n_a1, n_b2, pair, ch }
    }

    fn evaluate(&self, acc: &MomentAccumulator) -> Result<Vec<(&'static str, Estimate)>> {
        let ch = self.ch.statistic(acc, 0, false)?;
        Ok(vec![
            ("n_A1", acc.linear(&LinearForm::single(self.n_a1))?),
            ("n_B2", acc.linear(&LinearForm::single(self.n_b2))?),
            ("pair_A1B1", acc.linear(&LinearForm::single(self.pair))?),
            (
                "s_ch",
                Estimate {
                    value: Complex64::new(ch.value, ch.imag_residual),
                    se_re: ch.stderr,
                    se_im: ch.imag_stderr,
                    samples: ch.n_samples,
                },
            ),
        ])
    }
}

fn reduction_oracle(quantity: &str, tau: f64) -> Option<f64> {
    match quantity {
        "n_A1" | "n_B2" => Some(oracle::mean_photons(tau)),
        "pair_A1B1" => Some(oracle::pair_coherence(tau)),
        "s_ch" => FockPdcState::auto(tau)
            .ok()
            .and_then(|f| f.s_ch(&AngleSet::default(), false).ok()),
        _ => None,
    }
}

/// Seeded coherent field under loss only; returns the worst deviation from
/// `e^{−γz}` relative to the initial amplitude.
pub fn loss_check(wg: &waveguide::WaveguideConfig) -> Result<f64> {
    let mut cfg = wg.clone();
    cfg.kappa = Complex64::new(0.0, 0.0);
    cfg.frozen_pump = true;
    let a0 = Complex64::new(1.0, 0.0);
    let mut s = FieldState::vacuum(cfg.n_t, cfg.window);
    s.set_coherent(Field::Phi1a, &vec![a0; cfg.n_t]);
    waveguide::propagate_deterministic(&mut s, &cfg)?;
    let want = a0 * (-cfg.gamma_loss * s.z).exp();
    Ok(s.field(Field::Phi1a)
        .iter()
        .map(|v| (v - want).norm())
        .fold(0.0, f64::max))
}

pub fn run_waveguide(cfg: &Config) -> Result<RunOutput> {
    let w = &cfg.waveguide;
    let wg = w.core_config(&cfg.run)?;
    let angles = w.angles();
    let run = waveguide::propagate(&wg)?;
    let mut obs = ObservableSet::new();
    let reduced = ReducedObservables::register(&mut obs, angles);
    let reduction = wg.is_reduction();
    let kappa_e = wg.kappa_e();
    let oracle_ok = reduction && kappa_e.im == 0.0 && kappa_e.re > 0.0 && angles == AngleSet::default();
    let mut out = RunOutput {
        table: Table::new(["z", "quantity", "value", "stderr", "imag_residual", "n_traj", "oracle"]),
        samples: run.ensembles[0].len() as u64,
        failures: run.failures + run.branch_failures,
        ..Default::default()
    };
    if out.failures > 0 {
        out.summary.push(format!(
            "warning: {} non-finite and {} branch-jump trajectories excluded",
            run.failures, run.branch_failures
        ));
    }
    let mut wg_estimates = Vec::new();
    for (z, ens) in run.record_z.iter().zip(&run.ensembles) {
        let acc = ens.accumulate(&obs)?;
        let est = reduced.evaluate(&acc)?;
        for (q, e) in &est {
            let exact = if oracle_ok {
                reduction_oracle(q, kappa_e.re * z).map(fmt_f64).unwrap_or_default()
            } else {
                String::new()
            };
            out.record(format!("z={},{q}", fmt_f64(*z)), q, e.value, e.se_im);
            out.table.push(vec![
                fmt_f64(*z),
                q.to_string(),
                fmt_f64(e.re()),
                fmt_f64(e.se_re),
                fmt_f64(e.im()),
                e.samples.to_string(),
                exact,
            ]);
        }
        wg_estimates.push(est);
    }
    if reduction {
        let pass = if kappa_e.im == 0.0 && kappa_e.re > 0.0 {
            // same statistics from the four-mode engine
            let sde = SdeConfig {
                kappa_e: kappa_e.re,
                dt: wg.dz,
                t_end: wg.z_end,
                n_traj: wg.n_traj,
                seed: wg.seed,
                record_times: wg.record_z.clone(),
                batch_size: wg.batch_size,
            };
            let (accs, _) = simulate_observables(&sde, &obs)?;
            let mut pass = true;
            for (acc, wg_est) in accs.iter().zip(&wg_estimates) {
                for ((q, a), (_, b)) in wg_est.iter().zip(reduced.evaluate(acc)?) {
                    let tol = 3.0 * (a.se_re.powi(2) + b.se_re.powi(2)).sqrt();
                    let ok = (a.re() - b.re()).abs() <= tol;
                    pass &= ok;
                    out.summary.push(format!(
                        "  {q}: waveguide {:.6} four-mode {:.6} (tol {:.2e}) {}",
                        a.re(),
                        b.re(),
                        tol,
                        if ok { "ok" } else { "MISMATCH" }
                    ));
                }
            }
            pass
        } else {
            out.summary.push("  complex kappa*Psi: no four-mode counterpart".into());
            false
        };
        out.summary.insert(
            0,
            format!("reduction check: {}", if pass { "PASS" } else { "FAIL" }),
        );
    }
    if wg.gamma_loss > 0.0 {
        let err = loss_check(&wg)?;
        out.summary.push(format!(
            "loss check: {} (max deviation {err:.2e})",
            if err < 1e-10 { "PASS" } else { "FAIL" }
        ));
    }
    Ok(out)
}

/// Oracle equivalence: Fock-basis evaluator against closed forms, then
/// small Monte Carlo runs against both.
pub fn run_selftest(cfg: &Config) -> Result<RunOutput> {
    let mut out = RunOutput {
        table: Table::new(["check", "value", "expected", "tolerance", "pass"]),
        ..Default::default()
    };
    let check = |out: &mut RunOutput, name: String, value: f64, expected: f64, tol: f64| {
        let pass = (value - expected).abs() <= tol;
        out.table.push(vec![
            name,
            fmt_f64(value),
            fmt_f64(expected),
            fmt_f64(tol),
            pass.to_string(),
        ]);
    };
    let a = AngleSet::default();
    for r in [0.05, 0.1, 0.2] {
        let f = FockPdcState::auto(r)?;
        check(&mut out, format!("fock_p++(r={r})"), f.prob_joint(a.theta, a.phi, ppbell_core::EventPattern::PlusPlus), oracle::p_plus_plus(r, a.theta, a.phi), 1e-12);
        check(&mut out, format!("fock_marginal(r={r})"), f.marginal_a(PI / 3.0), oracle::marginal_plus(r), 1e-12);
        check(&mut out, format!("fock_s_ch(r={r})"), f.s_ch(&a, false)?, oracle::s_ch_limit(PI / 8.0), 1e-10);
        check(&mut out, format!("fock_s_ch_postselect(r={r})"), f.s_ch(&a, true)?, f.s_ch(&a, false)?, 1e-12);
        check(&mut out, format!("fock_norm(r={r})"), f.norm_sqr(), f.truncated_norm(), 1e-12);
    }
    let small = FockPdcState::auto(1e-4)?;
    for phi in [PI / 16.0, PI / 8.0, 3.0 * PI / 16.0] {
        check(&mut out, format!("fock_g_small_r(phi={phi:.6})"), small.g(1, 1, phi)?, oracle::g_exact(1, phi), 1e-7);
    }

    let n_static = 1 << 16;
    let n1 = ppbell_core::PairCount::new(1)?;
    let ens = StaticEnsemble::new(n1, n_static, cfg.run.seed);
    let s = ppbell_core::estimators::s_chd(&ens, n1, PI / 8.0)?;
    check(&mut out, "mc_static_s_chd(N=1)".into(), s.value, oracle::s_chd_exact(1, PI / 8.0), 3.0 * s.stderr);

    let sde = SdeConfig::recording(vec![0.1], 1 << 14, cfg.run.seed);
    let mut obs = ObservableSet::new();
    let reduced = ReducedObservables::register(&mut obs, a);
    let (accs, _) = simulate_observables(&sde, &obs)?;
    let fock = FockPdcState::auto(0.1)?;
    for (q, e) in reduced.evaluate(&accs[0])? {
        let exact = match q {
            "s_ch" => fock.s_ch(&a, false)?,
            _ => reduction_oracle(q, 0.1).unwrap_or(f64::NAN),
        };
        check(&mut out, format!("mc_dynamic_{q}(tau=0.1)"), e.re(), exact, 3.0 * e.se_re);
    }
    let failed = out.table.rows.iter().filter(|r| r[4] != "true").count();
    out.summary.push(format!(
        "selftest: {} checks, {failed} failed",
        out.table.rows.len()
    ));
    out.samples = n_static as u64;
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(out)
}
