//! Positive-P stochastic evolution of the four-mode down-conversion model
//! `H = iκE(a₁†b₁† − a₁b₁) + iκE(a₂†b₂† − a₂b₂)`.
//!
//! The eight complex variables obey the Stratonovich system
//!
//! ```text
//! dα_i  = κE β_i⁺ dt + √κE dW_i        dβ_i  = κE α_i⁺ dt + √κE dW_i*
//! dα_i⁺ = κE β_i  dt + √κE dW_i⁺       dβ_i⁺ = κE α_i  dt + √κE (dW_i⁺)*
//! ```
//!
//! with `⟨dW_i dW_j*⟩ = ⟨dW_i⁺ (dW_j⁺)*⟩ = δ_ij dt` and all other second
//! moments zero. Trajectories start from the vacuum point mass at the origin
//! and are integrated with a semi-implicit midpoint rule.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::ensemble::{fold_batches, ObservableSet, PointSet};
use crate::error::{Error, Result};
use crate::phasespace::PhasePoint;
use crate::rng::{complex_normal, substream, Domain};
use crate::stats::{effective_batch_size, MomentAccumulator, DEFAULT_BATCH_SIZE};

/// Fixed-point iterations of the midpoint step.
pub const MIDPOINT_ITERATIONS: usize = 4;
/// Hard cap on the dimensionless time `κE·t_end`.
pub const MAX_TAU: f64 = 1.0;
/// Above this `κE·t_end` the sampling error is known to grow quickly.
pub const WARN_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig {
    pub kappa_e: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub record_times: Vec<f64>,
    pub batch_size: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            kappa_e: 1.0,
            dt: 2e-4,
            t_end: 0.1,
            n_traj: 1 << 18,
            seed: 1,
            record_times: vec![0.1],
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl SdeConfig {
    /// Config that records at the given times and ends at the last of them.
    pub fn recording(record_times: Vec<f64>, n_traj: usize, seed: u64) -> Self {
        let t_end = record_times.iter().cloned().fold(0.0, f64::max);
        SdeConfig {
            t_end,
            n_traj,
            seed,
            record_times,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.kappa_e > 0.0 && self.kappa_e.is_finite()) {
            return bad(format!("kappa_e must be positive, got {}", self.kappa_e));
        }
        if !(self.t_end >= self.dt) {
            return bad(format!("t_end {} must be at least dt {}", self.t_end, self.dt));
        }
        let tau = self.kappa_e * self.t_end;
        if tau > MAX_TAU {
            return bad(format!("kappa_e * t_end = {tau} exceeds the cap {MAX_TAU}"));
        }
        if tau > WARN_TAU {
            log::warn!("kappa_e * t_end = {tau} > {WARN_TAU}: sampling errors grow rapidly");
        }
        if self.n_traj == 0 {
            return bad("n_traj must be positive".into());
        }
        if self.record_times.is_empty() {
            return bad("record_times must not be empty".into());
        }
        for w in self.record_times.windows(2) {
            if !(w[0] <= w[1]) {
                return bad("record_times must be sorted".into());
            }
        }
        for &t in &self.record_times {
            if !(0.0..=self.t_end * (1.0 + 1e-12)).contains(&t) {
                return bad(format!("record time {t} outside [0, {}]", self.t_end));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Step index at which each record time is taken.
    pub fn record_steps(&self) -> Vec<usize> {
        self.record_times
            .iter()
            .map(|t| (t / self.dt).round() as usize)
            .collect()
    }
}

/// Wiener increments for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub dw1: Complex64,
    pub dw2: Complex64,
    pub dw1p: Complex64,
    pub dw2p: Complex64,
}

impl NoiseDraw {
    pub fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        NoiseDraw {
            dw1: z,
            dw2: z,
            dw1p: z,
            dw2p: z,
        }
    }
}

/// Four independent isotropic complex increments with `⟨|dW|²⟩ = dt`.
#[inline]
pub fn draw_noise<R: Rng + ?Sized>(dt: f64, rng: &mut R) -> NoiseDraw {
    let v = dt / 2.0;
    NoiseDraw {
        dw1: complex_normal(rng, v),
        dw2: complex_normal(rng, v),
        dw1p: complex_normal(rng, v),
        dw2p: complex_normal(rng, v),
    }
}

/// Time derivative of every variable, same layout as [`PhasePoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub alpha: [Complex64; 4],
    pub alpha_plus: [Complex64; 4],
}

// Flat layout used in the hot loop: alpha[0..4] then alpha_plus[0..4],
// each in (A1, A2, B1, B2) order.
type Flat = [Complex64; 8];

#[inline]
fn drift_flat(x: &Flat, k: f64) -> Flat {
    [
        x[6] * k, // dα₁  = κE β₁⁺
        x[7] * k, // dα₂  = κE β₂⁺
        x[4] * k, // dβ₁  = κE α₁⁺
        x[5] * k, // dβ₂  = κE α₂⁺
        x[2] * k, // dα₁⁺ = κE β₁
        x[3] * k, // dα₂⁺ = κE β₂
        x[0] * k, // dβ₁⁺ = κE α₁
        x[1] * k, // dβ₂⁺ = κE α₂
    ]
}

#[inline]
fn noise_flat(noise: &NoiseDraw, kappa_e: f64) -> Flat {
    let s = kappa_e.sqrt();
    [
        noise.dw1 * s,
        noise.dw2 * s,
        noise.dw1.conj() * s,
        noise.dw2.conj() * s,
        noise.dw1p * s,
        noise.dw2p * s,
        noise.dw1p.conj() * s,
        noise.dw2p.conj() * s,
    ]
}

fn flatten(p: &PhasePoint) -> Flat {
    let a = p.alpha();
    let ap = p.alpha_plus();
    [a[0], a[1], a[2], a[3], ap[0], ap[1], ap[2], ap[3]]
}

fn unflatten(x: &Flat) -> PhasePoint {
    PhasePoint::from_parts_unchecked([x[0], x[1], x[2], x[3]], [x[4], x[5], x[6], x[7]])
}

pub fn drift(state: &PhasePoint, kappa_e: f64) -> StateRate {
    let d = drift_flat(&flatten(state), kappa_e);
    StateRate {
        alpha: [d[0], d[1], d[2], d[3]],
        alpha_plus: [d[4], d[5], d[6], d[7]],
    }
}

#[inline]
fn midpoint_step(x0: &Flat, kappa_e: f64, dt: f64, dw: &Flat) -> Flat {
    let mut mid = *x0;
    for _ in 0..MIDPOINT_ITERATIONS {
        let d = drift_flat(&mid, kappa_e);
        for i in 0..8 {
            mid[i] = x0[i] + (d[i] * dt + dw[i]) * 0.5;
        }
    }
    std::array::from_fn(|i| mid[i] * 2.0 - x0[i])
}

fn flat_is_finite(x: &Flat) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// One semi-implicit midpoint step.
pub fn step(state: &PhasePoint, cfg: &SdeConfig, noise: &NoiseDraw) -> Result<PhasePoint> {
    let next = midpoint_step(
        &flatten(state),
        cfg.kappa_e,
        cfg.dt,
        &noise_flat(noise, cfg.kappa_e),
    );
    let p = unflatten(&next);
    p.check_finite()?;
    Ok(p)
}

/// Runs one trajectory from the vacuum, calling `record(slot, point)` at each
/// record step. Returns `false` if the trajectory went non-finite.
fn run_trajectory<F>(cfg: &SdeConfig, record_steps: &[usize], index: u64, mut record: F) -> bool
where
    F: FnMut(usize, &PhasePoint),
{
    let mut rng = substream(cfg.seed, Domain::Trajectory, index);
    let mut x: Flat = [Complex64::new(0.0, 0.0); 8];
    let mut slot = 0;
    let n_steps = cfg.n_steps();
    for s in 0..=n_steps {
        while slot < record_steps.len() && record_steps[slot] == s {
            if !flat_is_finite(&x) {
                return false;
            }
            record(slot, &unflatten(&x));
            slot += 1;
        }
        if s == n_steps || slot == record_steps.len() {
            break;
        }
        let noise = draw_noise(cfg.dt, &mut rng);
        x = midpoint_step(&x, cfg.kappa_e, cfg.dt, &noise_flat(&noise, cfg.kappa_e));
    }
    flat_is_finite(&x)
}

/// Recorded ensembles, one [`PointSet`] per record time.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub record_times: Vec<f64>,
    pub ensembles: Vec<PointSet>,
    pub failures: usize,
}

impl TrajectorySet {
    /// Ensemble recorded closest to time `t`.
    pub fn at(&self, t: f64) -> &PointSet {
        let i = self
            .record_times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap())
            .map(|(i, _)| i)
            .expect("non-empty record times");
        &self.ensembles[i]
    }
}

fn batch_ranges(n: usize, batch: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(batch).map(|s| (s, (s + batch).min(n))).collect()
}

/// Simulates and stores every trajectory at every record time.
pub fn simulate(cfg: &SdeConfig) -> Result<TrajectorySet> {
    cfg.validate()?;
    let steps = cfg.record_steps();
    let n_rec = steps.len();
    let batch = effective_batch_size(cfg.n_traj, cfg.batch_size);
    let parts: Vec<(Vec<Vec<PhasePoint>>, usize)> = batch_ranges(cfg.n_traj, batch)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut out = vec![Vec::with_capacity(hi - lo); n_rec];
            let mut failures = 0;
            let mut buf = Vec::with_capacity(n_rec);
            for i in lo..hi {
                buf.clear();
                if run_trajectory(cfg, &steps, i as u64, |_, p| buf.push(*p)) {
                    for (slot, p) in buf.iter().enumerate() {
                        out[slot].push(*p);
                    }
                } else {
                    failures += 1;
                }
            }
            (out, failures)
        })
        .collect();
    let mut points = vec![Vec::with_capacity(cfg.n_traj); n_rec];
    let mut failures = 0;
    for (out, f) in parts {
        failures += f;
        for (dst, src) in points.iter_mut().zip(out) {
            dst.extend(src);
        }
    }
    if failures > 0 {
        log::error!("{failures} trajectories failed (non-finite); excluded");
    }
    Ok(TrajectorySet {
        record_times: cfg.record_times.clone(),
        ensembles: points
            .into_iter()
            .map(|p| PointSet::new(p).with_batch_size(batch))
            .collect(),
        failures,
    })
}

/// Streaming variant: accumulates observables at each record time without
/// storing trajectories. Returns one accumulator per record time and the
/// number of failed (excluded) trajectories.
pub fn simulate_observables(
    cfg: &SdeConfig,
    obs: &ObservableSet,
) -> Result<(Vec<MomentAccumulator>, usize)> {
    cfg.validate()?;
    let steps = cfg.record_steps();
    let n_rec = steps.len();
    let dim = obs.len();
    let batch = effective_batch_size(cfg.n_traj, cfg.batch_size);
    let zero = Complex64::new(0.0, 0.0);
    let parts: Vec<(Vec<Vec<Complex64>>, u64, usize)> = batch_ranges(cfg.n_traj, batch)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut sums = vec![vec![zero; dim]; n_rec];
            let mut scratch = vec![vec![zero; dim]; n_rec];
            let mut ok = 0u64;
            let mut failures = 0;
            for i in lo..hi {
                for s in scratch.iter_mut() {
                    s.iter_mut().for_each(|v| *v = zero);
                }
                if run_trajectory(cfg, &steps, i as u64, |slot, p| {
                    obs.add_into(p, &mut scratch[slot])
                }) {
                    for (dst, src) in sums.iter_mut().zip(&scratch) {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += *s;
                        }
                    }
                    ok += 1;
                } else {
                    failures += 1;
                }
            }
            (sums, ok, failures)
        })
        .collect();
    let failures = parts.iter().map(|p| p.2).sum();
    if failures > 0 {
        log::error!("{failures} trajectories failed (non-finite); excluded");
    }
    let accs = (0..n_rec)
        .map(|slot| {
            fold_batches(
                dim,
                parts.iter().map(|(s, ok, _)| (s[slot].clone(), *ok)).collect(),
            )
        })
        .collect::<Vec<_>>();
    if accs.first().map_or(true, |a| a.samples() == 0) {
        return Err(Error::EmptyEnsemble);
    }
    Ok((accs, failures))
}
