//! Multi-mode waveguide extension of the down-conversion model.
//!
//! Five stochastic fields (pump `Ψ`, signal pairs `Φᵢᵃ`, `Φᵢᵇ` for spatial
//! modes `i = 1, 2`) and their five conjugate-role partners live on a
//! periodic grid in the moving-frame time `t_v`. Propagation along `z`:
//!
//! ```text
//! ∂zΦᵢᵃ = −(ik″/2)∂²Φᵢᵃ − γΦᵢᵃ + κ*ΨΦᵢᵇ⁺ + √(κ*Ψ) ζᵢ
//! ∂zΦᵢᵇ = −(ik″/2)∂²Φᵢᵇ − γΦᵢᵇ + κ*ΨΦᵢᵃ⁺ + √(κ*Ψ) ζᵢ*
//! ∂zΨ   = −(ik_p″/2)∂²Ψ − γ_pΨ − κ Σᵢ ΦᵢᵃΦᵢᵇ
//! ```
//!
//! The partner equations swap every field for its partner and conjugate
//! every coefficient, including the `i` in the dispersion term.
//!
//! Integration is symmetric split-step: an exact spectral half step for
//! dispersion and loss, a semi-implicit midpoint step for the local
//! coupling and noise at every grid cell, and a second half step. The
//! noise `ζ` is white in `z` and `t_v`, so each cell receives complex
//! increments with `⟨|dW|²⟩ = dz/Δt`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::ensemble::PointSet;
use crate::error::{Error, Result};
use crate::phasespace::PhasePoint;
use crate::rng::{complex_normal, substream, Domain};
use crate::sde::MIDPOINT_ITERATIONS;
use crate::stats::{effective_batch_size, DEFAULT_BATCH_SIZE};

pub const N_FIELDS: usize = 10;

/// Field slots; partners follow the five primary fields in the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Psi = 0,
    Phi1a = 1,
    Phi2a = 2,
    Phi1b = 3,
    Phi2b = 4,
    PsiPlus = 5,
    Phi1aPlus = 6,
    Phi2aPlus = 7,
    Phi1bPlus = 8,
    Phi2bPlus = 9,
}

impl Field {
    pub const ALL: [Field; N_FIELDS] = [
        Field::Psi,
        Field::Phi1a,
        Field::Phi2a,
        Field::Phi1b,
        Field::Phi2b,
        Field::PsiPlus,
        Field::Phi1aPlus,
        Field::Phi2aPlus,
        Field::Phi1bPlus,
        Field::Phi2bPlus,
    ];

    pub fn is_partner(self) -> bool {
        self as usize >= 5
    }

    pub fn is_pump(self) -> bool {
        matches!(self, Field::Psi | Field::PsiPlus)
    }

    pub fn label(self) -> &'static str {
        [
            "Psi", "Phi1a", "Phi2a", "Phi1b", "Phi2b", "Psi+", "Phi1a+", "Phi2a+", "Phi1b+",
            "Phi2b+",
        ][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PumpProfile {
    Constant { amplitude: Complex64 },
    Gaussian { amplitude: Complex64, width: f64 },
}

impl PumpProfile {
    pub fn at(&self, t: f64) -> Complex64 {
        match *self {
            PumpProfile::Constant { amplitude } => amplitude,
            PumpProfile::Gaussian { amplitude, width } => amplitude * (-t * t / (2.0 * width * width)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideConfig {
    /// Signal group-velocity dispersion `k″`.
    pub k2: f64,
    pub k2_p: f64,
    /// Amplitude loss per unit length.
    pub gamma_loss: f64,
    pub gamma_p: f64,
    pub kappa: Complex64,
    pub z_end: f64,
    pub dz: f64,
    pub n_t: usize,
    /// Width `T` of the periodic `t_v` window.
    pub window: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub pump: PumpProfile,
    pub frozen_pump: bool,
    /// Grid cell handed to the estimators; `None` means the centre.
    pub probe: Option<usize>,
    pub record_z: Vec<f64>,
    pub batch_size: usize,
}

impl Default for WaveguideConfig {
    /// The four-mode reduction: one cell, no dispersion or loss, frozen
    /// unit pump, `κ = 1`.
    fn default() -> Self {
        WaveguideConfig {
            k2: 0.0,
            k2_p: 0.0,
            gamma_loss: 0.0,
            gamma_p: 0.0,
            kappa: Complex64::new(1.0, 0.0),
            z_end: 0.1,
            dz: 2e-4,
            n_t: 1,
            window: 1.0,
            seed: 1,
            n_traj: 1 << 16,
            pump: PumpProfile::Constant {
                amplitude: Complex64::new(1.0, 0.0),
            },
            frozen_pump: true,
            probe: None,
            record_z: vec![0.1],
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl WaveguideConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let finite = [
            self.k2,
            self.k2_p,
            self.gamma_loss,
            self.gamma_p,
            self.kappa.re,
            self.kappa.im,
            self.z_end,
            self.dz,
            self.window,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("waveguide parameters must be finite".into());
        }
        if !(self.dz > 0.0) {
            return bad(format!("dz must be positive, got {}", self.dz));
        }
        if !(self.z_end >= self.dz) {
            return bad(format!("z_end {} must be at least dz {}", self.z_end, self.dz));
        }
        if !self.n_t.is_power_of_two() {
            return bad(format!("n_t must be a power of two, got {}", self.n_t));
        }
        if !(self.window > 0.0) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if self.n_traj == 0 {
            return bad("n_traj must be positive".into());
        }
        if let Some(p) = self.probe {
            if p >= self.n_t {
                return bad(format!("probe cell {p} outside grid of {}", self.n_t));
            }
        }
        if self.record_z.is_empty() {
            return bad("record_z must not be empty".into());
        }
        for w in self.record_z.windows(2) {
            if !(w[0] <= w[1]) {
                return bad("record_z must be sorted".into());
            }
        }
        if self
            .record_z
            .iter()
            .any(|&z| !(0.0..=self.z_end * (1.0 + 1e-12)).contains(&z))
        {
            return bad(format!("record_z must lie in [0, {}]", self.z_end));
        }
        if let PumpProfile::Gaussian { width, .. } = self.pump {
            if !(width > 0.0) {
                return bad("Gaussian pump width must be positive".into());
            }
        }
        Ok(())
    }

    pub fn dt_cell(&self) -> f64 {
        self.window / self.n_t as f64
    }

    pub fn n_steps(&self) -> usize {
        (self.z_end / self.dz).round() as usize
    }

    pub fn probe_cell(&self) -> usize {
        self.probe.unwrap_or(self.n_t / 2)
    }

    /// True when the run reduces exactly to the four-mode model.
    pub fn is_reduction(&self) -> bool {
        self.n_t == 1
            && self.k2 == 0.0
            && self.k2_p == 0.0
            && self.gamma_loss == 0.0
            && self.frozen_pump
            && matches!(self.pump, PumpProfile::Constant { .. })
    }

    /// Effective `κE` of the reduction (`κ*Ψ` at the probe cell).
    pub fn kappa_e(&self) -> Complex64 {
        self.kappa.conj() * self.pump.at(0.0)
    }
}

/// Angular frequencies of the DFT bins for `n` points over window `T`.
pub fn omega_grid(n: usize, window: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * k / window
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub z: f64,
    pub window: f64,
    fields: Vec<Vec<Complex64>>,
}

impl FieldState {
    /// All fields zero.
    pub fn vacuum(n_t: usize, window: f64) -> Self {
        FieldState {
            z: 0.0,
            window,
            fields: vec![vec![Complex64::new(0.0, 0.0); n_t]; N_FIELDS],
        }
    }

    /// Vacuum signals with a coherent pump (`Ψ⁺ = Ψ*`).
    pub fn with_pump(n_t: usize, window: f64, pump: &PumpProfile) -> Self {
        let mut s = Self::vacuum(n_t, window);
        let times = s.times();
        for (j, t) in times.into_iter().enumerate() {
            let v = pump.at(t);
            s.fields[Field::Psi as usize][j] = v;
            s.fields[Field::PsiPlus as usize][j] = v.conj();
        }
        s
    }

    pub fn n_t(&self) -> usize {
        self.fields[0].len()
    }

    pub fn dt_cell(&self) -> f64 {
        self.window / self.n_t() as f64
    }

    /// Cell centres `t_j = −T/2 + jΔt`.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt_cell();
        (0..self.n_t()).map(|j| -self.window / 2.0 + j as f64 * dt).collect()
    }

    pub fn field(&self, f: Field) -> &[Complex64] {
        &self.fields[f as usize]
    }

    pub fn field_mut(&mut self, f: Field) -> &mut [Complex64] {
        &mut self.fields[f as usize]
    }

    /// Sets a field and its partner to a coherent profile (`partner = conj`).
    pub fn set_coherent(&mut self, f: Field, values: &[Complex64]) {
        let partner = (f as usize + 5) % N_FIELDS;
        self.fields[f as usize].copy_from_slice(values);
        for (d, v) in self.fields[partner].iter_mut().zip(values) {
            *d = v.conj();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Polarizing-beam-splitter relabeling at the output plane: polarization
    /// `a` goes to site A and `b` to site B, and the spatial index becomes
    /// the polarization label, so `(Φ₁ᵃ, Φ₂ᵃ, Φ₁ᵇ, Φ₂ᵇ) → (α₁, α₂, β₁, β₂)`.
    /// Flux amplitudes are scaled by `√Δt` to mode amplitudes.
    pub fn cell_point(&self, j: usize) -> Result<PhasePoint> {
        let s = self.dt_cell().sqrt();
        let pick = |fs: [Field; 4]| fs.map(|f| self.fields[f as usize][j] * s);
        PhasePoint::new(
            pick([Field::Phi1a, Field::Phi2a, Field::Phi1b, Field::Phi2b]),
            pick([
                Field::Phi1aPlus,
                Field::Phi2aPlus,
                Field::Phi1bPlus,
                Field::Phi2bPlus,
            ]),
        )
    }
}

/// Exact linear propagator (dispersion and loss) over a fixed distance.
pub struct LinearStep {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    factors: Vec<Vec<Complex64>>,
    identity: Vec<bool>,
}

impl std::fmt::Debug for LinearStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearStep").field("n", &self.fft.len()).finish()
    }
}

impl LinearStep {
    /// Multiplier `exp((± i k″ω²/2 − γ) h)` per field; `+` for the primary
    /// fields, `−` for the partners.
    pub fn new(cfg: &WaveguideConfig, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(cfg.n_t);
        let ifft = planner.plan_fft_inverse(cfg.n_t);
        let omega = omega_grid(cfg.n_t, cfg.window);
        let mut factors = Vec::with_capacity(N_FIELDS);
        let mut identity = Vec::with_capacity(N_FIELDS);
        for f in Field::ALL {
            let (k2, gamma) = if f.is_pump() {
                (cfg.k2_p, cfg.gamma_p)
            } else {
                (cfg.k2, cfg.gamma_loss)
            };
            let sign = if f.is_partner() { -1.0 } else { 1.0 };
            factors.push(
                omega
                    .iter()
                    .map(|w| Complex64::new(-gamma * h, sign * k2 * w * w / 2.0 * h).exp())
                    .collect(),
            );
            identity.push(k2 == 0.0 && gamma == 0.0);
        }
        LinearStep {
            fft,
            ifft,
            factors,
            identity,
        }
    }

    pub fn factor(&self, f: Field) -> &[Complex64] {
        &self.factors[f as usize]
    }

    pub fn apply(&self, state: &mut FieldState, skip_pump: bool) {
        let n = state.n_t();
        let inv = 1.0 / n as f64;
        for f in Field::ALL {
            let k = f as usize;
            if self.identity[k] || (skip_pump && f.is_pump()) {
                continue;
            }
            let buf = &mut state.fields[k];
            if n == 1 {
                buf[0] *= self.factors[k][0];
                continue;
            }
            self.fft.process(buf);
            for (v, m) in buf.iter_mut().zip(&self.factors[k]) {
                *v *= *m * inv;
            }
            self.ifft.process(buf);
        }
    }
}

type Local = [Complex64; N_FIELDS];

/// Increments for one cell and one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellNoise {
    pub dw: [Complex64; 2],
    pub dw_plus: [Complex64; 2],
}

fn draw_cell_noise<R: Rng + ?Sized>(var: f64, rng: &mut R) -> CellNoise {
    let v = var / 2.0;
    CellNoise {
        dw: [complex_normal(rng, v), complex_normal(rng, v)],
        dw_plus: [complex_normal(rng, v), complex_normal(rng, v)],
    }
}

#[inline]
fn local_drift(x: &Local, kappa: Complex64, frozen: bool) -> Local {
    let kc = kappa.conj();
    let z = Complex64::new(0.0, 0.0);
    let (psi, psip) = (x[0], x[5]);
    [
        if frozen { z } else { -kappa * (x[1] * x[3] + x[2] * x[4]) },
        kc * psi * x[8],
        kc * psi * x[9],
        kc * psi * x[6],
        kc * psi * x[7],
        if frozen { z } else { -kc * (x[6] * x[8] + x[7] * x[9]) },
        kappa * psip * x[3],
        kappa * psip * x[4],
        kappa * psip * x[1],
        kappa * psip * x[2],
    ]
}

/// Noise coefficients `√(κ*Ψ)` and `√(κΨ⁺)`, principal branch.
#[inline]
fn noise_coefficients(x: &Local, kappa: Complex64) -> (Complex64, Complex64) {
    ((kappa.conj() * x[0]).sqrt(), (kappa * x[5]).sqrt())
}

/// Midpoint step of the local coupling at one cell. Returns the new values
/// and the noise coefficients used (for branch tracking).
fn local_step(x0: &Local, kappa: Complex64, frozen: bool, dz: f64, n: &CellNoise) -> (Local, (Complex64, Complex64)) {
    let mut mid = *x0;
    let mut coef = noise_coefficients(&mid, kappa);
    for _ in 0..MIDPOINT_ITERATIONS {
        let d = local_drift(&mid, kappa, frozen);
        coef = noise_coefficients(&mid, kappa);
        let (sa, sp) = coef;
        let noise: Local = [
            Complex64::new(0.0, 0.0),
            sa * n.dw[0],
            sa * n.dw[1],
            sa * n.dw[0].conj(),
            sa * n.dw[1].conj(),
            Complex64::new(0.0, 0.0),
            sp * n.dw_plus[0],
            sp * n.dw_plus[1],
            sp * n.dw_plus[0].conj(),
            sp * n.dw_plus[1].conj(),
        ];
        for i in 0..N_FIELDS {
            mid[i] = x0[i] + (d[i] * dz + noise[i]) * 0.5;
        }
    }
    (std::array::from_fn(|i| mid[i] * 2.0 - x0[i]), coef)
}

/// Per-cell memory of the last noise coefficients; a sign flip between
/// steps means the principal square root jumped branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTracker {
    prev: Vec<(Complex64, Complex64)>,
    pub discontinuities: usize,
}

impl BranchTracker {
    pub fn new(state: &FieldState, kappa: Complex64) -> Self {
        let prev = (0..state.n_t())
            .map(|j| {
                let x: Local = std::array::from_fn(|k| state.fields[k][j]);
                noise_coefficients(&x, kappa)
            })
            .collect();
        BranchTracker {
            prev,
            discontinuities: 0,
        }
    }

    fn update(&mut self, j: usize, now: (Complex64, Complex64)) {
        let (a, b) = self.prev[j];
        if (now.0 * a.conj()).re < 0.0 || (now.1 * b.conj()).re < 0.0 {
            self.discontinuities += 1;
        }
        self.prev[j] = now;
    }
}

/// Noise for every cell of one step, `⟨|dW|²⟩ = dz/Δt`.
pub fn draw_step_noise<R: Rng + ?Sized>(cfg: &WaveguideConfig, rng: &mut R) -> Vec<CellNoise> {
    let var = cfg.dz / cfg.dt_cell();
    (0..cfg.n_t).map(|_| draw_cell_noise(var, rng)).collect()
}

/// One symmetric split step of length `cfg.dz`.
pub fn split_step(
    state: &mut FieldState,
    cfg: &WaveguideConfig,
    half: &LinearStep,
    noise: &[CellNoise],
    branch: &mut BranchTracker,
) -> Result<()> {
    half.apply(state, cfg.frozen_pump);
    if cfg.kappa != Complex64::new(0.0, 0.0) {
        for (j, n) in noise.iter().enumerate() {
            let x: Local = std::array::from_fn(|k| state.fields[k][j]);
            let (y, coef) = local_step(&x, cfg.kappa, cfg.frozen_pump, cfg.dz, n);
            branch.update(j, coef);
            for (k, v) in y.into_iter().enumerate() {
                state.fields[k][j] = v;
            }
        }
    }
    half.apply(state, cfg.frozen_pump);
    state.z += cfg.dz;
    if !state.is_finite() {
        let (field, cell) = Field::ALL
            .iter()
            .flat_map(|&f| (0..state.n_t()).map(move |j| (f, j)))
            .find(|&(f, j)| {
                let v = state.fields[f as usize][j];
                !(v.re.is_finite() && v.im.is_finite())
            })
            .unwrap_or((Field::Psi, 0));
        return Err(Error::NonFinite {
            coordinate: format!("{}[{cell}]", field.label()),
            value: format!("{}", state.fields[field as usize][cell]),
        });
    }
    Ok(())
}

/// Noise-free propagation of an arbitrary state (used for the linear
/// checks: dispersion, loss).
pub fn propagate_deterministic(state: &mut FieldState, cfg: &WaveguideConfig) -> Result<()> {
    let half = LinearStep::new(cfg, cfg.dz / 2.0);
    let zero = vec![
        CellNoise {
            dw: [Complex64::new(0.0, 0.0); 2],
            dw_plus: [Complex64::new(0.0, 0.0); 2],
        };
        cfg.n_t
    ];
    let mut branch = BranchTracker::new(state, cfg.kappa);
    for _ in 0..cfg.n_steps() {
        split_step(state, cfg, &half, &zero, &mut branch)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct WaveguideRun {
    pub record_z: Vec<f64>,
    /// Probe-cell ensembles, one per recorded `z`.
    pub ensembles: Vec<PointSet>,
    /// Trajectories dropped for non-finite fields.
    pub failures: usize,
    /// Trajectories dropped for a square-root branch jump.
    pub branch_failures: usize,
}

enum Outcome {
    Ok(Vec<PhasePoint>),
    NonFinite,
    Branch,
}

fn run_one(cfg: &WaveguideConfig, half: &LinearStep, record_steps: &[usize], index: u64) -> Outcome {
    let mut rng = substream(cfg.seed, Domain::Waveguide, index);
    let mut state = FieldState::with_pump(cfg.n_t, cfg.window, &cfg.pump);
    let mut branch = BranchTracker::new(&state, cfg.kappa);
    let probe = cfg.probe_cell();
    let mut out = Vec::with_capacity(record_steps.len());
    let mut slot = 0;
    let last = *record_steps.last().unwrap_or(&0);
    for s in 0..=last {
        while slot < record_steps.len() && record_steps[slot] == s {
            match state.cell_point(probe) {
                Ok(p) => out.push(p),
                Err(_) => return Outcome::NonFinite,
            }
            slot += 1;
        }
        if s == last {
            break;
        }
        let noise = draw_step_noise(cfg, &mut rng);
        if split_step(&mut state, cfg, half, &noise, &mut branch).is_err() {
            return Outcome::NonFinite;
        }
        if branch.discontinuities > 0 {
            return Outcome::Branch;
        }
    }
    Outcome::Ok(out)
}

/// Stochastic propagation of `cfg.n_traj` trajectories from vacuum signals.
pub fn propagate(cfg: &WaveguideConfig) -> Result<WaveguideRun> {
    cfg.validate()?;
    let half = LinearStep::new(cfg, cfg.dz / 2.0);
    let record_steps: Vec<usize> = cfg
        .record_z
        .iter()
        .map(|z| (z / cfg.dz).round() as usize)
        .collect();
    let n_rec = record_steps.len();
    let batch = effective_batch_size(cfg.n_traj, cfg.batch_size);
    let ranges: Vec<(usize, usize)> = (0..cfg.n_traj)
        .step_by(batch)
        .map(|s| (s, (s + batch).min(cfg.n_traj)))
        .collect();
    let parts: Vec<(Vec<Vec<PhasePoint>>, usize, usize)> = ranges
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut pts = vec![Vec::with_capacity(hi - lo); n_rec];
            let (mut nf, mut br) = (0, 0);
            for i in lo..hi {
                match run_one(cfg, &half, &record_steps, i as u64) {
                    Outcome::Ok(v) => {
                        for (d, p) in pts.iter_mut().zip(v) {
                            d.push(p);
                        }
                    }
                    Outcome::NonFinite => nf += 1,
                    Outcome::Branch => br += 1,
                }
            }
            (pts, nf, br)
        })
        .collect();
    let mut points = vec![Vec::with_capacity(cfg.n_traj); n_rec];
    let (mut failures, mut branch_failures) = (0, 0);
    for (p, nf, br) in parts {
        failures += nf;
        branch_failures += br;
        for (d, s) in points.iter_mut().zip(p) {
            d.extend(s);
        }
    }
    if failures + branch_failures > 0 {
        log::error!("waveguide: {failures} non-finite and {branch_failures} branch-jump trajectories excluded");
    }
    if points[0].is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(WaveguideRun {
        record_z: cfg.record_z.clone(),
        ensembles: points
            .into_iter()
            .map(|p| PointSet::new(p).with_batch_size(batch))
            .collect(),
        failures,
        branch_failures,
    })
}

/// Dispersed Gaussian pulse `exp(−t²/2T₀²)` after distance `z` under
/// `∂zΦ = −(ik″/2)∂²Φ`.
pub fn gaussian_pulse_exact(t: f64, t0: f64, k2: f64, z: f64) -> Complex64 {
    let q = Complex64::new(t0 * t0, -k2 * z);
    (t0 / q.sqrt()) * (-(t * t) / (q * 2.0)).exp()
}

/// Power spectrum `|FFT(x)|²`.
pub fn power_spectrum(x: &[Complex64]) -> Vec<f64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|v| v.norm_sqr()).collect()
}
