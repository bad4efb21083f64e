//! Bell statistics from phase-space ensembles.
//!
//! Every statistic here is a linear form in ensemble means, or a ratio of
//! two such forms, so the batch-means machinery in [`crate::stats`] gives
//! its standard error directly. Real parts are taken only after averaging;
//! the imaginary part of each result is reported as a residual.
//!
//! The `*Plan` types register the observables for a whole sweep at once so
//! an ensemble is traversed a single time, then evaluate each sweep entry
//! from the shared accumulator.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::ensemble::{Ensemble, ObservableSet};
use crate::error::{Error, Result};
use crate::phasespace::{
    int_pow, rotate, single_photon_event_weight, two_photon_selection_weight,
    vacuum_projector_weight, EventPattern, ModeSet, PhasePoint, RotatedMode, MAX_POWER,
};
use crate::sampler::PairCount;
use crate::stats::{Estimate, LinearForm, MomentAccumulator};

/// Local-hidden-variable bound used for all three normalized statistics
/// unless configured otherwise.
pub const DEFAULT_LHV_BOUND: f64 = 1.0;

/// A denominator is usable only if its mean exceeds this many standard errors.
pub const DENOMINATOR_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticKind {
    Chd,
    Ch,
    Chsh,
    ChshPostselected,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Chd => "CHD",
            StatisticKind::Ch => "CH",
            StatisticKind::Chsh => "CHSH",
            StatisticKind::ChshPostselected => "CHSH_postselected",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Polarizer settings `θ, φ` (first pair) and `θ′, φ′` (second pair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSet {
    pub theta: f64,
    pub phi: f64,
    pub theta_p: f64,
    pub phi_p: f64,
}

impl Default for AngleSet {
    fn default() -> Self {
        AngleSet::from_relative(PI / 8.0)
    }
}

impl AngleSet {
    pub fn new(theta: f64, phi: f64, theta_p: f64, phi_p: f64) -> Self {
        AngleSet {
            theta,
            phi,
            theta_p,
            phi_p,
        }
    }

    /// `(0, φ, 2φ, 3φ)`: three neighbouring settings a relative angle `φ`
    /// apart and one pair `3φ` apart.
    pub fn from_relative(phi_rel: f64) -> Self {
        AngleSet::new(0.0, phi_rel, 2.0 * phi_rel, 3.0 * phi_rel)
    }

    /// The four `(θ_A, φ_B)` settings with the sign each carries in the
    /// CH and CHSH combinations.
    pub fn settings(&self) -> [(f64, f64, f64); 4] {
        [
            (self.theta, self.phi, 1.0),
            (self.theta, self.phi_p, -1.0),
            (self.theta_p, self.phi, 1.0),
            (self.theta_p, self.phi_p, 1.0),
        ]
    }
}

/// Run parameters attached to a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StatParams {
    pub angles: Option<AngleSet>,
    pub phi_rel: Option<f64>,
    pub n_pairs: Option<u32>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellStatistic {
    pub kind: StatisticKind,
    pub value: f64,
    pub stderr: f64,
    pub imag_residual: f64,
    pub imag_stderr: f64,
    pub n_samples: u64,
    pub params: StatParams,
    pub lhv_bound: f64,
}

impl BellStatistic {
    fn from_estimate(kind: StatisticKind, est: Estimate, params: StatParams) -> Self {
        BellStatistic {
            kind,
            value: est.value.re,
            stderr: est.se_re,
            imag_residual: est.value.im,
            imag_stderr: est.se_im,
            n_samples: est.samples,
            params,
            lhv_bound: DEFAULT_LHV_BOUND,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.lhv_bound = bound;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.params.tau = Some(tau);
        self
    }

    pub fn violates(&self) -> bool {
        self.value > self.lhv_bound
    }

    /// `|Im| ≤ 3 · SE(Im)`.
    pub fn imag_consistent(&self) -> bool {
        self.imag_residual.abs() <= 3.0 * self.imag_stderr
            || self.imag_residual.abs() <= 1e-14 * (1.0 + self.value.abs())
    }

    /// `|value − expected| ≤ k · stderr`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.value - expected).abs() <= k * self.stderr
    }
}

fn stable_denominator(acc: &MomentAccumulator, form: &LinearForm, what: &str) -> Result<()> {
    let e = acc.linear(form)?;
    if e.re() > DENOMINATOR_SIGMAS * e.se_re && e.re() > 0.0 {
        Ok(())
    } else {
        Err(Error::UnstableDenominator {
            what: what.to_string(),
            mean: e.re(),
            stderr: e.se_re,
        })
    }
}

fn check_power(p: u32) -> Result<()> {
    if p == 0 || p > MAX_POWER {
        return Err(Error::config(format!(
            "correlation order must be in 1..={MAX_POWER}, got {p}"
        )));
    }
    Ok(())
}

/// `1 − exp(−γ⃗⁺·γ⃗)`: the phase-space image of `1 − |0⟩⟨0|`. The total
/// quasi-intensity is rotation invariant, so no angles are needed.
pub fn postselection_weight(p: &PhasePoint) -> Complex64 {
    let total: Complex64 = crate::Mode::ALL
        .iter()
        .map(|&m| p.quasi_number(m).value())
        .sum();
    Complex64::new(1.0, 0.0) - (-total).exp()
}

/// Intensity-moment correlators for the CHD inequality over a sweep of
/// relative angles. The A polarizer sits at `θ = 0`.
#[derive(Debug, Clone)]
pub struct ChdPlan {
    pub i: u32,
    pub j: u32,
    pub phis: Vec<f64>,
    g_inf: usize,
    first: usize,
}

impl ChdPlan {
    pub fn register(obs: &mut ObservableSet, i: u32, j: u32, phis: &[f64]) -> Result<Self> {
        check_power(i)?;
        check_power(j)?;
        let g_inf = obs.push(format!("G_inf(I={i},J={j})"), move |p| {
            int_pow(p.quasi_number(crate::Mode::A1).value(), i) * int_pow(p.quasi_number_b(), j)
        });
        let mut labels = Vec::with_capacity(2 * phis.len());
        for &phi in phis {
            labels.push(format!("G({phi})"));
            labels.push(format!("G({})", 3.0 * phi));
        }
        let angles: Vec<f64> = phis.to_vec();
        let first = obs.push_group(labels, move |p, out| {
            let na = int_pow(p.quasi_number(crate::Mode::A1).value(), i);
            for (k, &phi) in angles.iter().enumerate() {
                for (slot, angle) in [(2 * k, phi), (2 * k + 1, 3.0 * phi)] {
                    let rp = rotate(p, 0.0, angle);
                    out[slot] += na * int_pow(rp.quasi_intensity(RotatedMode::DeltaPlus), j);
                }
            }
        });
        Ok(ChdPlan {
            i,
            j,
            phis: phis.to_vec(),
            g_inf,
            first,
        })
    }

    fn g_phi(&self, k: usize) -> usize {
        self.first + 2 * k
    }

    fn g_3phi(&self, k: usize) -> usize {
        self.first + 2 * k + 1
    }

    /// `(G(φ_k), G(∞))`.
    pub fn correlators(&self, acc: &MomentAccumulator, k: usize) -> Result<(Estimate, Estimate)> {
        Ok((
            acc.linear(&LinearForm::single(self.g_phi(k)))?,
            acc.linear(&LinearForm::single(self.g_inf))?,
        ))
    }

    /// Normalized correlation `g(φ_k) = G(φ_k)/G(∞)`.
    pub fn g(&self, acc: &MomentAccumulator, k: usize) -> Result<Estimate> {
        stable_denominator(acc, &LinearForm::single(self.g_inf), "G(inf)")?;
        acc.ratio(&LinearForm::single(self.g_phi(k)), &LinearForm::single(self.g_inf))
    }

    /// `S = (3 g(φ) − g(3φ)) / 2`, as one ratio over the shared `G(∞)`.
    pub fn statistic(&self, acc: &MomentAccumulator, k: usize) -> Result<BellStatistic> {
        let den = LinearForm::single(self.g_inf);
        stable_denominator(acc, &den, "G(inf)")?;
        let num = LinearForm::default()
            .term(self.g_phi(k), 3.0)
            .term(self.g_3phi(k), -1.0);
        let est = acc.ratio(&num, &den.scaled(2.0))?;
        Ok(BellStatistic::from_estimate(
            StatisticKind::Chd,
            est,
            StatParams {
                phi_rel: Some(self.phis[k]),
                n_pairs: (self.i == self.j).then_some(self.i),
                ..Default::default()
            },
        ))
    }

    pub fn statistics(&self, acc: &MomentAccumulator) -> Result<Vec<BellStatistic>> {
        (0..self.phis.len()).map(|k| self.statistic(acc, k)).collect()
    }
}

/// Joint and marginal single-photon probabilities for the CH inequality.
#[derive(Debug, Clone)]
pub struct ChPlan {
    pub angles: Vec<AngleSet>,
    postselect: usize,
    first: usize,
}

// Slots per angle set: four joint ++ probabilities, then P₊^A(θ′), P₊^B(φ).
const CH_WIDTH: usize = 6;

impl ChPlan {
    pub fn register(obs: &mut ObservableSet, angles: &[AngleSet]) -> Self {
        let postselect = obs.push("postselection", postselection_weight);
        let mut labels = Vec::new();
        for (k, _) in angles.iter().enumerate() {
            for s in 0..4 {
                labels.push(format!("P++[{k}][{s}]"));
            }
            labels.push(format!("PA+[{k}]"));
            labels.push(format!("PB+[{k}]"));
        }
        let sets = angles.to_vec();
        let first = obs.push_group(labels, move |p, out| {
            for (k, a) in sets.iter().enumerate() {
                let o = &mut out[k * CH_WIDTH..(k + 1) * CH_WIDTH];
                for (s, &(th, ph, _)) in a.settings().iter().enumerate() {
                    let rp = rotate(p, th, ph);
                    o[s] += single_photon_event_weight(&rp, EventPattern::PlusPlus);
                    if s == 2 {
                        // setting (θ′, φ) serves both marginals
                        o[4] += rp.quasi_intensity(RotatedMode::GammaPlus)
                            * vacuum_projector_weight(&rp, ModeSet::SIDE_A);
                        o[5] += rp.quasi_intensity(RotatedMode::DeltaPlus)
                            * vacuum_projector_weight(&rp, ModeSet::SIDE_B);
                    }
                }
            }
        });
        ChPlan {
            angles: angles.to_vec(),
            postselect,
            first,
        }
    }

    fn base(&self, k: usize) -> usize {
        self.first + k * CH_WIDTH
    }

    fn forms(&self, k: usize) -> (LinearForm, LinearForm) {
        let b = self.base(k);
        let mut num = LinearForm::default();
        for (s, &(_, _, sign)) in self.angles[k].settings().iter().enumerate() {
            num = num.term(b + s, sign);
        }
        let den = LinearForm::default().term(b + 4, 1.0).term(b + 5, 1.0);
        (num, den)
    }

    pub fn joint(&self, acc: &MomentAccumulator, k: usize, setting: usize) -> Result<Estimate> {
        acc.linear(&LinearForm::single(self.base(k) + setting))
    }

    pub fn marginal_a(&self, acc: &MomentAccumulator, k: usize) -> Result<Estimate> {
        acc.linear(&LinearForm::single(self.base(k) + 4))
    }

    pub fn marginal_b(&self, acc: &MomentAccumulator, k: usize) -> Result<Estimate> {
        acc.linear(&LinearForm::single(self.base(k) + 5))
    }

    /// `S_CH`. With `postselect`, every probability is first divided by the
    /// post-selection normalization; the factor cancels in the ratio, so the
    /// value agrees with the plain one to round-off and shares its error.
    pub fn statistic(&self, acc: &MomentAccumulator, k: usize, postselect: bool) -> Result<BellStatistic> {
        let (num, den) = self.forms(k);
        stable_denominator(acc, &den, "CH marginal sum")?;
        let mut est = acc.ratio(&num, &den)?;
        if postselect {
            let norm = LinearForm::single(self.postselect);
            stable_denominator(acc, &norm, "post-selection normalization")?;
            let means = acc.means();
            let d = norm.eval(&means);
            est.value = (num.eval(&means) / d) / (den.eval(&means) / d);
        }
        Ok(BellStatistic::from_estimate(
            StatisticKind::Ch,
            est,
            StatParams {
                angles: Some(self.angles[k]),
                phi_rel: Some(self.angles[k].phi - self.angles[k].theta),
                ..Default::default()
            },
        ))
    }

    pub fn statistics(&self, acc: &MomentAccumulator, postselect: bool) -> Result<Vec<BellStatistic>> {
        (0..self.angles.len())
            .map(|k| self.statistic(acc, k, postselect))
            .collect()
    }
}

/// Four-pattern probabilities at all four settings for the CHSH inequality.
#[derive(Debug, Clone)]
pub struct ChshPlan {
    pub angles: Vec<AngleSet>,
    postselect: usize,
    first: usize,
}

const CHSH_WIDTH: usize = 16;

impl ChshPlan {
    pub fn register(obs: &mut ObservableSet, angles: &[AngleSet]) -> Self {
        let postselect = obs.push("postselection", postselection_weight);
        let mut labels = Vec::new();
        for (k, _) in angles.iter().enumerate() {
            for s in 0..4 {
                for pat in EventPattern::ALL {
                    labels.push(format!("P{pat}[{k}][{s}]"));
                }
            }
        }
        let sets = angles.to_vec();
        let first = obs.push_group(labels, move |p, out| {
            for (k, a) in sets.iter().enumerate() {
                for (s, &(th, ph, _)) in a.settings().iter().enumerate() {
                    let rp = rotate(p, th, ph);
                    let o = &mut out[k * CHSH_WIDTH + 4 * s..k * CHSH_WIDTH + 4 * s + 4];
                    for (slot, pat) in o.iter_mut().zip(EventPattern::ALL) {
                        *slot += single_photon_event_weight(&rp, pat);
                    }
                }
            }
        });
        ChshPlan {
            angles: angles.to_vec(),
            postselect,
            first,
        }
    }

    fn e_form(&self, k: usize, setting: usize) -> LinearForm {
        let b = self.first + k * CHSH_WIDTH + 4 * setting;
        EventPattern::ALL
            .iter()
            .enumerate()
            .fold(LinearForm::default(), |f, (i, pat)| f.term(b + i, pat.sign()))
    }

    pub fn probability(&self, acc: &MomentAccumulator, k: usize, setting: usize, pattern: EventPattern) -> Result<Estimate> {
        let i = EventPattern::ALL.iter().position(|&p| p == pattern).unwrap_or(0);
        acc.linear(&LinearForm::single(self.first + k * CHSH_WIDTH + 4 * setting + i))
    }

    fn maybe_normalized(&self, acc: &MomentAccumulator, form: &LinearForm, postselect: bool) -> Result<Estimate> {
        if postselect {
            let norm = LinearForm::single(self.postselect);
            stable_denominator(acc, &norm, "post-selection normalization")?;
            acc.ratio(form, &norm)
        } else {
            acc.linear(form)
        }
    }

    /// `E` at one of the four settings of angle set `k`.
    pub fn correlation(&self, acc: &MomentAccumulator, k: usize, setting: usize, postselect: bool) -> Result<Estimate> {
        self.maybe_normalized(acc, &self.e_form(k, setting), postselect)
    }

    pub fn statistic(&self, acc: &MomentAccumulator, k: usize, postselect: bool) -> Result<BellStatistic> {
        let mut form = LinearForm::default();
        for (s, &(_, _, sign)) in self.angles[k].settings().iter().enumerate() {
            for (idx, c) in self.e_form(k, s).terms {
                form = form.term(idx, 0.5 * sign * c);
            }
        }
        let est = self.maybe_normalized(acc, &form, postselect)?;
        let kind = if postselect {
            StatisticKind::ChshPostselected
        } else {
            StatisticKind::Chsh
        };
        Ok(BellStatistic::from_estimate(
            kind,
            est,
            StatParams {
                angles: Some(self.angles[k]),
                phi_rel: Some(self.angles[k].phi - self.angles[k].theta),
                ..Default::default()
            },
        ))
    }

    pub fn statistics(&self, acc: &MomentAccumulator, postselect: bool) -> Result<Vec<BellStatistic>> {
        (0..self.angles.len())
            .map(|k| self.statistic(acc, k, postselect))
            .collect()
    }
}

/// `(G(φ), G(∞))` with `G(φ) = ⟨(γ₊⁺γ₊)^I (δ₊⁺δ₊)^J⟩` at `θ = 0` and
/// `G(∞) = ⟨(γ₊⁺γ₊)^I (β₁⁺β₁ + β₂⁺β₂)^J⟩`.
pub fn correlator_g<E: Ensemble + ?Sized>(
    ens: &E,
    i: u32,
    j: u32,
    phi_rel: f64,
) -> Result<(Estimate, Estimate)> {
    let mut obs = ObservableSet::new();
    let plan = ChdPlan::register(&mut obs, i, j, &[phi_rel])?;
    plan.correlators(&ens.accumulate(&obs)?, 0)
}

/// `S_CHD(φ)` with `I = J = N`.
pub fn s_chd<E: Ensemble + ?Sized>(ens: &E, n: PairCount, phi_rel: f64) -> Result<BellStatistic> {
    let mut obs = ObservableSet::new();
    let plan = ChdPlan::register(&mut obs, n.get(), n.get(), &[phi_rel])?;
    plan.statistic(&ens.accumulate(&obs)?, 0)
}

pub fn prob_joint<E: Ensemble + ?Sized>(
    ens: &E,
    theta: f64,
    phi: f64,
    pattern: EventPattern,
) -> Result<Estimate> {
    let mut obs = ObservableSet::new();
    obs.push(format!("P{pattern}"), move |p| {
        single_photon_event_weight(&rotate(p, theta, phi), pattern)
    });
    ens.accumulate(&obs)?.linear(&LinearForm::single(0))
}

/// Event-selection variant of the joint probability: one photon in each of
/// the four output ports.
pub fn prob_two_photon_selection<E: Ensemble + ?Sized>(ens: &E, theta: f64, phi: f64) -> Result<Estimate> {
    let mut obs = ObservableSet::new();
    obs.push("P_select", move |p| two_photon_selection_weight(&rotate(p, theta, phi)));
    ens.accumulate(&obs)?.linear(&LinearForm::single(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Probability of one photon in the `+` port and none in the `−` port on
/// one side, whatever happens on the other.
pub fn prob_marginal<E: Ensemble + ?Sized>(ens: &E, side: Side, angle: f64) -> Result<Estimate> {
    let mut obs = ObservableSet::new();
    obs.push("P+", move |p| match side {
        Side::A => {
            let rp = rotate(p, angle, 0.0);
            rp.quasi_intensity(RotatedMode::GammaPlus) * vacuum_projector_weight(&rp, ModeSet::SIDE_A)
        }
        Side::B => {
            let rp = rotate(p, 0.0, angle);
            rp.quasi_intensity(RotatedMode::DeltaPlus) * vacuum_projector_weight(&rp, ModeSet::SIDE_B)
        }
    });
    ens.accumulate(&obs)?.linear(&LinearForm::single(0))
}

pub fn s_ch<E: Ensemble + ?Sized>(ens: &E, angles: AngleSet, postselect: bool) -> Result<BellStatistic> {
    let mut obs = ObservableSet::new();
    let plan = ChPlan::register(&mut obs, &[angles]);
    plan.statistic(&ens.accumulate(&obs)?, 0, postselect)
}

/// `E(θ, φ) = P₊₊ + P₋₋ − P₊₋ − P₋₊`, optionally post-selected.
pub fn correlation_e<E: Ensemble + ?Sized>(ens: &E, theta: f64, phi: f64, postselect: bool) -> Result<Estimate> {
    let mut obs = ObservableSet::new();
    // the first setting of this set is (θ, φ)
    let plan = ChshPlan::register(&mut obs, &[AngleSet::new(theta, phi, theta, phi)]);
    plan.correlation(&ens.accumulate(&obs)?, 0, 0, postselect)
}

pub fn s_chsh<E: Ensemble + ?Sized>(ens: &E, angles: AngleSet, postselect: bool) -> Result<BellStatistic> {
    let mut obs = ObservableSet::new();
    let plan = ChshPlan::register(&mut obs, &[angles]);
    plan.statistic(&ens.accumulate(&obs)?, 0, postselect)
}
