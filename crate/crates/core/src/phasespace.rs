//! Positive-P phase-space points, polarizer rotations and the quasi-observable
//! kernels every estimator is built from.
//!
//! A [`PhasePoint`] holds the four mode amplitudes in the fixed order
//! `(A1, A2, B1, B2)` together with four independent conjugate-role
//! amplitudes. Off the hermitian diagonal `alpha_plus != conj(alpha)`, so a
//! quasi-intensity `m⁺ m` is a complex number; only its ensemble mean is a
//! physical (real) expectation value.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest power accepted by [`quasi_intensity_power`].
pub const MAX_POWER: u32 = 32;

/// Input modes in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    A1 = 0,
    A2 = 1,
    B1 = 2,
    B2 = 3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A1, Mode::A2, Mode::B1, Mode::B2];

    pub fn label(self) -> &'static str {
        match self {
            Mode::A1 => "A1",
            Mode::A2 => "A2",
            Mode::B1 => "B1",
            Mode::B2 => "B2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    alpha: [Complex64; 4],
    alpha_plus: [Complex64; 4],
}

impl PhasePoint {
    /// Builds a point, rejecting any non-finite coordinate by name.
    pub fn new(alpha: [Complex64; 4], alpha_plus: [Complex64; 4]) -> Result<Self> {
        let p = PhasePoint { alpha, alpha_plus };
        p.check_finite()?;
        Ok(p)
    }

    /// Point on the hermitian diagonal, `alpha_plus = conj(alpha)`.
    pub fn hermitian(alpha: [Complex64; 4]) -> Result<Self> {
        Self::new(alpha, alpha.map(|a| a.conj()))
    }

    pub fn vacuum() -> Self {
        PhasePoint {
            alpha: [Complex64::new(0.0, 0.0); 4],
            alpha_plus: [Complex64::new(0.0, 0.0); 4],
        }
    }

    /// Skips the finiteness check; callers validate before handing the point out.
    pub(crate) fn from_parts_unchecked(alpha: [Complex64; 4], alpha_plus: [Complex64; 4]) -> Self {
        PhasePoint { alpha, alpha_plus }
    }

    pub fn alpha(&self) -> &[Complex64; 4] {
        &self.alpha
    }

    pub fn alpha_plus(&self) -> &[Complex64; 4] {
        &self.alpha_plus
    }

    pub fn amplitude(&self, mode: Mode) -> Complex64 {
        self.alpha[mode as usize]
    }

    pub fn amplitude_plus(&self, mode: Mode) -> Complex64 {
        self.alpha_plus[mode as usize]
    }

    /// `m⁺ m` for one input mode.
    pub fn quasi_number(&self, mode: Mode) -> QuasiNumber {
        QuasiNumber(self.alpha_plus[mode as usize] * self.alpha[mode as usize])
    }

    /// Total quasi-photon number at site B, `β₁⁺β₁ + β₂⁺β₂`.
    pub fn quasi_number_b(&self) -> Complex64 {
        self.alpha_plus[2] * self.alpha[2] + self.alpha_plus[3] * self.alpha[3]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, mode) in Mode::ALL.iter().enumerate() {
            check_coordinate(self.alpha[i], mode.label(), "")?;
            check_coordinate(self.alpha_plus[i], mode.label(), "+")?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.alpha
            .iter()
            .chain(self.alpha_plus.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn check_coordinate(z: Complex64, mode: &str, suffix: &str) -> Result<()> {
    if !z.re.is_finite() {
        return Err(Error::NonFinite {
            coordinate: format!("Re alpha{suffix}[{mode}]"),
            value: z.re.to_string(),
        });
    }
    if !z.im.is_finite() {
        return Err(Error::NonFinite {
            coordinate: format!("Im alpha{suffix}[{mode}]"),
            value: z.im.to_string(),
        });
    }
    Ok(())
}

/// A complex quasi-photon number `n = m⁺ m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNumber(pub Complex64);

impl QuasiNumber {
    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Output ports of the two polarizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotatedMode {
    GammaPlus = 0,
    GammaMinus = 1,
    DeltaPlus = 2,
    DeltaMinus = 3,
}

impl RotatedMode {
    pub const ALL: [RotatedMode; 4] = [
        RotatedMode::GammaPlus,
        RotatedMode::GammaMinus,
        RotatedMode::DeltaPlus,
        RotatedMode::DeltaMinus,
    ];
}

/// Non-empty subset of rotated modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const ALL: ModeSet = ModeSet(0b1111);
    pub const SIDE_A: ModeSet = ModeSet(0b0011);
    pub const SIDE_B: ModeSet = ModeSet(0b1100);

    pub fn from_modes(modes: &[RotatedMode]) -> Result<Self> {
        let bits = modes.iter().fold(0u8, |acc, &m| acc | (1 << m as u8));
        if bits == 0 {
            return Err(Error::config("mode subset must be non-empty"));
        }
        Ok(ModeSet(bits))
    }

    pub fn contains(self, mode: RotatedMode) -> bool {
        self.0 & (1 << mode as u8) != 0
    }
}

/// Polarizer-basis amplitudes `(γ₊, γ₋, δ₊, δ₋)` and partners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedPoint {
    amp: [Complex64; 4],
    amp_plus: [Complex64; 4],
    pub theta: f64,
    pub phi: f64,
}

impl RotatedPoint {
    pub fn amplitude(&self, mode: RotatedMode) -> Complex64 {
        self.amp[mode as usize]
    }

    pub fn amplitude_plus(&self, mode: RotatedMode) -> Complex64 {
        self.amp_plus[mode as usize]
    }

    pub fn gamma_plus(&self) -> Complex64 {
        self.amp[0]
    }

    pub fn gamma_minus(&self) -> Complex64 {
        self.amp[1]
    }

    pub fn delta_plus(&self) -> Complex64 {
        self.amp[2]
    }

    pub fn delta_minus(&self) -> Complex64 {
        self.amp[3]
    }

    /// `m⁺ m` for one output port.
    #[inline]
    pub fn quasi_intensity(&self, mode: RotatedMode) -> Complex64 {
        self.amp_plus[mode as usize] * self.amp[mode as usize]
    }

    /// Builds a rotated point directly from port amplitudes (angles set to 0).
    pub fn from_ports(amp: [Complex64; 4], amp_plus: [Complex64; 4]) -> Self {
        RotatedPoint {
            amp,
            amp_plus,
            theta: 0.0,
            phi: 0.0,
        }
    }
}

#[inline]
fn rotate_pair(x1: Complex64, x2: Complex64, c: f64, s: f64) -> (Complex64, Complex64) {
    (x1 * c + x2 * s, -x1 * s + x2 * c)
}

/// Polarizer rotation: angle `theta` at site A, `phi` at site B, applied
/// identically to the amplitudes and their conjugate-role partners.
///
/// Finiteness is guaranteed by [`PhasePoint`]'s constructor, so this cannot fail.
pub fn rotate(point: &PhasePoint, theta: f64, phi: f64) -> RotatedPoint {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let a = &point.alpha;
    let ap = &point.alpha_plus;
    let (gp, gm) = rotate_pair(a[0], a[1], ct, st);
    let (dp, dm) = rotate_pair(a[2], a[3], cp, sp);
    let (gpp, gmp) = rotate_pair(ap[0], ap[1], ct, st);
    let (dpp, dmp) = rotate_pair(ap[2], ap[3], cp, sp);
    RotatedPoint {
        amp: [gp, gm, dp, dm],
        amp_plus: [gpp, gmp, dpp, dmp],
        theta,
        phi,
    }
}

/// Integer power by repeated multiplication.
#[inline]
pub fn int_pow(base: Complex64, power: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..power {
        acc *= base;
    }
    acc
}

/// `(m⁺)^power m^power`, the phase-space image of `(c†)^I c^I`.
pub fn quasi_intensity_power(rp: &RotatedPoint, mode: RotatedMode, power: u32) -> Result<Complex64> {
    if power > MAX_POWER {
        return Err(Error::config(format!(
            "quasi-intensity power {power} exceeds limit {MAX_POWER}"
        )));
    }
    Ok(int_pow(rp.quasi_intensity(mode), power))
}

/// `exp(-Σ m⁺ m)` over the given ports.
pub fn vacuum_projector_weight(rp: &RotatedPoint, modes: ModeSet) -> Complex64 {
    let exponent: Complex64 = RotatedMode::ALL
        .iter()
        .filter(|&&m| modes.contains(m))
        .map(|&m| rp.quasi_intensity(m))
        .sum();
    (-exponent).exp()
}

/// Single-photon detection pattern: outcome at A, outcome at B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventPattern {
    PlusPlus,
    PlusMinus,
    MinusPlus,
    MinusMinus,
}

impl EventPattern {
    pub const ALL: [EventPattern; 4] = [
        EventPattern::PlusPlus,
        EventPattern::PlusMinus,
        EventPattern::MinusPlus,
        EventPattern::MinusMinus,
    ];

    /// Ports that carry the photon at A and at B.
    pub fn ports(self) -> (RotatedMode, RotatedMode) {
        use RotatedMode::*;
        match self {
            EventPattern::PlusPlus => (GammaPlus, DeltaPlus),
            EventPattern::PlusMinus => (GammaPlus, DeltaMinus),
            EventPattern::MinusPlus => (GammaMinus, DeltaPlus),
            EventPattern::MinusMinus => (GammaMinus, DeltaMinus),
        }
    }

    /// Product of the two spin outcomes, as used in `E(θ, φ)`.
    pub fn sign(self) -> f64 {
        match self {
            EventPattern::PlusPlus | EventPattern::MinusMinus => 1.0,
            EventPattern::PlusMinus | EventPattern::MinusPlus => -1.0,
        }
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventPattern::PlusPlus => "++",
            EventPattern::PlusMinus => "+-",
            EventPattern::MinusPlus => "-+",
            EventPattern::MinusMinus => "--",
        })
    }
}

/// Projector kernel onto exactly one photon in each of the two selected
/// ports and none in the other two: `m_A m_A⁺ m_B m_B⁺ exp(-γ⃗⁺·γ⃗)`.
pub fn single_photon_event_weight(rp: &RotatedPoint, pattern: EventPattern) -> Complex64 {
    let (a, b) = pattern.ports();
    rp.quasi_intensity(a) * rp.quasi_intensity(b) * vacuum_projector_weight(rp, ModeSet::ALL)
}

/// Event-selection kernel: one photon in each of the four ports.
pub fn two_photon_selection_weight(rp: &RotatedPoint) -> Complex64 {
    RotatedMode::ALL
        .iter()
        .map(|&m| rp.quasi_intensity(m))
        .product::<Complex64>()
        * vacuum_projector_weight(rp, ModeSet::ALL)
}
