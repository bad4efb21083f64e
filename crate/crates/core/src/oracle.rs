//! Exact quantum predictions used as ground truth.
//!
//! Two kinds: closed forms for the N-pair Bell state and the four-mode
//! down-conversion moments, and a Fock-basis evaluator for the state the
//! down-conversion model produces at time `τ = κE t`,
//!
//! ```text
//! |ψ⟩ = (Σ_n c_n |n⟩_A1 |n⟩_B1) ⊗ (Σ_m c_m |m⟩_A2 |m⟩_B2),   c_n = xⁿ √(1 − x²),  x = tanh τ
//! ```
//!
//! The evaluator rotates each side into the polarizer basis and projects,
//! so it shares no code with the phase-space estimators.

use crate::error::{Error, Result};
use crate::estimators::AngleSet;
use crate::phasespace::EventPattern;

/// Largest truncation tail accepted by [`FockPdcState`].
pub const TAIL_TOLERANCE: f64 = 1e-8;
/// Smallest per-pair truncation.
pub const MIN_N_MAX: usize = 3;
/// Largest squeezing parameter the evaluator is meant for.
pub const MAX_R: f64 = 0.5;

/// `g_N^N(φ) = cos^{2N} φ` for the N-pair Bell state.
pub fn g_exact(n: u32, phi: f64) -> f64 {
    phi.cos().powi(2 * n as i32)
}

/// `(3 g(φ) − g(3φ)) / 2` for the N-pair Bell state.
pub fn s_chd_exact(n: u32, phi: f64) -> f64 {
    (3.0 * g_exact(n, phi) - g_exact(n, 3.0 * phi)) / 2.0
}

/// `⟨α₁⁺α₁⟩ = sinh² τ` for the down-conversion model from vacuum.
pub fn mean_photons(tau: f64) -> f64 {
    tau.sinh().powi(2)
}

/// `⟨α₁β₁⟩ = sinh τ cosh τ`.
pub fn pair_coherence(tau: f64) -> f64 {
    tau.sinh() * tau.cosh()
}

/// Small-τ limit of `S_CH` at relative angle `φ`: `(3cos²φ − cos²3φ)/2`.
/// For the single-photon projectors used here this holds at every τ.
pub fn s_ch_limit(phi: f64) -> f64 {
    s_chd_exact(1, phi)
}

/// Probability of exactly one photon on each side, `|c̃₁|² = 2x²(1 − x²)²`.
pub fn one_pair_probability(r: f64) -> f64 {
    let x2 = r.tanh().powi(2);
    2.0 * x2 * (1.0 - x2).powi(2)
}

/// `P₊₊(θ, φ) = |c̃₁|² cos²(φ − θ) / 2`.
pub fn p_plus_plus(r: f64, theta: f64, phi: f64) -> f64 {
    one_pair_probability(r) * (phi - theta).cos().powi(2) / 2.0
}

/// `P₊₋(θ, φ) = |c̃₁|² sin²(φ − θ) / 2`.
pub fn p_plus_minus(r: f64, theta: f64, phi: f64) -> f64 {
    one_pair_probability(r) * (phi - theta).sin().powi(2) / 2.0
}

/// `P₊^A = x²(1 − x²)²`, independent of the polarizer angle.
pub fn marginal_plus(r: f64) -> f64 {
    one_pair_probability(r) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams {
    pub r: f64,
    pub x: f64,
}

impl SqueezeParams {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::config(format!("squeezing r must be >= 0, got {r}")));
        }
        Ok(SqueezeParams { r, x: r.tanh() })
    }

    /// Normalized two-mode-squeezed amplitude `c_n = xⁿ √(1 − x²)`.
    pub fn c(&self, n: usize) -> f64 {
        self.x.powi(n as i32) * (1.0 - self.x * self.x).sqrt()
    }

    /// Missing probability of the product state truncated at `n_max` per pair.
    pub fn tail(&self, n_max: usize) -> f64 {
        let kept = 1.0 - self.x.powi(2 * (n_max as i32 + 1));
        1.0 - kept * kept
    }
}

/// Truncated Fock representation of the down-conversion state.
#[derive(Debug, Clone, PartialEq)]
pub struct FockPdcState {
    pub params: SqueezeParams,
    pub n_max: usize,
    c: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn falling(n: usize, k: u32) -> f64 {
    (0..k as usize)
        .map(|i| n as f64 - i as f64)
        .map(|v| v.max(0.0))
        .product()
}

/// `⟨p, L−p| U(θ) |n, L−n⟩` for a two-mode rotation with
/// `a₁† = cosθ c₊† − sinθ c₋†`, `a₂† = sinθ c₊† + cosθ c₋†`.
/// Returned as `m[n][p]`.
fn rotation_block(l: usize, angle: f64) -> Vec<Vec<f64>> {
    let (s, c) = angle.sin_cos();
    let mut m = vec![vec![0.0; l + 1]; l + 1];
    for n in 0..=l {
        let k2 = l - n;
        let norm_in = (factorial(n) * factorial(k2)).sqrt();
        for j in 0..=n {
            let a = binomial(n, j) * c.powi(j as i32) * (-s).powi((n - j) as i32);
            for k in 0..=k2 {
                let b = binomial(k2, k) * s.powi(k as i32) * c.powi((k2 - k) as i32);
                let p = j + k;
                let q = l - p;
                m[n][p] += a * b * (factorial(p) * factorial(q)).sqrt() / norm_in;
            }
        }
    }
    m
}

impl FockPdcState {
    /// State with an explicit truncation; fails if the tail is too large.
    pub fn new(r: f64, n_max: usize) -> Result<Self> {
        let params = SqueezeParams::new(r)?;
        if r > MAX_R {
            return Err(Error::config(format!("Fock oracle needs r <= {MAX_R}, got {r}")));
        }
        if n_max < MIN_N_MAX {
            return Err(Error::config(format!("n_max must be >= {MIN_N_MAX}, got {n_max}")));
        }
        let tail = params.tail(n_max);
        if tail > TAIL_TOLERANCE {
            return Err(Error::TruncationTail {
                tail,
                tolerance: TAIL_TOLERANCE,
                r,
                n_max,
            });
        }
        let c = (0..=n_max).map(|n| params.c(n)).collect();
        Ok(FockPdcState { params, n_max, c })
    }

    /// Smallest truncation (at least [`MIN_N_MAX`]) meeting the tail tolerance.
    pub fn auto(r: f64) -> Result<Self> {
        let params = SqueezeParams::new(r)?;
        let mut n = MIN_N_MAX;
        while params.tail(n) > TAIL_TOLERANCE && n < 64 {
            n += 1;
        }
        Self::new(r, n)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// `⟨ψ|ψ⟩` of the truncated state.
    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self.c.iter().map(|v| v * v).sum();
        s * s
    }

    pub fn truncated_norm(&self) -> f64 {
        1.0 - self.params.tail(self.n_max)
    }

    /// Amplitudes in the polarizer basis at angles `θ` (A) and `φ` (B).
    pub fn rotated(&self, theta: f64, phi: f64) -> RotatedFock {
        let blocks = (0..=2 * self.n_max)
            .map(|l| {
                let ra = rotation_block(l, theta);
                let rb = rotation_block(l, phi);
                let mut psi = vec![vec![0.0; l + 1]; l + 1];
                for n in l.saturating_sub(self.n_max)..=l.min(self.n_max) {
                    let amp = self.c[n] * self.c[l - n];
                    for p in 0..=l {
                        if ra[n][p] == 0.0 {
                            continue;
                        }
                        for s in 0..=l {
                            psi[p][s] += amp * ra[n][p] * rb[n][s];
                        }
                    }
                }
                psi
            })
            .collect();
        RotatedFock { blocks }
    }

    pub fn vacuum_probability(&self) -> f64 {
        self.c[0].powi(4)
    }

    /// `⟨1 − |0⟩⟨0|⟩`; zero (degenerate) for the vacuum.
    pub fn postselection_norm(&self) -> Result<f64> {
        // exact for the untruncated state; the truncation only removes
        // terms far from the vacuum
        let d = 1.0 - self.vacuum_probability();
        if d <= 0.0 {
            return Err(Error::Degenerate(
                "post-selection normalization vanishes for the vacuum".into(),
            ));
        }
        Ok(d)
    }

    pub fn prob_joint(&self, theta: f64, phi: f64, pattern: EventPattern) -> f64 {
        self.rotated(theta, phi).prob_joint(pattern)
    }

    pub fn marginal_a(&self, theta: f64) -> f64 {
        self.rotated(theta, 0.0).marginal_a()
    }

    pub fn marginal_b(&self, phi: f64) -> f64 {
        self.rotated(0.0, phi).marginal_b()
    }

    pub fn correlation_e(&self, theta: f64, phi: f64, postselect: bool) -> Result<f64> {
        let rf = self.rotated(theta, phi);
        let e: f64 = EventPattern::ALL
            .iter()
            .map(|&p| p.sign() * rf.prob_joint(p))
            .sum();
        if postselect {
            Ok(e / self.postselection_norm()?)
        } else {
            Ok(e)
        }
    }

    pub fn s_ch(&self, angles: &AngleSet, postselect: bool) -> Result<f64> {
        let norm = if postselect { self.postselection_norm()? } else { 1.0 };
        let num: f64 = angles
            .settings()
            .iter()
            .map(|&(t, p, sign)| sign * self.prob_joint(t, p, EventPattern::PlusPlus) / norm)
            .sum();
        let den = (self.marginal_a(angles.theta_p) + self.marginal_b(angles.phi)) / norm;
        if den <= 0.0 {
            return Err(Error::Degenerate("CH marginal sum vanishes".into()));
        }
        Ok(num / den)
    }

    pub fn s_chsh(&self, angles: &AngleSet, postselect: bool) -> Result<f64> {
        let mut s = 0.0;
        for &(t, p, sign) in angles.settings().iter() {
            s += sign * self.correlation_e(t, p, postselect)?;
        }
        Ok(s / 2.0)
    }

    /// `G(φ) = ⟨:n₊^I: :n_{δ₊}^J:⟩` with the A polarizer at `θ = 0`.
    pub fn g_moment(&self, i: u32, j: u32, phi: f64) -> f64 {
        self.rotated(0.0, phi).moment(i, j)
    }

    /// `G(∞) = ⟨:n_{A1}^I: :(n_{B1} + n_{B2})^J:⟩`.
    pub fn g_moment_inf(&self, i: u32, j: u32) -> f64 {
        self.rotated(0.0, 0.0).moment_inf(i, j)
    }

    pub fn g(&self, i: u32, j: u32, phi: f64) -> Result<f64> {
        let inf = self.g_moment_inf(i, j);
        if inf <= 0.0 {
            return Err(Error::Degenerate("G(inf) vanishes".into()));
        }
        Ok(self.g_moment(i, j, phi) / inf)
    }

    pub fn s_chd(&self, i: u32, j: u32, phi: f64) -> Result<f64> {
        Ok((3.0 * self.g(i, j, phi)? - self.g(i, j, 3.0 * phi)?) / 2.0)
    }
}

/// Polarizer-basis amplitudes grouped by total photon number `L` per side:
/// `blocks[L][p][s]` is the amplitude of `p` photons in `γ₊` (so `L − p`
/// in `γ₋`) and `s` in `δ₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedFock {
    blocks: Vec<Vec<Vec<f64>>>,
}

impl RotatedFock {
    pub fn prob(&self, l: usize, p: usize, s: usize) -> f64 {
        self.blocks
            .get(l)
            .and_then(|b| b.get(p))
            .and_then(|row| row.get(s))
            .map_or(0.0, |a| a * a)
    }

    pub fn prob_joint(&self, pattern: EventPattern) -> f64 {
        let (p, s) = match pattern {
            EventPattern::PlusPlus => (1, 1),
            EventPattern::PlusMinus => (1, 0),
            EventPattern::MinusPlus => (0, 1),
            EventPattern::MinusMinus => (0, 0),
        };
        self.prob(1, p, s)
    }

    /// Exactly one photon at `γ₊`, none at `γ₋`.
    pub fn marginal_a(&self) -> f64 {
        (0..=1).map(|s| self.prob(1, 1, s)).sum()
    }

    pub fn marginal_b(&self) -> f64 {
        (0..=1).map(|p| self.prob(1, p, 1)).sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.blocks.iter().flatten().flatten().map(|a| a * a).sum()
    }

    pub fn moment(&self, i: u32, j: u32) -> f64 {
        let mut m = 0.0;
        for b in &self.blocks {
            for (p, row) in b.iter().enumerate() {
                for (s, a) in row.iter().enumerate() {
                    m += a * a * falling(p, i) * falling(s, j);
                }
            }
        }
        m
    }

    pub fn moment_inf(&self, i: u32, j: u32) -> f64 {
        let mut m = 0.0;
        for (l, b) in self.blocks.iter().enumerate() {
            for (p, row) in b.iter().enumerate() {
                let w: f64 = row.iter().map(|a| a * a).sum();
                m += w * falling(p, i) * falling(l, j);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms() {
        assert_eq!(g_exact(1, 0.0), 1.0);
        assert!((g_exact(1, PI / 4.0) - 0.5).abs() < 1e-15);
        assert!((g_exact(2, PI / 8.0) - 0.728553).abs() < 1e-6);
        assert!((s_chd_exact(1, PI / 8.0) - 1.207107).abs() < 1e-6);
        assert!((s_chd_exact(2, PI / 8.0) - 1.082107).abs() < 1e-6);
        assert!((s_chd_exact(1, 1e-9) - 1.0).abs() < 1e-12);
        assert!((s_chd_exact(1, PI / 4.0) - 0.5).abs() < 1e-15);
        assert!((mean_photons(0.1) - 0.010033).abs() < 1e-6);
        assert!((pair_coherence(0.1) - 0.100668).abs() < 1e-6);
        assert!((marginal_plus(0.1) - 0.00973733).abs() < 1e-8);
        assert!((p_plus_plus(0.1, 0.0, PI / 8.0) - 0.00831133).abs() < 1e-8);
    }

    #[test]
    fn squeeze_params() {
        assert!(SqueezeParams::new(-0.1).is_err());
        let p = SqueezeParams::new(0.2).unwrap();
        let s: f64 = (0..200).map(|n| p.c(n).powi(2)).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn truncation_tail() {
        // three pairs are not enough at r = 0.25
        assert!(matches!(
            FockPdcState::new(0.25, 3),
            Err(Error::TruncationTail { .. })
        ));
        let s = FockPdcState::auto(0.25).unwrap();
        assert!(s.params.tail(s.n_max) < TAIL_TOLERANCE);
        assert_eq!(s.n_max, 6);
        assert!(FockPdcState::new(0.6, 20).is_err());
        assert!(FockPdcState::new(0.1, 2).is_err());
    }

    #[test]
    fn normalization_is_analytic() {
        for r in [0.05, 0.1, 0.25, 0.5] {
            let s = FockPdcState::auto(r).unwrap();
            assert!((s.norm_sqr() - s.truncated_norm()).abs() < 1e-12);
            for (t, p) in [(0.0, 0.0), (0.3, 1.1), (PI / 4.0, 3.0 * PI / 8.0)] {
                let rf = s.rotated(t, p);
                assert!((rf.total_probability() - s.norm_sqr()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_is_degenerate() {
        let s = FockPdcState::auto(0.0).unwrap();
        assert_eq!(s.prob_joint(0.0, 0.3, EventPattern::PlusPlus), 0.0);
        assert_eq!(s.marginal_a(0.2), 0.0);
        assert!(matches!(s.postselection_norm(), Err(Error::Degenerate(_))));
        assert!(matches!(s.s_ch(&AngleSet::default(), false), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fock_agrees_with_closed_forms() {
        let s = FockPdcState::auto(0.1).unwrap();
        assert!((s.marginal_a(0.0) - 0.00973733).abs() < 1e-8);
        assert!((s.marginal_a(PI / 3.0) - marginal_plus(0.1)).abs() < 1e-15);
        assert!((s.marginal_b(0.7) - marginal_plus(0.1)).abs() < 1e-15);
        for (t, p) in [(0.0, PI / 8.0), (0.3, -0.4), (PI / 4.0, 3.0 * PI / 8.0)] {
            let pp = s.prob_joint(t, p, EventPattern::PlusPlus);
            assert!((pp - p_plus_plus(0.1, t, p)).abs() < 1e-15);
            let pm = s.prob_joint(t, p, EventPattern::PlusMinus);
            assert!((pm - p_plus_minus(0.1, t, p)).abs() < 1e-15);
        }
        assert_eq!(s.prob_joint(0.0, 0.0, EventPattern::PlusMinus), 0.0);
        let ch = s.s_ch(&AngleSet::default(), false).unwrap();
        assert!((ch - 1.207107).abs() < 1e-6);
        let ch_ps = s.s_ch(&AngleSet::default(), true).unwrap();
        assert!((ch - ch_ps).abs() < 1e-12);
        // all angles equal gives exactly one
        assert!((s.s_ch(&AngleSet::new(0.2, 0.2, 0.2, 0.2), false).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn postselected_chsh_carries_multi_pair_dilution() {
        let s = FockPdcState::auto(0.1).unwrap();
        let x2 = 0.1f64.tanh().powi(2);
        let dilution = one_pair_probability(0.1) / (1.0 - (1.0 - x2).powi(2));
        let chsh = s.s_chsh(&AngleSet::default(), true).unwrap();
        assert!((chsh - 2f64.sqrt() * dilution).abs() < 1e-12);
        assert!((chsh - 1.3932).abs() < 1e-3);
        let plain = s.s_chsh(&AngleSet::default(), false).unwrap();
        assert!((plain - 2f64.sqrt() * one_pair_probability(0.1)).abs() < 1e-12);
        // E at equal angles post-selected, then the r -> 0 limit
        let small = FockPdcState::auto(1e-4).unwrap();
        assert!((small.correlation_e(0.0, 0.0, true).unwrap() - 1.0).abs() < 1e-7);
        assert!(small.correlation_e(0.0, PI / 4.0, true).unwrap().abs() < 1e-12);
    }

    #[test]
    fn moments_match_two_mode_squeezing() {
        // deep truncation so that n²-weighted tails are negligible
        let s = FockPdcState::new(0.2, 14).unwrap();
        let rf = s.rotated(0.0, 0.0);
        // ⟨n_A1⟩ = sinh² r
        let n_a1 = rf.moment(1, 0);
        assert!((n_a1 - mean_photons(0.2)).abs() < 1e-12);
        // ⟨n_A1 n_B1⟩ = sinh²r (1 + 2 sinh²r) for a two-mode squeezed pair
        let s2 = mean_photons(0.2);
        assert!((rf.moment(1, 1) - s2 * (1.0 + 2.0 * s2)).abs() < 1e-12);
        // ⟨n_A1 (n_B1 + n_B2)⟩ = s²(1 + 2s²) + s⁴
        assert!((rf.moment_inf(1, 1) - (s2 * (1.0 + 2.0 * s2) + s2 * s2)).abs() < 1e-12);
    }

    #[test]
    fn chd_small_r_limit_is_cos_squared() {
        let s = FockPdcState::auto(1e-4).unwrap();
        for phi in [0.0, PI / 16.0, PI / 8.0, PI / 4.0] {
            assert!((s.g(1, 1, phi).unwrap() - g_exact(1, phi)).abs() < 1e-7);
        }
        let s = FockPdcState::auto(0.1).unwrap();
        let s2 = mean_photons(0.1);
        let g = |phi: f64| {
            (phi.cos().powi(2) * (1.0 + 2.0 * s2) + phi.sin().powi(2) * s2) / (1.0 + 3.0 * s2)
        };
        let phi = PI / 8.0;
        assert!((s.g(1, 1, phi).unwrap() - g(phi)).abs() < 1e-8);
        assert!((s.s_chd(1, 1, phi).unwrap() - (3.0 * g(phi) - g(3.0 * phi)) / 2.0).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn rotation_blocks_are_orthogonal(l in 0usize..7, angle in -3.0f64..3.0) {
            let m = rotation_block(l, angle);
            for a in 0..=l {
                for b in 0..=l {
                    let dot: f64 = (0..=l).map(|p| m[a][p] * m[b][p]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn pattern_probabilities_sum_to_one_pair(r in 0.01f64..0.5, t in -1.5f64..1.5, p in -1.5f64..1.5) {
            let s = FockPdcState::auto(r).unwrap();
            let rf = s.rotated(t, p);
            let total: f64 = EventPattern::ALL.iter().map(|&e| rf.prob_joint(e)).sum();
            prop_assert!((total - one_pair_probability(r)).abs() < 1e-12);
        }
    }
}
