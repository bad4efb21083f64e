//! Exact sampling of the canonical positive-P distribution of the N-pair
//! Bell state `|N_B⟩ ∝ (a₁†b₁† + a₂†b₂†)^N |0⟩`.
//!
//! In sum/difference variables `μ = (α + α⁺*)/2`, `ν = (α − α⁺*)/2` the
//! distribution factorizes into a Gaussian in the eight real `ν`
//! coordinates (variance 1/2 each, sampled directly) and
//!
//! ```text
//! P(A, B) ∝ |A·B|^{2N} exp(-|A|² - |B|²),   A = (μ_A1, μ_A2), B = (μ_B1, μ_B2)
//! ```
//!
//! with the bilinear product `A·B = A₁B₁ + A₂B₂`. `P(A, B)` is sampled by
//! von Neumann rejection against `P̃(A) P̃(B)`, where
//! `P̃(A) ∝ |A|^{2N} exp(-|A|²)` is a Gamma(N+2) radius-squared times a
//! uniform direction on S³. The acceptance probability is
//! `|A·B|^{2N} / (|A|^{2N} |B|^{2N}) ≤ 1`, with mean `1/(N+1)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::{fold_batches, Ensemble, ObservableSet};
use crate::error::{Error, Result};
use crate::phasespace::PhasePoint;
use crate::rng::{substream, Domain};
use crate::stats::{effective_batch_size, MomentAccumulator, DEFAULT_BATCH_SIZE};

pub const MAX_PAIRS: u32 = 16;
pub const MAX_PROPOSALS: u64 = 1_000_000;

/// Number of photon pairs `N`, `1 ≤ N ≤ 16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairCount(u32);

impl PairCount {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 || n > MAX_PAIRS {
            return Err(Error::config(format!(
                "pair count must be in 1..={MAX_PAIRS}, got {n}"
            )));
        }
        Ok(PairCount(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// `μ` vectors at the two sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuPair {
    pub a: [Complex64; 2],
    pub b: [Complex64; 2],
}

/// `ν` vectors at the two sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPair {
    pub da: [Complex64; 2],
    pub db: [Complex64; 2],
}

/// Uniform direction on the unit sphere in R⁴ (normalized Gaussian vector).
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.map(|x| x / norm);
        }
    }
}

/// Squared radius of a `P̃` draw: Gamma(shape N+2, scale 1).
pub fn sample_radius_sq<R: Rng + ?Sized>(n: PairCount, rng: &mut R) -> f64 {
    radius_law(n).sample(rng)
}

fn radius_law(n: PairCount) -> Gamma<f64> {
    Gamma::new(n.get() as f64 + 2.0, 1.0).expect("shape N+2 is positive")
}

fn tilde_p_from<R: Rng + ?Sized>(law: &Gamma<f64>, rng: &mut R) -> [Complex64; 2] {
    let r = law.sample(rng).sqrt();
    let d = sample_direction(rng);
    [
        Complex64::new(r * d[0], r * d[1]),
        Complex64::new(r * d[2], r * d[3]),
    ]
}

/// One draw from `P̃(A) ∝ |A|^{2N} exp(-|A|²)` on C².
pub fn sample_tilde_p<R: Rng + ?Sized>(n: PairCount, rng: &mut R) -> [Complex64; 2] {
    tilde_p_from(&radius_law(n), rng)
}

fn norm_sq(v: &[Complex64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

/// `|A·B|² / (|A|² |B|²)` with the bilinear product. Errors on a zero-norm input.
pub fn alignment(a: &[Complex64; 2], b: &[Complex64; 2]) -> Result<f64> {
    let na = norm_sq(a);
    let nb = norm_sq(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot = a[0] * b[0] + a[1] * b[1];
    Ok((dot.norm_sqr() / (na * nb)).min(1.0))
}

/// Acceptance probability `|A·B|^{2N} / (|A|^{2N}|B|^{2N})`.
pub fn acceptance_probability(a: &[Complex64; 2], b: &[Complex64; 2], n: PairCount) -> Result<f64> {
    Ok(alignment(a, b)?.powi(n.get() as i32))
}

/// Von Neumann accept/reject step.
pub fn accept<R: Rng + ?Sized>(
    a: &[Complex64; 2],
    b: &[Complex64; 2],
    n: PairCount,
    rng: &mut R,
) -> Result<bool> {
    let p = acceptance_probability(a, b, n)?;
    Ok(rng.random::<f64>() < p)
}

/// Accepted `μ` pair and the number of proposals it took.
pub fn sample_mu_pair<R: Rng + ?Sized>(n: PairCount, rng: &mut R) -> Result<(MuPair, u64)> {
    let law = radius_law(n);
    for proposals in 1..=MAX_PROPOSALS {
        let a = tilde_p_from(&law, rng);
        let b = tilde_p_from(&law, rng);
        match accept(&a, &b, n, rng) {
            Ok(true) => return Ok((MuPair { a, b }, proposals)),
            Ok(false) | Err(Error::ZeroNorm) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::AcceptanceExhausted(MAX_PROPOSALS))
}

/// Eight independent real Gaussians of variance 1/2.
pub fn sample_delta_pair<R: Rng + ?Sized>(rng: &mut R) -> DeltaPair {
    let mut z = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    DeltaPair {
        da: [z(), z()],
        db: [z(), z()],
    }
}

/// Inverts the sum/difference change of variables: `α = μ + ν`, `α⁺ = (μ − ν)*`.
pub fn assemble_point(mu: &MuPair, nu: &DeltaPair) -> PhasePoint {
    let m = [mu.a[0], mu.a[1], mu.b[0], mu.b[1]];
    let d = [nu.da[0], nu.da[1], nu.db[0], nu.db[1]];
    let alpha = std::array::from_fn(|i| m[i] + d[i]);
    let alpha_plus = std::array::from_fn(|i| (m[i] - d[i]).conj());
    PhasePoint::from_parts_unchecked(alpha, alpha_plus)
}

/// One full positive-P sample of `|N_B⟩`.
pub fn sample_bell_point<R: Rng + ?Sized>(n: PairCount, rng: &mut R) -> Result<PhasePoint> {
    let (mu, _) = sample_mu_pair(n, rng)?;
    let nu = sample_delta_pair(rng);
    Ok(assemble_point(&mu, &nu))
}

/// Streaming static ensemble: batch `b` draws from its own substream
/// `(seed, b)`, so the sample stream is fixed by `(seed, n_samples, batch_size)`.
#[derive(Debug, Clone)]
pub struct StaticEnsemble {
    pub n_pairs: PairCount,
    pub n_samples: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl StaticEnsemble {
    pub fn new(n_pairs: PairCount, n_samples: usize, seed: u64) -> Self {
        StaticEnsemble {
            n_pairs,
            n_samples,
            seed,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    fn batch_ranges(&self) -> Vec<(u64, usize)> {
        let bs = effective_batch_size(self.n_samples, self.batch_size);
        (0..self.n_samples)
            .step_by(bs)
            .enumerate()
            .map(|(i, start)| (i as u64, bs.min(self.n_samples - start)))
            .collect()
    }

    /// Draws one batch of points.
    pub fn batch(&self, index: u64, len: usize) -> Result<Vec<PhasePoint>> {
        let mut rng = substream(self.seed, Domain::StaticBatch, index);
        (0..len).map(|_| sample_bell_point(self.n_pairs, &mut rng)).collect()
    }

    /// Materializes the whole ensemble (memory: 128 bytes per sample).
    pub fn points(&self) -> Result<Vec<PhasePoint>> {
        let batches: Vec<Result<Vec<PhasePoint>>> = self
            .batch_ranges()
            .into_par_iter()
            .map(|(i, len)| self.batch(i, len))
            .collect();
        let mut out = Vec::with_capacity(self.n_samples);
        for b in batches {
            out.extend(b?);
        }
        Ok(out)
    }
}

impl Ensemble for StaticEnsemble {
    fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn accumulate(&self, obs: &ObservableSet) -> Result<MomentAccumulator> {
        if self.n_samples == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let dim = obs.len();
        let batches: Vec<Result<(Vec<Complex64>, u64)>> = self
            .batch_ranges()
            .into_par_iter()
            .map(|(i, len)| {
                let mut rng = substream(self.seed, Domain::StaticBatch, i);
                let mut sums = vec![Complex64::new(0.0, 0.0); dim];
                for _ in 0..len {
                    let p = sample_bell_point(self.n_pairs, &mut rng)?;
                    obs.add_into(&p, &mut sums);
                }
                Ok((sums, len as u64))
            })
            .collect();
        let batches = batches.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(fold_batches(dim, batches))
    }
}
