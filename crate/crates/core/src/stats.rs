//! Batch-means accumulation of complex observables.
//!
//! Samples are grouped into fixed-size batches. The accumulator keeps the
//! plain sum of every observable (for means) and the first and second
//! moments of the batch means, treated as a real vector of length `2K`
//! (real and imaginary parts interleaved). Standard errors of any linear
//! combination, and first-order errors of ratios of linear combinations,
//! follow from the batch-mean covariance.
//!
//! Accumulators merge by addition, so merging is commutative and (up to
//! round-off) associative.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 1 << 10;

/// Batch size actually used for `n` samples: the requested size when at
/// least two full batches fit, otherwise `n / 2` (at least 1).
pub fn effective_batch_size(n: usize, requested: usize) -> usize {
    let requested = requested.max(1);
    if n >= 2 * requested {
        requested
    } else {
        (n / 2).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    samples: u64,
    batches: u64,
    sum: Vec<Complex64>,
    batch_sum: Vec<f64>,
    batch_cross: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        let r = 2 * dim;
        MomentAccumulator {
            dim,
            samples: 0,
            batches: 0,
            sum: vec![Complex64::new(0.0, 0.0); dim],
            batch_sum: vec![0.0; r],
            batch_cross: vec![0.0; r * r],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    /// Adds one batch given the per-observable sums over its `count` samples.
    pub fn push_batch(&mut self, sums: &[Complex64], count: u64) {
        assert_eq!(sums.len(), self.dim, "observable count mismatch");
        if count == 0 {
            return;
        }
        let inv = 1.0 / count as f64;
        let x: Vec<f64> = sums
            .iter()
            .flat_map(|s| [s.re * inv, s.im * inv])
            .collect();
        let r = x.len();
        for (i, &xi) in x.iter().enumerate() {
            self.batch_sum[i] += xi;
            let row = &mut self.batch_cross[i * r..(i + 1) * r];
            for (cell, &xj) in row.iter_mut().zip(&x) {
                *cell += xi * xj;
            }
        }
        for (acc, s) in self.sum.iter_mut().zip(sums) {
            *acc += *s;
        }
        self.samples += count;
        self.batches += 1;
    }

    /// Convenience for one batch of raw samples (each of length `dim`).
    pub fn push_samples<'a, I>(&mut self, samples: I)
    where
        I: IntoIterator<Item = &'a [Complex64]>,
    {
        let mut sums = vec![Complex64::new(0.0, 0.0); self.dim];
        let mut count = 0u64;
        for s in samples {
            for (acc, v) in sums.iter_mut().zip(s) {
                *acc += *v;
            }
            count += 1;
        }
        self.push_batch(&sums, count);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.dim, other.dim, "observable count mismatch");
        self.samples += other.samples;
        self.batches += other.batches;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += *b;
        }
        for (a, b) in self.batch_sum.iter_mut().zip(&other.batch_sum) {
            *a += *b;
        }
        for (a, b) in self.batch_cross.iter_mut().zip(&other.batch_cross) {
            *a += *b;
        }
    }

    pub fn mean(&self, k: usize) -> Complex64 {
        if self.samples == 0 {
            return Complex64::new(f64::NAN, f64::NAN);
        }
        self.sum[k] / self.samples as f64
    }

    pub fn means(&self) -> Vec<Complex64> {
        (0..self.dim).map(|k| self.mean(k)).collect()
    }

    /// Standard errors of the real and imaginary parts of `Σ c_k mean_k`.
    pub fn linear_stderr(&self, coeffs: &[(usize, Complex64)]) -> Result<(f64, f64)> {
        if self.batches < 2 {
            return Err(Error::TooFewBatches(self.batches));
        }
        let r = 2 * self.dim;
        let mut u = vec![0.0; r];
        let mut v = vec![0.0; r];
        for &(k, c) in coeffs {
            // Re(c m) = c.re m.re - c.im m.im ; Im(c m) = c.im m.re + c.re m.im
            u[2 * k] += c.re;
            u[2 * k + 1] -= c.im;
            v[2 * k] += c.im;
            v[2 * k + 1] += c.re;
        }
        Ok((self.quadratic_stderr(&u), self.quadratic_stderr(&v)))
    }

    fn quadratic_stderr(&self, u: &[f64]) -> f64 {
        let r = u.len();
        let b = self.batches as f64;
        let mut second = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let row = &self.batch_cross[i * r..(i + 1) * r];
            second += ui * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        let first: f64 = u.iter().zip(&self.batch_sum).map(|(a, b)| a * b).sum();
        let var = (second - first * first / b) / (b - 1.0);
        (var.max(0.0) / b).sqrt()
    }

    /// Mean and errors of a linear form.
    pub fn linear(&self, form: &LinearForm) -> Result<Estimate> {
        if self.samples == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let means = self.means();
        let value = form.eval(&means);
        let coeffs: Vec<_> = form
            .terms
            .iter()
            .map(|&(k, a)| (k, Complex64::new(a, 0.0)))
            .collect();
        let (se_re, se_im) = self.linear_stderr(&coeffs)?;
        Ok(Estimate {
            value,
            se_re,
            se_im,
            samples: self.samples,
        })
    }

    /// First-order (delta-method) estimate of `num / den`, including the
    /// numerator-denominator covariance measured across batches.
    pub fn ratio(&self, num: &LinearForm, den: &LinearForm) -> Result<Estimate> {
        if self.samples == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let means = self.means();
        let n = num.eval(&means);
        let d = den.eval(&means);
        let value = n / d;
        let mut grad: Vec<(usize, Complex64)> = Vec::new();
        for &(k, a) in &num.terms {
            grad.push((k, Complex64::new(a, 0.0) / d));
        }
        for &(k, b) in &den.terms {
            grad.push((k, -value * b / d));
        }
        let (se_re, se_im) = self.linear_stderr(&grad)?;
        Ok(Estimate {
            value,
            se_re,
            se_im,
            samples: self.samples,
        })
    }
}

/// Standard error of the real part of observable 0 via batch means.
pub fn stderr_batch(acc: &MomentAccumulator) -> Result<f64> {
    if acc.dim() == 0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(acc.linear_stderr(&[(0, Complex64::new(1.0, 0.0))])?.0)
}

/// `constant + Σ coeff_k · mean_k` over observable indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearForm {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn constant(c: f64) -> Self {
        LinearForm {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn single(k: usize) -> Self {
        LinearForm {
            constant: 0.0,
            terms: vec![(k, 1.0)],
        }
    }

    pub fn term(mut self, k: usize, coeff: f64) -> Self {
        self.terms.push((k, coeff));
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.constant *= factor;
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self
    }

    pub fn eval(&self, means: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .fold(Complex64::new(self.constant, 0.0), |acc, &(k, a)| acc + means[k] * a)
    }
}

/// A complex ensemble estimate with separate errors for real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn re(&self) -> f64 {
        self.value.re
    }

    pub fn im(&self) -> f64 {
        self.value.im
    }

    /// `|Re - expected| <= k · se_re`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.value.re - expected).abs() <= k * self.se_re
    }
}
