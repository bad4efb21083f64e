//! Deterministic pseudorandom substreams.
//!
//! Every unit of parallel work (a batch of static samples, one SDE
//! trajectory, one waveguide trajectory) owns its own ChaCha8 stream,
//! selected from the run seed by a stream index. Results therefore depend
//! only on `(seed, index)` and never on how work is scheduled.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream-index domains, so that different consumers of the same run seed
/// never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    StaticBatch = 0,
    Trajectory = 1,
    Waveguide = 2,
    Auxiliary = 3,
}

const DOMAIN_SHIFT: u32 = 56;

pub fn substream(seed: u64, domain: Domain, index: u64) -> SimRng {
    debug_assert!(index < (1 << DOMAIN_SHIFT));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << DOMAIN_SHIFT) | index);
    rng
}

/// Complex Gaussian with independent real and imaginary parts, each of
/// variance `var_per_component`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var_per_component: f64) -> Complex64 {
    let s = var_per_component.sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
