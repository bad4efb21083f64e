//! Sample ensembles and the observables evaluated over them.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phasespace::PhasePoint;
use crate::stats::{effective_batch_size, MomentAccumulator, DEFAULT_BATCH_SIZE};

type ObservableFn = dyn Fn(&PhasePoint, &mut [Complex64]) + Send + Sync;

/// A labelled per-sample function filling one or more consecutive slots.
/// The function adds its values into the slice it is handed.
pub struct Observable {
    pub labels: Vec<String>,
    f: Box<ObservableFn>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable").field("labels", &self.labels).finish()
    }
}

/// Ordered list of observables; indices returned by [`ObservableSet::push`]
/// address the accumulator slots.
#[derive(Debug, Default)]
pub struct ObservableSet {
    items: Vec<Observable>,
    width: usize,
}

impl ObservableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push<F>(&mut self, label: impl Into<String>, f: F) -> usize
    where
        F: Fn(&PhasePoint) -> Complex64 + Send + Sync + 'static,
    {
        self.push_group(vec![label.into()], move |p, out| out[0] += f(p))
    }

    /// Registers `labels.len()` slots filled by one function; returns the
    /// index of the first slot.
    pub fn push_group<F>(&mut self, labels: Vec<String>, f: F) -> usize
    where
        F: Fn(&PhasePoint, &mut [Complex64]) + Send + Sync + 'static,
    {
        let first = self.width;
        self.width += labels.len();
        self.items.push(Observable {
            labels,
            f: Box::new(f),
        });
        first
    }

    /// Number of slots.
    pub fn len(&self) -> usize {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.items
            .iter()
            .flat_map(|o| o.labels.iter().map(|s| s.as_str()))
    }

    #[inline]
    pub fn add_into(&self, p: &PhasePoint, sums: &mut [Complex64]) {
        let mut at = 0;
        for o in &self.items {
            let w = o.labels.len();
            (o.f)(p, &mut sums[at..at + w]);
            at += w;
        }
    }

    pub fn eval(&self, p: &PhasePoint) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.width];
        self.add_into(p, &mut out);
        out
    }
}

/// Anything that can produce batch-means statistics of a set of observables.
pub trait Ensemble: Sync {
    fn n_samples(&self) -> usize;

    fn accumulate(&self, obs: &ObservableSet) -> Result<MomentAccumulator>;
}

/// Per-batch observable sums, folded in batch order so the result does not
/// depend on the worker count.
pub(crate) fn fold_batches(dim: usize, batches: Vec<(Vec<Complex64>, u64)>) -> MomentAccumulator {
    let mut acc = MomentAccumulator::new(dim);
    for (sums, count) in &batches {
        acc.push_batch(sums, *count);
    }
    acc
}

/// A materialized set of phase-space points.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: Vec<PhasePoint>,
    batch_size: usize,
}

impl PointSet {
    pub fn new(points: Vec<PhasePoint>) -> Self {
        PointSet {
            points,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Ensemble for PointSet {
    fn n_samples(&self) -> usize {
        self.points.len()
    }

    fn accumulate(&self, obs: &ObservableSet) -> Result<MomentAccumulator> {
        if self.points.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let batch = effective_batch_size(self.points.len(), self.batch_size);
        let dim = obs.len();
        let batches: Vec<_> = self
            .points
            .par_chunks(batch)
            .map(|chunk| {
                let mut sums = vec![Complex64::new(0.0, 0.0); dim];
                for p in chunk {
                    obs.add_into(p, &mut sums);
                }
                (sums, chunk.len() as u64)
            })
            .collect();
        Ok(fold_batches(dim, batches))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_point_set_is_an_error() {
        let mut obs = ObservableSet::new();
        obs.push("one", |_| Complex64::new(1.0, 0.0));
        assert_eq!(
            PointSet::new(vec![]).accumulate(&obs).unwrap_err(),
            Error::EmptyEnsemble
        );
    }

    #[test]
    fn accumulates_means() {
        let pts = vec![PhasePoint::vacuum(); 10];
        let mut obs = ObservableSet::new();
        let k = obs.push("two", |_| Complex64::new(2.0, -1.0));
        let acc = PointSet::new(pts).with_batch_size(2).accumulate(&obs).unwrap();
        assert_eq!(acc.mean(k), Complex64::new(2.0, -1.0));
        assert_eq!(acc.batches(), 5);
    }

    #[test]
    fn grouped_slots_follow_singles() {
        let mut obs = ObservableSet::new();
        let a = obs.push("a", |_| Complex64::new(1.0, 0.0));
        let g = obs.push_group(vec!["x".into(), "y".into()], |_, out| {
            out[0] += Complex64::new(2.0, 0.0);
            out[1] += Complex64::new(3.0, 0.0);
        });
        let b = obs.push("b", |_| Complex64::new(4.0, 0.0));
        assert_eq!((a, g, b, obs.len()), (0, 1, 3, 4));
        let v: Vec<f64> = obs.eval(&PhasePoint::vacuum()).iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(obs.labels().collect::<Vec<_>>(), vec!["a", "x", "y", "b"]);
    }
}
