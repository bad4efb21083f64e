//! Positive-P phase-space Monte Carlo for Bell-inequality violations.
//!
//! Two routes produce ensembles of [`PhasePoint`]s:
//!
//! * [`sampler`]: exact rejection sampling of the canonical positive-P
//!   distribution of the N-pair Bell state;
//! * [`sde`]: stochastic time evolution of the four-mode parametric
//!   down-conversion model from the vacuum (and [`waveguide`], its
//!   multi-mode propagation extension).
//!
//! [`estimators`] turns ensembles into CHD, CH and CHSH statistics with
//! batch-means standard errors, and [`oracle`] provides closed-form and
//! Fock-basis predictions to check them against.

pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod oracle;
pub mod phasespace;
pub mod rng;
pub mod sampler;
pub mod sde;
pub mod stats;
pub mod waveguide;

pub use ensemble::{Ensemble, ObservableSet, PointSet};
pub use error::{Error, Result};
pub use estimators::{AngleSet, BellStatistic, StatisticKind};
pub use phasespace::{EventPattern, Mode, PhasePoint, RotatedMode, RotatedPoint};
pub use sampler::{PairCount, StaticEnsemble};
pub use sde::{SdeConfig, TrajectorySet};
pub use stats::{Estimate, LinearForm, MomentAccumulator};

pub use num_complex::Complex64;
