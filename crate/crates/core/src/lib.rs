//! Monte Carlo and exact tools for small-ball probabilities, eigenvalue gaps and
//! least singular values of random symmetric matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod rng;
pub mod stats;
pub mod ensembles;
pub mod spectral;
pub mod geometry;
pub mod arithmetic;
pub mod smallball;
pub mod experiments;

mod quad;

pub use error::{Error, Result};
pub use rng::StreamKey;
pub use stats::{wilson_interval, Proportion};
pub use ensembles::{make_dist, psi2_estimate, sample_symmetric, Atom, DistKind, DistSpec, MatrixProfile, SymMatrix};
pub use experiments::{fit_exponent, run_tail_experiment, ExponentFit, Statistic, TailCurve, TailPoint};
