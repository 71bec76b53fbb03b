//! Randomization-based inference under restricted randomization.
//!
//! `condrand` computes exact and Monte Carlo conditional randomization tests
//! for Efron's biased coin design and complete randomization, monitors them
//! sequentially with alpha-spending boundaries, and measures trial progress
//! with a randomization-based information fraction.
//!
//! | module | what it provides |
//! |---|---|
//! | [`design`] | procedures, treatment sequences, unconditional simulation |
//! | [`exact_dist`] | exact unconditional and conditional laws of `N_1(n)` |
//! | [`sampler`] | direct sampling from conditional and multi-look reference sets |
//! | [`ranktest`] | score vectors and linear rank statistics |
//! | [`mc`] | Monte Carlo p-values and sample-size planning |
//! | [`monitor`] | spending functions and sequential boundary estimation |
//! | [`covinfo`] | conditional covariance of assignments, information fractions |
//! | [`oracle`] | brute-force enumeration and exact DP ground truth |
//! | [`tables`] | reproduction harness for the reference tables |
//! | [`cli`] | command-line surface used by the `condrand` binary |
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod covinfo;
pub mod design;
pub mod error;
pub mod exact_dist;
pub mod io;
pub mod mc;
pub mod monitor;
pub mod numeric;
pub mod oracle;
pub mod quantile;
pub mod ranktest;
pub mod rng;
pub mod sampler;
pub mod tables;

pub use design::{DesignKind, DesignSpec, TreatmentSequence};
pub use error::{Error, Result};
pub use ranktest::{ScoreKind, ScoreVector};
pub use sampler::LookSchedule;
