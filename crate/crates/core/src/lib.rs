//! Spectral mixing parameters of finite Markov chains and their estimation
//! from a single trajectory.
//!
//! The crate is organised bottom-up:
//!
//! * [`chain`]: validated transition matrices, stationary distributions,
//!   reversal, dilation, mixing times and simulation;
//! * [`oracle`]: exact gaps of a known matrix, used as ground truth;
//! * [`eigen`]: dense and Lanczos symmetric eigensolvers;
//! * [`stats`]: skipped-chain tallies and smoothed empirical matrices;
//! * [`estimators`]: point estimators of the pseudo-spectral gaps;
//! * [`confidence`]: fully empirical confidence intervals;
//! * [`io`]: matrix and trajectory file formats.

pub mod chain;
pub mod confidence;
pub mod eigen;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod io;
pub mod oracle;
pub mod stats;
pub mod trajectory;

pub use chain::{simulate, DilatedMatrix, Start, StochasticMatrix};
pub use error::{MixError, Result};
pub use stats::{tally, SkippedTallies, SmoothedEstimates};
pub use trajectory::Trajectory;
