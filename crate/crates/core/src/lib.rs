//! Grid-based approximate nonlinear filtering of a Markov-evolving wireless
//! channel state, and sequential channel-gain prediction at arbitrary points.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: uniform quantization of the state box and the cell centers.
//! - [`markov`]: state dynamics and Monte-Carlo transition matrices.
//! - [`channel`]: path loss, isotropic shadowing kernel, Gaussian likelihoods
//!   and synthetic measurements.
//! - [`filter`]: the recursive grid filter and its exhaustive oracle.
//! - [`spatial`]: kriging-based channel-gain prediction at query points.

pub mod channel;
pub mod error;
pub mod filter;
pub mod grid;
pub mod markov;
pub mod seeding;
pub mod spatial;

pub use error::{Error, Result};
