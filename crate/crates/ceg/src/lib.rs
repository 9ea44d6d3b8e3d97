//! Exact inference for continuous-time chain event graphs.
//!
//! The crate compiles coloured event trees into chain event graphs,
//! propagates compatible evidence (including point temporal evidence)
//! through a two-pass backward/forward algorithm, answers arrival-time
//! route queries, unrolls dynamic templates over passage-slices, and
//! forecasts future behaviour through the semi-Markov representation of
//! the adapted template. An enumeration oracle independently recomputes
//! every inference for differential testing.
//!
//! Monte Carlo samplers fan out with rayon when the default `parallel`
//! feature is enabled; the sequential fallback produces bit-identical
//! output because every trajectory owns a seeded stream.

pub mod distributions;
pub mod dynamic;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod staging;

mod par;

pub use error::{CegError, Result};
