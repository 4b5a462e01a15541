//! Stochastic mirror descent dynamics in nonatomic routing games, with
//! differential-privacy accounting for the sequence of noisy path losses
//! released to the populations.
//!
//! - [`network`]: graphs, OD pairs, simple paths, incidence matrices
//! - [`game`]: edge flows, path losses, Rosenthal potential, Nash gap
//! - [`dynamics`]: Bregman geometries and the per-population update
//! - [`privacy`]: sensitivity constants, Gaussian mechanism, composition
//! - [`sim`]: noisy trajectories and Monte Carlo statistics
//! - [`config`]: JSON experiment configuration

// `!(x > 0.0)` style checks deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod network;
pub mod privacy;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
