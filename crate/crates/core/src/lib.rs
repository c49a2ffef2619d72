//! Upper bounds on the expected simultaneous renewal time of two
//! time-inhomogeneous birth-death chains, with exact dynamic-programming and
//! Monte Carlo checks of every inequality the bounds rest on.
//!
//! The pipeline runs bottom-up:
//!
//! - [`chain_model`]: schedules `alpha(t, i)` and their certified extrema,
//! - [`renewal_kernel`]: first-return laws, renewal sequences, certificates,
//! - [`dominator`]: the random-walk dominating sequence and its moments,
//! - [`bounds`]: `gamma`, `M` and the two bounds on `E[T]`,
//! - [`simulator`]: Monte Carlo estimates of `T`, excess and coupling trials,
//! - [`cli`]: configuration, subcommands and report emission.

pub mod bounds;
pub mod chain_model;
pub mod cli;
pub mod dominator;
pub mod error;
pub mod renewal_kernel;
pub mod simulator;

pub use error::{Error, Result};
