//! Numerical laboratory for Brownian motions with oblique point interactions.
//!
//! The crate pairs stochastic simulators (reflected Brownian motions, their
//! smooth-potential approximation and the asymmetric exclusion process) with
//! exact analytic objects (Bethe ansatz transition densities, contour
//! integral generating functions and Fredholm determinants) so that each
//! side can be checked against the other.

pub mod asep;
pub mod asymptotics;
pub mod bethe;
pub mod error;
pub mod fredholm;
pub mod genfun;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod specfun;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Chamber, Config, ModelParams};
