//! Simulation and edge-weight estimation for max-linear Bayesian networks
//! observed under multiplicative log-normal noise.
//!
//! * [`tropical`]: max-plus matrices, Kleene star, polytrope facets.
//! * [`network`]: weighted DAGs, ancestors, atoms of coordinate differences,
//!   path occupancy.
//! * [`simulate`]: Fréchet innovations, noisy max-plus propagation, CSV I/O.
//! * [`gmm`]: minimum estimator and the Gaussian-mixture smallest-peak estimator.
//! * [`qp`]: hyperplane fit by quadratic programming.
//! * [`bench`]: experiment drivers.

pub mod bench;
pub mod error;
pub mod gmm;
pub mod network;
mod one_based;
pub mod presets;
pub mod qp;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod tropical;

pub use error::{Error, Result};
