//! A laboratory for the two-dimensional Edwards-Anderson Ising spin glass with
//! Gaussian couplings: finite-volume Gibbs sampling, the dual graph of
//! unsatisfied edges, loop-erasing spanning-forest extraction, and the
//! window analysis (bridges, regions, colorings, flip energies) built on it.

pub mod analysis;
pub mod cli;
pub mod disorder;
pub mod enumerate;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod frustration;
pub mod gibbs;
pub mod lattice;
pub mod rng;

pub use error::{Error, Result};
