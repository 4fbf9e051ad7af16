//! Strong-field ionization of a model atom driven by quantum light.

pub mod config;
pub mod container;
pub mod converge;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod metrics;
pub mod photon;
pub mod pipeline;
pub mod propagate;
pub mod quadrature;
pub mod spectra;
pub mod tridiag;

pub use error::{Error, Result};
