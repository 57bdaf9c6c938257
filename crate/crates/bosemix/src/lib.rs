//! Ground states of two-component Bose gases at three levels of description:
//! mean-field functional minimisation, the Bogoliubov quadratic correction, and
//! exact diagonalisation on truncated Fock spaces, together with the
//! zero-energy scattering problem and finite-dimensional de Finetti sampling.

pub mod bogoliubov;
pub mod definetti;
pub mod error;
pub mod fock;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod models;
pub mod scattering;

pub use error::{Error, Result};
