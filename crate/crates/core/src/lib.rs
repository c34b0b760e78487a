//! Work statistics and fluctuation theorems for quenched harmonic oscillators,
//! with the optical analogues used to measure them.
//!
//! Units: `hbar = k_B = 1`; energies are in units of the initial oscillator
//! quantum `hbar * omega` unless stated otherwise.

pub mod charfn;
pub mod error;
pub mod fock;
mod linalg;
pub mod nnls;
pub mod oam;
pub mod paraxial;
pub mod photonic;
pub mod quench;
pub mod scalar;
pub mod state;
pub mod tpm;

pub use error::{Error, Result};
pub use fock::{
    converge, displacement_operator, ladder_operators, squeezing_operator, thermal_populations,
    Converged, ThermalPopulations, TruncatedFockOperator, Truncation,
};
pub use scalar::Real;

pub type FockOperator64 = TruncatedFockOperator<f64>;
pub type ThermalPopulations64 = ThermalPopulations<f64>;
pub type QuenchSpec64 = quench::QuenchSpec<f64>;
pub type DiagonalizedHamiltonian64 = quench::DiagonalizedHamiltonian<f64>;
pub type WorkDistribution64 = tpm::WorkDistribution<f64>;
pub type QuantumState64 = state::QuantumState<f64>;
pub type CharFnTrace64 = charfn::CharFnTrace<f64>;
