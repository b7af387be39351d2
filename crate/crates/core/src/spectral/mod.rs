//! Spectral Galerkin discretization of the periodic cell problems.

pub mod cell;
pub mod space;

pub use cell::{
    assemble_b_mu, invariant_measure_spectral, shifted_laplacian_norm, solve_psi, CellSolver,
    CoefficientSamples, DoubleDivSolution, SpectralInvariantMeasure,
};
pub use space::{CellQuadrature, Deriv, GridField, Parity, SpectralFunction, TrigSpace};
