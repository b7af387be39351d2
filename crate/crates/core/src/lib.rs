//! Numerical homogenization of nondivergence-form operators `-A(x/eps) : D^2`
//! with periodic coefficients satisfying the Cordes condition in two dimensions.
//!
//! * [`coefficient`] : coefficient fields, Cordes scaling, analytic references
//! * [`spectral`] : trigonometric Galerkin solves of the cell problems
//! * [`mixed`] : stabilized mixed finite elements for the invariant measure
//! * [`homogenized`] : P1 solver for the constant-coefficient limit problem
//! * [`tensor`] : correctors, the third-order tensor and type classification
//! * [`study`] : convergence studies, rate fits and the end-to-end pipeline

pub mod coefficient;
pub mod error;
pub mod linalg;
pub mod homogenized;
pub mod mixed;
pub mod spectral;
pub mod study;
pub mod tensor;

pub use coefficient::{
    coercivity_constant, reference_solution, CordesReport, MatrixFieldSpec, Point,
    ReferenceSolution, Sym2, TrigPoly,
};
pub use error::{HomogError, Result};
pub use spectral::{CellQuadrature, CellSolver, GridField, SpectralFunction, TrigSpace};
pub use study::{estimate_rate, RateFit, RateTable, StudyConfig};
