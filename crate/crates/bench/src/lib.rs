//! Fixtures shared by the benchmarks in `benches/`.

use std::f64::consts::PI;

use homog_core::homogenized::HomogenizedProblem;
use homog_core::{MatrixFieldSpec, Sym2};

/// The discontinuous laminate with a known effective matrix.
pub fn laminate() -> MatrixFieldSpec {
    MatrixFieldSpec::builtin("paper-sec5").expect("built-in coefficient")
}

/// `-div(A_bar grad u) = f` on the unit square with `u = sin(pi x) sin(pi y)`.
pub fn homogenized_problem() -> HomogenizedProblem {
    let a_bar = Sym2::diag(0.625, 0.375);
    HomogenizedProblem::new(a_bar, |y| PI * PI * (PI * y[0]).sin() * (PI * y[1]).sin(), |_| 0.0)
}
