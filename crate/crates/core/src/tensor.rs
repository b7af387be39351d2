//! Corrector fields, the third-order homogenized tensor and the
//! type-eps^2 / type-eps classification.
//!
//! `v_kl = T(A, a_kl)`, `c_j^{kl} = (A e_j . grad v_kl, r)` and
//! `C_jkl = c_j^{kl} + c_k^{jl} + c_l^{jk}`. A field is type-eps^2 when `C`
//! vanishes; numerically that means `max |C_jkl| <= tol`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::coefficient::{MatrixFieldSpec, Sym2, TrigPoly};
use crate::error::{HomogError, Result};
use crate::linalg::max_abs;
use crate::spectral::{CellSolver, Deriv, GridField, SpectralFunction};

/// Floor of the classification tolerance.
pub const MIN_CLASSIFY_TOL: f64 = 1e-8;

/// Symmetric pair index: `(0,0) -> 0`, `(0,1), (1,0) -> 1`, `(1,1) -> 2`.
#[inline]
fn pair(k: usize, l: usize) -> usize {
    k + l
}

/// `V = (v_kl)` with `v_kl = T(A, a_kl)`; `v_12` is stored once.
#[derive(Clone, Debug)]
pub struct CorrectorMatrix {
    v: [SpectralFunction; 3],
    /// Largest relative weak residual over the three solves.
    pub residual: f64,
}

impl CorrectorMatrix {
    pub fn get(&self, k: usize, l: usize) -> &SpectralFunction {
        &self.v[pair(k, l)]
    }
}

/// Max relative weak residual of a nondivergence solve.
fn nondiv_residual(solver: &CellSolver, v: &SpectralFunction, f: &GridField) -> f64 {
    let res = solver.nondiv_residual(v, f);
    let rhs = solver.nondiv_residual(&SpectralFunction::zero(solver.space()), f);
    let scale = max_abs(&rhs);
    if scale == 0.0 {
        max_abs(&res)
    } else {
        max_abs(&res) / scale
    }
}

pub fn corrector_matrix(solver: &CellSolver) -> Result<CorrectorMatrix> {
    let mut residual: f64 = 0.0;
    let mut solve = |e: &GridField| -> Result<SpectralFunction> {
        let f = solver.compatible_source(e, true)?;
        let v = solver.solve_nondiv(e, true)?;
        residual = residual.max(nondiv_residual(solver, &v, &f));
        Ok(v)
    };
    let s = solver.samples();
    let v = [
        solve(&s.entries[0])?,
        solve(&s.entries[1])?,
        solve(&s.entries[2])?,
    ];
    Ok(CorrectorMatrix { v, residual })
}

/// `A e_j . grad v` at the quadrature nodes.
fn column_derivative(solver: &CellSolver, j: usize, v: &SpectralFunction) -> GridField {
    let quad = solver.quadrature();
    let d0 = v.on_grid(quad, Deriv::Grad(0));
    let d1 = v.on_grid(quad, Deriv::Grad(1));
    let s = solver.samples();
    s.entry(0, j).mul(&d0).add(&s.entry(1, j).mul(&d1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    #[serde(rename = "type-eps2")]
    TypeEps2,
    #[serde(rename = "type-eps")]
    TypeEps,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::TypeEps2 => "type-eps^2",
            Classification::TypeEps => "type-eps",
        })
    }
}

pub type Tensor3 = [[[f64; 2]; 2]; 2];

/// `c[j][k][l] = c_j^{kl}` and its symmetrization.
#[derive(Clone, Debug, Serialize)]
pub struct ThirdOrderTensor {
    pub c: Tensor3,
    pub sym: Tensor3,
    pub tolerance: f64,
    pub max_abs_sym: f64,
    pub classification: Classification,
}

impl ThirdOrderTensor {
    pub fn from_c(c: Tensor3, tolerance: f64) -> Self {
        let mut sym = [[[0.0; 2]; 2]; 2];
        let mut max_abs_sym: f64 = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    sym[j][k][l] = c[j][k][l] + c[k][j][l] + c[l][j][k];
                    max_abs_sym = max_abs_sym.max(sym[j][k][l].abs());
                }
            }
        }
        let classification = if max_abs_sym <= tolerance {
            Classification::TypeEps2
        } else {
            Classification::TypeEps
        };
        ThirdOrderTensor { c, sym, tolerance, max_abs_sym, classification }
    }

    pub fn max_abs_c(&self) -> f64 {
        self.c.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `max(1e-8, 10 * residual_scale)`
pub fn default_tolerance(residual_scale: f64) -> f64 {
    MIN_CLASSIFY_TOL.max(10.0 * residual_scale)
}

/// `c_j^{kl} = (A e_j . grad v_kl, r)`; `tol = None` picks [`default_tolerance`].
pub fn third_order_tensor(solver: &CellSolver, v: &CorrectorMatrix, tol: Option<f64>) -> ThirdOrderTensor {
    let r = solver.measure().r();
    let mut c = [[[0.0; 2]; 2]; 2];
    for (j, cj) in c.iter_mut().enumerate() {
        for kl in 0..3 {
            let val = column_derivative(solver, j, &v.v[kl]).inner(r);
            match kl {
                0 => cj[0][0] = val,
                1 => {
                    cj[0][1] = val;
                    cj[1][0] = val;
                }
                _ => cj[1][1] = val,
            }
        }
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(v.residual.max(solver.measure().residual())));
    ThirdOrderTensor::from_c(c, tol)
}

/// Classification with the tensor magnitudes behind it.
#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub k_max: usize,
    pub tensor: ThirdOrderTensor,
    pub corrector_residual: f64,
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.tensor;
        writeln!(f, "spectral truncation K : {}", self.k_max)?;
        for j in 0..2 {
            for (k, l) in [(0, 0), (0, 1), (1, 1)] {
                writeln!(f, "c_{}^{}{} = {:+.6e}", j + 1, k + 1, l + 1, t.c[j][k][l])?;
            }
        }
        for (j, k, l) in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)] {
            writeln!(f, "C_{}{}{} = {:+.6e}", j + 1, k + 1, l + 1, t.sym[j][k][l])?;
        }
        writeln!(f, "max |C|    : {:.6e}", t.max_abs_sym)?;
        writeln!(f, "tolerance  : {:.3e}", t.tolerance)?;
        write!(f, "class      : {}", t.classification)
    }
}

pub fn classify(solver: &CellSolver, tol: Option<f64>) -> Result<ClassificationReport> {
    let v = corrector_matrix(solver)?;
    let tensor = third_order_tensor(solver, &v, tol);
    Ok(ClassificationReport {
        k_max: solver.space().k_max(),
        tensor,
        corrector_residual: v.residual,
    })
}

/// `chi_jkl = T(A, A e_j . grad v_kl)`, stored for `j` and symmetric `(k, l)`.
#[derive(Clone, Debug)]
pub struct SecondCorrector {
    chi: [[SpectralFunction; 3]; 2],
    pub residual: f64,
}

impl SecondCorrector {
    pub fn get(&self, j: usize, k: usize, l: usize) -> &SpectralFunction {
        &self.chi[j][pair(k, l)]
    }
}

pub fn second_corrector(solver: &CellSolver, v: &CorrectorMatrix) -> Result<SecondCorrector> {
    let mut residual: f64 = 0.0;
    let mut solve = |j: usize, kl: usize| -> Result<SpectralFunction> {
        let source = column_derivative(solver, j, &v.v[kl]);
        let f = solver.compatible_source(&source, true)?;
        let chi = solver.solve_nondiv(&source, true)?;
        residual = residual.max(nondiv_residual(solver, &chi, &f));
        Ok(chi)
    };
    let chi = [
        [solve(0, 0)?, solve(0, 1)?, solve(0, 2)?],
        [solve(1, 0)?, solve(1, 1)?, solve(1, 2)?],
    ];
    Ok(SecondCorrector { chi, residual })
}

/// Discrepancies in the structure identities for `A = C + a M`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    /// `||r - (1 + M : D^2 w)||`
    pub r_discrepancy: f64,
    /// `max_kl ||v_kl - w m_kl||`
    pub v_discrepancy: f64,
    /// `||C : D^2 w + r a - a_bar||`
    pub c_residual: f64,
    /// `(a, r)`
    pub a_bar: f64,
}

/// Check the `C + a M` identities on a solver whose field has that form.
pub fn structure_check(solver: &CellSolver) -> Result<StructureReport> {
    let spec = solver.spec();
    let (c, m) = spec.cam_parts().ok_or_else(|| {
        HomogError::InvalidInput(format!("coefficient `{}` is not of the form C + a M", spec.name()))
    })?;
    let quad = solver.quadrature();
    let a = solver.grid(|y| spec.scalar_factor(y).expect("C + a M field"));
    let w = solver.t_operator(&a)?;
    let r = solver.measure().r();
    let a_bar = a.inner(r);

    let mdw = w.on_grid(quad, Deriv::Hess(m));
    let r_discrepancy = r.sub(&mdw.shift(1.0)).l2_norm();

    let v = corrector_matrix(solver)?;
    let mut v_discrepancy: f64 = 0.0;
    for (k, l) in [(0, 0), (0, 1), (1, 1)] {
        let d = v.get(k, l).sub(&w.scale(m.get(k, l)));
        v_discrepancy = v_discrepancy.max(d.l2_norm());
    }

    let cdw = w.on_grid(quad, Deriv::Hess(c));
    let c_residual = cdw.add(&r.mul(&a)).shift(-a_bar).l2_norm();
    Ok(StructureReport { r_discrepancy, v_discrepancy, c_residual, a_bar })
}

/// Build `C + a M` (rejecting inadmissible data) and check its identities.
pub fn structure_check_cam(c: Sym2, m: Sym2, a: TrigPoly, k_max: usize) -> Result<StructureReport> {
    let spec = MatrixFieldSpec::ca_m(c, m, a, None)?;
    structure_check(&CellSolver::new(&spec, k_max)?)
}

/// Two independent computations of `c_j^{kl}` for a diagonal field
/// `A = a (I + b M)`, `M = diag(1, -1)`: the definition, and
/// `c^{kl}_{3-s} = 2 (-1)^{s+1} a_bar (I + b_bar M)_kl (d_{3-s} w_A, d_ss w_B)`.
#[derive(Clone, Debug, Serialize)]
pub struct DiagonalCrossCheck {
    pub from_definition: ThirdOrderTensor,
    pub from_structure: Tensor3,
    pub a_bar: f64,
    pub b_bar: f64,
    /// `(d_1 w_A, d_22 w_B)`
    pub criterion_1: f64,
    /// `(d_2 w_A, d_11 w_B)`
    pub criterion_2: f64,
    /// `max |difference| / max |c|`
    pub relative_difference: f64,
}

pub fn diagonal_cross_check(spec: &MatrixFieldSpec, k_max: usize, tol: Option<f64>) -> Result<DiagonalCrossCheck> {
    let solver_a = CellSolver::new(spec, k_max)?;
    let quad = *solver_a.quadrature();
    let s = solver_a.samples();
    if s.entries[1].max_abs() != 0.0 {
        return Err(HomogError::InvalidInput(format!(
            "coefficient `{}` is not diagonal",
            spec.name()
        )));
    }
    let v = corrector_matrix(&solver_a)?;
    let from_definition = third_order_tensor(&solver_a, &v, tol);

    let inner = spec.clone();
    let b_field = MatrixFieldSpec::custom(
        "normalized",
        Arc::new(move |y| {
            let a = inner.evaluate(y);
            a.scale(2.0 / a.trace())
        }),
        None,
    )?;
    let solver_b = CellSolver::with_quadrature(&b_field, k_max, quad)?;

    let half_trace = s.entries[0].add(&s.entries[2]).scale(0.5);
    let b = s.entries[0].sub(&s.entries[2]).zip_with(&s.entries[0].add(&s.entries[2]), |d, t| d / t);
    let w_a = solver_a.t_operator(&half_trace)?;
    let w_b = solver_b.t_operator(&b)?;
    let a_bar = half_trace.inner(solver_a.measure().r());
    let b_bar = b.inner(solver_b.measure().r());

    let g = |f: &SpectralFunction, d: Deriv| f.on_grid(&quad, d);
    let criterion_1 = g(&w_a, Deriv::Grad(0)).inner(&g(&w_b, Deriv::second(1, 1)));
    let criterion_2 = g(&w_a, Deriv::Grad(1)).inner(&g(&w_b, Deriv::second(0, 0)));

    // (I + b_bar M)_kl with M = diag(1, -1); off-diagonal correctors vanish since a12 = 0
    let weight = [[1.0 + b_bar, 0.0], [0.0, 1.0 - b_bar]];
    let mut from_structure = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let factor = 2.0 * a_bar * weight[k][l];
            // s = 1 gives j = 2 (index 1); s = 2 gives j = 1 (index 0) with a sign flip
            from_structure[1][k][l] = factor * criterion_2;
            from_structure[0][k][l] = -factor * criterion_1;
        }
    }
    let scale = from_definition.max_abs_c();
    let mut diff: f64 = 0.0;
    for j in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                diff = diff.max((from_definition.c[j][k][l] - from_structure[j][k][l]).abs());
            }
        }
    }
    let relative_difference = if scale > 0.0 { diff / scale } else { diff };
    Ok(DiagonalCrossCheck {
        from_definition,
        from_structure,
        a_bar,
        b_bar,
        criterion_1,
        criterion_2,
        relative_difference,
    })
}
