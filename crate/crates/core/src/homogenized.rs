//! Conforming P1 solver for the homogenized Dirichlet problem
//! `-A_bar : D^2 u = f` in a rectangle, `u = g` on the boundary.
//!
//! For constant `A_bar` the operator equals `-div(A_bar grad u)`, so the
//! standard Galerkin form `(A_bar grad u_h, grad v_h) = (f, v_h)` applies.

use std::fmt;
use std::sync::Arc;

use crate::coefficient::{Point, Sym2};
use crate::error::{HomogError, Result};
use crate::linalg::{dot, max_abs, norm, SparseMatrix};

/// Seven-point degree-5 rule on the reference triangle (barycentric, weight).
const DUNAVANT5: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Uniform triangulation of `(0, a) x (0, b)` with `M` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletMesh {
    width: f64,
    height: f64,
    m: usize,
}

impl DirichletMesh {
    pub fn new(width: f64, height: f64, m: usize) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(HomogError::InvalidInput(format!(
                "domain sides must be positive, got {width} x {height}"
            )));
        }
        if m < 2 {
            return Err(HomogError::InvalidInput(format!("domain mesh needs M >= 2, got {m}")));
        }
        Ok(DirichletMesh { width, height, m })
    }

    pub fn unit_square(m: usize) -> Result<Self> {
        Self::new(1.0, 1.0, m)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Largest cell side.
    pub fn h(&self) -> f64 {
        self.width.max(self.height) / self.m as f64
    }

    pub fn num_nodes(&self) -> usize {
        (self.m + 1) * (self.m + 1)
    }

    pub fn num_triangles(&self) -> usize {
        2 * self.m * self.m
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * (self.m + 1) + j
    }

    pub fn node(&self, idx: usize) -> Point {
        let (i, j) = (idx / (self.m + 1), idx % (self.m + 1));
        // exact endpoints so boundary nodes lie on the boundary
        let x = if i == self.m { self.width } else { i as f64 * self.width / self.m as f64 };
        let y = if j == self.m { self.height } else { j as f64 * self.height / self.m as f64 };
        [x, y]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = (idx / (self.m + 1), idx % (self.m + 1));
        i == 0 || j == 0 || i == self.m || j == self.m
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let q = t / 2;
        let (i, j) = (q / self.m, q % self.m);
        if t % 2 == 1 {
            [self.node_index(i, j), self.node_index(i + 1, j + 1), self.node_index(i, j + 1)]
        } else {
            [self.node_index(i, j), self.node_index(i + 1, j), self.node_index(i + 1, j + 1)]
        }
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        self.triangle(t).map(|v| self.node(v))
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.width / self.m as f64) * (self.height / self.m as f64)
    }

    /// Barycentric gradients on triangle `t`.
    pub fn gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let (hx, hy) = (self.width / self.m as f64, self.height / self.m as f64);
        if t % 2 == 1 {
            [[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]]
        } else {
            [[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]]
        }
    }

    /// Triangle containing `y`, which must lie in the closed domain.
    pub fn locate(&self, y: Point) -> usize {
        let sx = (y[0] / self.width * self.m as f64).clamp(0.0, self.m as f64);
        let sy = (y[1] / self.height * self.m as f64).clamp(0.0, self.m as f64);
        let i = (sx as usize).min(self.m - 1);
        let j = (sy as usize).min(self.m - 1);
        let upper = sy - j as f64 > sx - i as f64;
        2 * (i * self.m + j) + usize::from(upper)
    }
}

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// `-A_bar : D^2 u = f`, `u = g` on the boundary.
#[derive(Clone)]
pub struct HomogenizedProblem {
    pub a_bar: Sym2,
    pub f: ScalarFn,
    pub g: ScalarFn,
}

impl fmt::Debug for HomogenizedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogenizedProblem").field("a_bar", &self.a_bar).finish_non_exhaustive()
    }
}

impl HomogenizedProblem {
    pub fn new(
        a_bar: Sym2,
        f: impl Fn(Point) -> f64 + Send + Sync + 'static,
        g: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        HomogenizedProblem { a_bar, f: Arc::new(f), g: Arc::new(g) }
    }
}

/// Nodal P1 solution with solve diagnostics.
#[derive(Clone, Debug)]
pub struct FESolution {
    mesh: DirichletMesh,
    values: Vec<f64>,
    /// Relative Galerkin residual on the interior equations.
    pub residual: f64,
    /// Inverse-iteration estimate of the smallest stiffness eigenvalue.
    pub ritz_min: f64,
}

impl FESolution {
    pub fn mesh(&self) -> &DirichletMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// P1 interpolant at `y`.
    pub fn eval(&self, y: Point) -> f64 {
        let t = self.mesh.locate(y);
        let nodes = self.mesh.triangle(t);
        let v0 = self.mesh.node(nodes[0]);
        let grads = self.mesh.gradients(t);
        let mut u = self.values[nodes[0]];
        for (n, g) in nodes.iter().zip(&grads) {
            u += (self.values[*n] - self.values[nodes[0]]) * (g[0] * (y[0] - v0[0]) + g[1] * (y[1] - v0[1]));
        }
        u
    }

    pub fn gradient(&self, t: usize) -> [f64; 2] {
        let nodes = self.mesh.triangle(t);
        let grads = self.mesh.gradients(t);
        let mut d = [0.0; 2];
        for (n, g) in nodes.iter().zip(&grads) {
            d[0] += self.values[*n] * g[0];
            d[1] += self.values[*n] * g[1];
        }
        d
    }
}

/// Assemble and solve; boundary values are nodal interpolants of `g`.
pub fn solve_homogenized(problem: &HomogenizedProblem, mesh: &DirichletMesh) -> Result<FESolution> {
    let ev = problem.a_bar.eigenvalues();
    if !(ev[0] > 0.0) || !ev[1].is_finite() {
        return Err(HomogError::InvalidInput(format!(
            "effective matrix is not positive definite (eigenvalues {ev:?})"
        )));
    }
    let n = mesh.num_nodes();
    let mut interior = vec![usize::MAX; n];
    let mut n_int = 0;
    for (idx, slot) in interior.iter_mut().enumerate() {
        if !mesh.is_boundary(idx) {
            *slot = n_int;
            n_int += 1;
        }
    }
    let boundary: Vec<f64> = (0..n)
        .map(|idx| if mesh.is_boundary(idx) { (problem.g)(mesh.node(idx)) } else { 0.0 })
        .collect();

    let area = mesh.area();
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    let mut rhs = vec![0.0; n_int];
    for t in 0..mesh.num_triangles() {
        let nodes = mesh.triangle(t);
        let grads = mesh.gradients(t);
        let v = mesh.vertices(t);
        let mut load = [0.0; 3];
        for (bary, w) in DUNAVANT5.iter() {
            let y = [
                bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
                bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
            ];
            let fy = (problem.f)(y);
            for (l, b) in load.iter_mut().zip(bary) {
                *l += w * area * fy * b;
            }
        }
        for (li, &ni) in nodes.iter().enumerate() {
            let row = interior[ni];
            if row == usize::MAX {
                continue;
            }
            rhs[row] += load[li];
            let ag = problem.a_bar.mul_vec(grads[li]);
            for (lj, &nj) in nodes.iter().enumerate() {
                let k = area * (ag[0] * grads[lj][0] + ag[1] * grads[lj][1]);
                match interior[nj] {
                    usize::MAX => rhs[row] -= k * boundary[nj],
                    col => trip.push((row, col, k)),
                }
            }
        }
    }
    let mut values = boundary;
    if n_int == 0 {
        return Ok(FESolution { mesh: *mesh, values, residual: 0.0, ritz_min: f64::INFINITY });
    }
    let stiffness = SparseMatrix::from_triplets(n_int, &trip)?;
    let chol = stiffness.cholesky("homogenized solve")?;
    let x = chol.solve(&rhs);
    let kx = stiffness.mul_vec(&x);
    let res: Vec<f64> = kx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let scale = max_abs(&rhs).max(max_abs(&kx));
    let residual = if scale == 0.0 { 0.0 } else { max_abs(&res) / scale };
    if residual > 1e-10 {
        return Err(HomogError::Residual { stage: "homogenized solve", residual, tolerance: 1e-10 });
    }
    let ritz_min = smallest_eigenvalue(&stiffness, |b| chol.solve(b), n_int);
    for idx in 0..n {
        if interior[idx] != usize::MAX {
            values[idx] = x[interior[idx]];
        }
    }
    Ok(FESolution { mesh: *mesh, values, residual, ritz_min })
}

/// Rayleigh quotient after a few steps of inverse iteration.
fn smallest_eigenvalue(k: &SparseMatrix, solve: impl Fn(&[f64]) -> Vec<f64>, n: usize) -> f64 {
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    for _ in 0..20 {
        let y = solve(&x);
        let s = norm(&y);
        x = y.iter().map(|v| v / s).collect();
    }
    dot(&x, &k.mul_vec(&x)) / dot(&x, &x)
}

/// `(L2 error, H1 seminorm error, max nodal error)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub max_nodal: f64,
}

/// Error of `u_h` against a reference value and gradient, with the
/// seven-point rule per element.
pub fn error_norms(
    u_h: &FESolution,
    value: impl Fn(Point) -> f64,
    gradient: impl Fn(Point) -> [f64; 2],
) -> ErrorNorms {
    let mesh = u_h.mesh;
    let area = mesh.area();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for t in 0..mesh.num_triangles() {
        let nodes = mesh.triangle(t);
        let v = mesh.vertices(t);
        let gh = u_h.gradient(t);
        for (bary, w) in DUNAVANT5.iter() {
            let y = [
                bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
                bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
            ];
            let uh: f64 = nodes.iter().zip(bary).map(|(n, b)| u_h.values[*n] * b).sum();
            let e = value(y) - uh;
            let g = gradient(y);
            l2 += w * area * e * e;
            h1 += w * area * ((g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2));
        }
    }
    let max_nodal = (0..mesh.num_nodes())
        .map(|i| (value(mesh.node(i)) - u_h.values[i]).abs())
        .fold(0.0, f64::max);
    ErrorNorms { l2: l2.sqrt(), h1_semi: h1.sqrt(), max_nodal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dunavant_weights_sum_to_one() {
        let s: f64 = DUNAVANT5.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn affine_data_is_reproduced() {
        let mesh = DirichletMesh::new(2.0, 1.0, 6).unwrap();
        let g = |y: Point| 1.0 + 2.0 * y[0] - 0.5 * y[1];
        let p = HomogenizedProblem::new(Sym2::new(1.0, 0.3, 2.0), |_| 0.0, g);
        let u = solve_homogenized(&p, &mesh).unwrap();
        let e = error_norms(&u, g, |_| [2.0, -0.5]);
        assert!(e.max_nodal < 1e-13 && e.l2 < 1e-13 && e.h1_semi < 1e-12);
        assert!(u.ritz_min > 0.0);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mesh = DirichletMesh::unit_square(4).unwrap();
        let p = HomogenizedProblem::new(Sym2::diag(1.0, -1.0), |_| 0.0, |_| 0.0);
        assert!(solve_homogenized(&p, &mesh).is_err());
    }

    #[test]
    fn poisson_eigenfunction_is_close() {
        let mesh = DirichletMesh::unit_square(32).unwrap();
        let p = HomogenizedProblem::new(
            Sym2::IDENTITY,
            |y| 2.0 * PI * PI * (PI * y[0]).sin() * (PI * y[1]).sin(),
            |_| 0.0,
        );
        let u = solve_homogenized(&p, &mesh).unwrap();
        let e = error_norms(&u, |y| (PI * y[0]).sin() * (PI * y[1]).sin(), |_| [0.0, 0.0]);
        assert!(e.max_nodal < 5e-3);
        assert!((u.eval([0.5, 0.5]) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn boundary_flags() {
        let mesh = DirichletMesh::unit_square(3).unwrap();
        let count = (0..mesh.num_nodes()).filter(|&i| mesh.is_boundary(i)).count();
        assert_eq!(count, 12);
        assert_eq!(mesh.node(mesh.node_index(3, 3)), [1.0, 1.0]);
    }
}
