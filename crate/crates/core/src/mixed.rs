//! Stabilized mixed P1 method for the invariant measure on a periodic mesh.
//!
//! Find mean-zero periodic `p_h = (p1, p2)` with
//!
//! ```text
//! (gamma A : D w, div p) + (curl w, curl p) = (gamma, A : D w)   for all w
//! ```
//!
//! where `(D w)_ab = d_b w_a` and `curl w = d2 w1 - d1 w2`. Then
//! `r~_h = 1 - div p_h` per element, `c_h = (gamma, r~_h)` and
//! `r_h = gamma r~_h / c_h`.

use crate::coefficient::{MatrixFieldSpec, Point, Sym2};
use crate::error::{HomogError, Result};
use crate::linalg::{max_abs, SparseMatrix};

/// Relative residual above which the sparse solve is reported as failed.
const SOLVE_TOL: f64 = 1e-9;

/// Uniform periodic triangulation of the unit cell with `N^2` nodes.
///
/// Square `(i, j)` is split along its diagonal into
/// `[(i,j), (i+1,j), (i+1,j+1)]` (triangle `2q`) and
/// `[(i,j), (i+1,j+1), (i,j+1)]` (triangle `2q + 1`), `q = i N + j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicTriMesh {
    n: usize,
}

impl PeriodicTriMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(HomogError::InvalidInput(format!("mesh needs N >= 2, got {n}")));
        }
        Ok(PeriodicTriMesh { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn num_triangles(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn area(&self) -> f64 {
        0.5 * self.h() * self.h()
    }

    /// Representative of node `(i, j)` after periodic identification.
    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        (i % self.n) * self.n + (j % self.n)
    }

    #[inline]
    fn square(&self, t: usize) -> (usize, usize, bool) {
        let q = t / 2;
        (q / self.n, q % self.n, t % 2 == 1)
    }

    /// Periodic node indices of triangle `t`.
    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let (i, j, upper) = self.square(t);
        if upper {
            [self.node_index(i, j), self.node_index(i + 1, j + 1), self.node_index(i, j + 1)]
        } else {
            [self.node_index(i, j), self.node_index(i + 1, j), self.node_index(i + 1, j + 1)]
        }
    }

    /// Unwrapped vertex coordinates of triangle `t`.
    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let (i, j, upper) = self.square(t);
        let h = self.h();
        let (x, y) = (i as f64 * h, j as f64 * h);
        if upper {
            [[x, y], [x + h, y + h], [x, y + h]]
        } else {
            [[x, y], [x + h, y], [x + h, y + h]]
        }
    }

    /// Gradients of the three barycentric functions on triangle `t`.
    pub fn gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let g = self.n as f64;
        if t % 2 == 1 {
            [[0.0, -g], [g, 0.0], [-g, g]]
        } else {
            [[-g, 0.0], [g, -g], [0.0, g]]
        }
    }

    /// Triangle containing the (wrapped) point `y`.
    pub fn locate(&self, y: Point) -> usize {
        let y = crate::coefficient::wrap_point(y);
        let nf = self.n as f64;
        let (sx, sy) = (y[0] * nf, y[1] * nf);
        let i = (sx as usize).min(self.n - 1);
        let j = (sy as usize).min(self.n - 1);
        let upper = sy - j as f64 > sx - i as f64;
        2 * (i * self.n + j) + usize::from(upper)
    }
}

/// Composite centroid rule on the `s x s` congruent sub-triangles of a
/// triangle. Points are barycentric pairs `(xi, eta)` along edges `P0P1` and
/// `P0P2`; weights are `1 / s^2` of the area.
///
/// On the meshes above every point has `y1 = (3 s I + q) / (3 s N)` with
/// `q` not a multiple of 3, so no point lies on a line `y1 in Z/2`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    points: Vec<[f64; 2]>,
}

impl TriangleRule {
    pub fn new(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(HomogError::InvalidInput("element quadrature needs s >= 1".into()));
        }
        let sf = s as f64;
        let mut points = Vec::with_capacity(s * s);
        for i in 0..s {
            for j in 0..s - i {
                points.push([(i as f64 + 1.0 / 3.0) / sf, (j as f64 + 1.0 / 3.0) / sf]);
                if i + j + 2 <= s {
                    points.push([(i as f64 + 2.0 / 3.0) / sf, (j as f64 + 2.0 / 3.0) / sf]);
                }
            }
        }
        Ok(TriangleRule { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points in triangle `v` with their weights.
    pub fn map(&self, v: &[Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
        let area = 0.5
            * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
        let w = area / self.points.len() as f64;
        let v = *v;
        self.points.iter().map(move |&[xi, eta]| {
            (
                [
                    v[0][0] + xi * (v[1][0] - v[0][0]) + eta * (v[2][0] - v[0][0]),
                    v[0][1] + xi * (v[1][1] - v[0][1]) + eta * (v[2][1] - v[0][1]),
                ],
                w,
            )
        })
    }
}

/// `int_T gamma` and `int_T gamma A` by the element rule.
#[derive(Clone, Copy, Debug)]
pub struct ElementIntegrals {
    pub gamma: f64,
    pub gamma_a: Sym2,
    pub a: Sym2,
}

pub fn element_integrals(spec: &MatrixFieldSpec, mesh: &PeriodicTriMesh, rule: &TriangleRule) -> Vec<ElementIntegrals> {
    (0..mesh.num_triangles())
        .map(|t| {
            let mut g = 0.0;
            let mut ga = Sym2::ZERO;
            let mut a_int = Sym2::ZERO;
            for (y, w) in rule.map(&mesh.vertices(t)) {
                let a = spec.evaluate(y);
                let gam = a.cordes_gamma();
                g += w * gam;
                ga = ga.add(&a.scale(w * gam));
                a_int = a_int.add(&a.scale(w));
            }
            ElementIntegrals { gamma: g, gamma_a: ga, a: a_int }
        })
        .collect()
}

/// Piecewise-affine periodic vector field; dof `c * N^2 + node`.
#[derive(Clone, Debug)]
pub struct VectorP1Function {
    mesh: PeriodicTriMesh,
    dofs: Vec<f64>,
}

impl VectorP1Function {
    pub fn new(mesh: PeriodicTriMesh, dofs: Vec<f64>) -> Result<Self> {
        if dofs.len() != 2 * mesh.num_nodes() {
            return Err(HomogError::InvalidInput(format!(
                "expected {} dofs, got {}",
                2 * mesh.num_nodes(),
                dofs.len()
            )));
        }
        Ok(VectorP1Function { mesh, dofs })
    }

    pub fn mesh(&self) -> &PeriodicTriMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    /// Constant gradient matrix `(D w)_ab = d_b w_a` on triangle `t`.
    pub fn jacobian(&self, t: usize) -> [[f64; 2]; 2] {
        let nodes = self.mesh.triangle(t);
        let grads = self.mesh.gradients(t);
        let n = self.mesh.num_nodes();
        let mut d = [[0.0; 2]; 2];
        for (node, g) in nodes.iter().zip(&grads) {
            for (a, row) in d.iter_mut().enumerate() {
                let v = self.dofs[a * n + node];
                row[0] += v * g[0];
                row[1] += v * g[1];
            }
        }
        d
    }

    pub fn divergence(&self, t: usize) -> f64 {
        let d = self.jacobian(t);
        d[0][0] + d[1][1]
    }

    pub fn curl(&self, t: usize) -> f64 {
        let d = self.jacobian(t);
        d[0][1] - d[1][0]
    }

    /// `||D w||_{L^2(Y)}`
    pub fn gradient_norm(&self) -> f64 {
        let area = self.mesh.area();
        (0..self.mesh.num_triangles())
            .map(|t| {
                let d = self.jacobian(t);
                area * (d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1])
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `int_Y w_c`; each node carries weight `h^2`.
    pub fn component_mean(&self, c: usize) -> f64 {
        let n = self.mesh.num_nodes();
        let h2 = self.mesh.h() * self.mesh.h();
        self.dofs[c * n..(c + 1) * n].iter().sum::<f64>() * h2
    }
}

/// Mixed system with two trailing multiplier rows enforcing `int p_c = 0`.
pub struct MixedSystem {
    mesh: PeriodicTriMesh,
    matrix: SparseMatrix,
    field_triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
    elements: Vec<ElementIntegrals>,
    rule: TriangleRule,
}

impl MixedSystem {
    pub fn mesh(&self) -> &PeriodicTriMesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn elements(&self) -> &[ElementIntegrals] {
        &self.elements
    }

    /// Number of field dofs, excluding the multipliers.
    pub fn field_dofs(&self) -> usize {
        2 * self.mesh.num_nodes()
    }

    /// `b(w_x, w_y)` for field dof vectors of length [`field_dofs`](Self::field_dofs).
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut xe = x.to_vec();
        let mut ye = y.to_vec();
        xe.extend([0.0, 0.0]);
        ye.extend([0.0, 0.0]);
        self.matrix.bilinear(&xe, &ye)
    }

    /// Constraint row sums; each equals the mesh area `1`.
    pub fn constraint_weights(&self) -> [f64; 2] {
        let n = self.field_dofs();
        let ones = vec![1.0; n + 2];
        let mut e = vec![0.0; n + 2];
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[n + c] = 1.0;
            // row n + c of M is column n + c of M^T
            *o = crate::linalg::dot(&self.matrix.mul_transpose_vec(&e), &ones);
        }
        out
    }
}

/// Assemble the stabilized mixed system with an `s x s` element rule.
pub fn assemble_mixed(spec: &MatrixFieldSpec, mesh: &PeriodicTriMesh, subdivisions: usize) -> Result<MixedSystem> {
    let rule = TriangleRule::new(subdivisions)?;
    let elements = element_integrals(spec, mesh, &rule);
    let n = mesh.num_nodes();
    let dim = 2 * n + 2;
    let area = mesh.area();
    let mut trip = Vec::with_capacity(mesh.num_triangles() * 36 + 4 * n);
    let mut rhs = vec![0.0; dim];
    for (t, el) in elements.iter().enumerate() {
        let nodes = mesh.triangle(t);
        let grads = mesh.gradients(t);
        for (li, &ni) in nodes.iter().enumerate() {
            // (G_T grad lambda_i)_a is int_T gamma A : D w for w = lambda_i e_a
            let ga = el.gamma_a.mul_vec(grads[li]);
            let curl_i = [grads[li][1], -grads[li][0]];
            for a in 0..2 {
                let row = a * n + ni;
                rhs[row] += ga[a];
                for (lj, &nj) in nodes.iter().enumerate() {
                    let curl_j = [grads[lj][1], -grads[lj][0]];
                    for c in 0..2 {
                        let v = ga[a] * grads[lj][c] + area * curl_i[a] * curl_j[c];
                        trip.push((row, c * n + nj, v));
                    }
                }
            }
        }
    }
    let field_triplets = trip.clone();
    let h2 = mesh.h() * mesh.h();
    for c in 0..2 {
        for node in 0..n {
            trip.push((2 * n + c, c * n + node, h2));
            trip.push((c * n + node, 2 * n + c, h2));
        }
    }
    let matrix = SparseMatrix::from_triplets(dim, &trip)?;
    Ok(MixedSystem { mesh: *mesh, matrix, field_triplets, rhs, elements, rule })
}

/// Discrete invariant measure from the mixed method.
#[derive(Clone, Debug)]
pub struct FEInvariantMeasure {
    p: VectorP1Function,
    r_tilde: Vec<f64>,
    c: f64,
    elements: Vec<ElementIntegrals>,
    rule: TriangleRule,
    residual: f64,
    multipliers: [f64; 2],
}

impl FEInvariantMeasure {
    pub fn p(&self) -> &VectorP1Function {
        &self.p
    }

    pub fn mesh(&self) -> &PeriodicTriMesh {
        self.p.mesh()
    }

    /// `1 - div p_h` per triangle.
    pub fn r_tilde(&self) -> &[f64] {
        &self.r_tilde
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn multipliers(&self) -> [f64; 2] {
        self.multipliers
    }

    pub fn r_tilde_integral(&self) -> f64 {
        let area = self.mesh().area();
        self.r_tilde.iter().map(|v| v * area).sum()
    }

    /// `int r_h` with the assembly rule; equals 1 by construction of `c_h`.
    pub fn r_integral(&self) -> f64 {
        self.r_tilde
            .iter()
            .zip(&self.elements)
            .map(|(rt, el)| rt * el.gamma)
            .sum::<f64>()
            / self.c
    }

    /// `r_h(y) = gamma(y) r~_T / c_h`.
    pub fn r_at(&self, spec: &MatrixFieldSpec, y: Point) -> f64 {
        spec.gamma(y) * self.r_tilde[self.mesh().locate(y)] / self.c
    }

    /// `A_h = sum_T r~_T int_T gamma A / c_h`.
    pub fn effective_matrix(&self) -> Sym2 {
        let mut acc = Sym2::ZERO;
        for (rt, el) in self.r_tilde.iter().zip(&self.elements) {
            acc = acc.add(&el.gamma_a.scale(*rt));
        }
        acc.scale(1.0 / self.c)
    }

    /// Minimum of `r_h` over the element quadrature points.
    pub fn min_r(&self, spec: &MatrixFieldSpec) -> f64 {
        let mesh = *self.mesh();
        let mut lo = f64::INFINITY;
        for t in 0..mesh.num_triangles() {
            for (y, _) in self.rule.map(&mesh.vertices(t)) {
                lo = lo.min(spec.gamma(y) * self.r_tilde[t] / self.c);
            }
        }
        lo
    }

    /// `||r - r_h||_{L^2(Y)}` with a 16-point composite rule per triangle.
    pub fn l2_error(&self, spec: &MatrixFieldSpec, r: impl Fn(Point) -> f64) -> f64 {
        let mesh = *self.mesh();
        let rule = TriangleRule::new(4).expect("s = 4 is valid");
        let mut acc = 0.0;
        for t in 0..mesh.num_triangles() {
            for (y, w) in rule.map(&mesh.vertices(t)) {
                let e = r(y) - spec.gamma(y) * self.r_tilde[t] / self.c;
                acc += w * e * e;
            }
        }
        acc.sqrt()
    }

    /// `||r~ - r~_h||_{L^2(Y)}` for a reference `r~`, 16 points per triangle.
    pub fn r_tilde_error(&self, r_tilde: impl Fn(Point) -> f64) -> f64 {
        let mesh = *self.mesh();
        let rule = TriangleRule::new(4).expect("s = 4 is valid");
        let mut acc = 0.0;
        for t in 0..mesh.num_triangles() {
            for (y, w) in rule.map(&mesh.vertices(t)) {
                let e = r_tilde(y) - self.r_tilde[t];
                acc += w * e * e;
            }
        }
        acc.sqrt()
    }

    /// `||div p - div p_h||_{L^2(Y)}` for a reference divergence.
    pub fn divergence_error(&self, div_p: impl Fn(Point) -> f64) -> f64 {
        let mesh = *self.mesh();
        let rule = TriangleRule::new(4).expect("s = 4 is valid");
        let mut acc = 0.0;
        for t in 0..mesh.num_triangles() {
            let dh = self.p.divergence(t);
            for (y, w) in rule.map(&mesh.vertices(t)) {
                let e = div_p(y) - dh;
                acc += w * e * e;
            }
        }
        acc.sqrt()
    }
}

/// Solve the mixed problem on the `N x N` mesh and build `r_h`.
pub fn solve_invariant_fe(spec: &MatrixFieldSpec, n: usize, subdivisions: usize) -> Result<FEInvariantMeasure> {
    let mesh = PeriodicTriMesh::new(n)?;
    let system = assemble_mixed(spec, &mesh, subdivisions)?;
    solve_system(system)
}

/// Solve the multiplier system.
///
/// Constant test fields give identically zero equations, so the test row of
/// node 0 in each component is the negated sum of the others. Those two rows
/// are replaced by `p_c(node 0) = 0`, the pinned field system is factorized
/// (the dense multiplier rows would destroy the sparse ordering), and the
/// component means are subtracted afterwards. Constants lie in the kernel of
/// the form, so the result solves the full multiplier system with zero
/// multipliers; its residual is checked against that system.
pub fn solve_system(system: MixedSystem) -> Result<FEInvariantMeasure> {
    let n = system.mesh.num_nodes();
    let nf = 2 * n;
    let pinned_rows = [0, n];
    let mut diag = [0.0; 2];
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(system.field_triplets.len());
    for &(r, c, v) in &system.field_triplets {
        if let Some(k) = pinned_rows.iter().position(|&p| p == r) {
            if c == r {
                diag[k] += v;
            }
        } else {
            trip.push((r, c, v));
        }
    }
    for (k, &r) in pinned_rows.iter().enumerate() {
        trip.push((r, r, if diag[k] != 0.0 { diag[k] } else { 1.0 }));
    }
    let pinned = SparseMatrix::from_triplets(nf, &trip)?;
    let mut rhs = system.rhs[..nf].to_vec();
    for &r in &pinned_rows {
        rhs[r] = 0.0;
    }
    let mut x = pinned.lu("mixed invariant measure")?.solve(&rhs);
    let h2 = system.mesh.h() * system.mesh.h();
    for c in 0..2 {
        let mean = x[c * n..(c + 1) * n].iter().sum::<f64>() * h2;
        x[c * n..(c + 1) * n].iter_mut().for_each(|v| *v -= mean);
    }
    x.extend([0.0, 0.0]);

    let ax = system.matrix.mul_vec(&x);
    let res: Vec<f64> = ax.iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let scale = max_abs(&system.rhs).max(max_abs(&ax));
    let residual = if max_abs(&res) == 0.0 { 0.0 } else { max_abs(&res) / scale };
    // p = 0 solves the constant-coefficient case; the rhs is then pure roundoff
    let residual = if max_abs(&system.rhs) < 1e-13 && max_abs(&x) < 1e-10 { 0.0 } else { residual };
    if residual > SOLVE_TOL {
        return Err(HomogError::Residual { stage: "mixed invariant measure", residual, tolerance: SOLVE_TOL });
    }
    let nf = system.field_dofs();
    let multipliers = [x[nf], x[nf + 1]];
    let p = VectorP1Function::new(system.mesh, x[..nf].to_vec())?;
    let r_tilde: Vec<f64> = (0..system.mesh.num_triangles()).map(|t| 1.0 - p.divergence(t)).collect();
    let c: f64 = r_tilde.iter().zip(&system.elements).map(|(rt, el)| rt * el.gamma).sum();
    if !(c > 0.0) {
        return Err(HomogError::NonPositiveNormalization { c });
    }
    Ok(FEInvariantMeasure {
        p,
        r_tilde,
        c,
        elements: system.elements,
        rule: system.rule,
        residual,
        multipliers,
    })
}
