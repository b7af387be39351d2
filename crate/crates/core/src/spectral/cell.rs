//! Galerkin solves of the periodic cell problems on a [`TrigSpace`].
//!
//! Every problem is posed with the bilinear form
//! `b_mu(u, v) = (mu u - gamma A:D^2 u, mu v - Laplacian v)`. The assembled
//! matrix stores `G[i][j] = b_mu(phi_j, phi_i)`, so the invariant-measure and
//! double-divergence problems (unknown in the second slot) solve with `G^T`
//! and the nondivergence problem (unknown in the first slot) with `G`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficient::{MatrixFieldSpec, Point, Sym2};
use crate::error::{HomogError, Result};
use crate::linalg::{max_abs, DenseLu, DenseMatrix};
use crate::spectral::space::{
    project, CellQuadrature, Deriv, GridField, Parity, SpectralFunction, TrigSpace,
};

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Relative residual above which a dense solve is reported as failed.
const SOLVE_TOL: f64 = 1e-9;

/// Relative tolerance for treating `(f, r)` or `(f, 1)` as zero.
pub const COMPAT_TOL: f64 = 1e-8;

/// Coefficient samples at the quadrature nodes.
#[derive(Clone, Debug)]
pub struct CoefficientSamples {
    pub gamma: GridField,
    /// `a11`, `a12`, `a22`.
    pub entries: [GridField; 3],
}

impl CoefficientSamples {
    pub fn new(spec: &MatrixFieldSpec, quad: &CellQuadrature) -> Self {
        let m = quad.m();
        let mut g = Vec::with_capacity(m * m);
        let mut e = [
            Vec::with_capacity(m * m),
            Vec::with_capacity(m * m),
            Vec::with_capacity(m * m),
        ];
        for i1 in 0..m {
            for i2 in 0..m {
                let a = spec.evaluate(quad.node(i1, i2));
                g.push(a.cordes_gamma());
                e[0].push(a.a11);
                e[1].push(a.a12);
                e[2].push(a.a22);
            }
        }
        let [e0, e1, e2] = e;
        let gf = |v| GridField::from_values(quad, v).expect("sized by quadrature");
        CoefficientSamples {
            gamma: gf(g),
            entries: [gf(e0), gf(e1), gf(e2)],
        }
    }

    /// Entry `a_ij` (zero-based) as a grid field.
    pub fn entry(&self, i: usize, j: usize) -> &GridField {
        match (i, j) {
            (0, 0) => &self.entries[0],
            (1, 1) => &self.entries[2],
            _ => &self.entries[1],
        }
    }

    pub fn matrix_at(&self, i1: usize, i2: usize) -> Sym2 {
        Sym2::new(
            self.entries[0].at(i1, i2),
            self.entries[1].at(i1, i2),
            self.entries[2].at(i1, i2),
        )
    }

    /// `min tr(A)^2 / |A|^2 - 1` over the nodes.
    pub fn nodal_cordes(&self) -> f64 {
        let m = self.gamma.m();
        let mut d = f64::INFINITY;
        for i1 in 0..m {
            for i2 in 0..m {
                let a = self.matrix_at(i1, i2);
                d = d.min(a.trace() * a.trace() / a.frobenius_sq() - 1.0);
            }
        }
        d
    }
}

/// Quadrature cosine/sine transforms `C(d) = (g, cos 2 pi d.y)`,
/// `S(d) = (g, sin 2 pi d.y)` for `|d|_inf <= range`.
struct Transform {
    range: i64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Transform {
    fn new(quad: &CellQuadrature, f: &GridField, range: i64) -> Self {
        let m = quad.m();
        let ph = quad.phases();
        let width = (2 * range + 1) as usize;
        let mut pre = vec![0.0; m * width];
        let mut pim = vec![0.0; m * width];
        for i1 in 0..m {
            for (j, d2) in (-range..=range).enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for i2 in 0..m {
                    let v = f.at(i1, i2);
                    re += v * ph.cos(d2, i2);
                    im += v * ph.sin(d2, i2);
                }
                pre[i1 * width + j] = re;
                pim[i1 * width + j] = im;
            }
        }
        let w = quad.weight();
        let mut cos = vec![0.0; width * width];
        let mut sin = vec![0.0; width * width];
        for (a, d1) in (-range..=range).enumerate() {
            for b in 0..width {
                let mut c = 0.0;
                let mut s = 0.0;
                for i1 in 0..m {
                    let c1 = ph.cos(d1, i1);
                    let s1 = ph.sin(d1, i1);
                    let (re, im) = (pre[i1 * width + b], pim[i1 * width + b]);
                    c += c1 * re - s1 * im;
                    s += s1 * re + c1 * im;
                }
                cos[a * width + b] = c * w;
                sin[a * width + b] = s * w;
            }
        }
        Transform { range, cos, sin }
    }

    #[inline]
    fn idx(&self, d: [i32; 2]) -> usize {
        let width = (2 * self.range + 1) as usize;
        (d[0] as i64 + self.range) as usize * width + (d[1] as i64 + self.range) as usize
    }

    #[inline]
    fn c(&self, d: [i32; 2]) -> f64 {
        self.cos[self.idx(d)]
    }

    #[inline]
    fn s(&self, d: [i32; 2]) -> f64 {
        self.sin[self.idx(d)]
    }

    /// `(g phi_j, phi_i)` for `phi_j = (l, pj)`, `phi_i = (k, pi)`.
    #[inline]
    fn product(&self, l: [i32; 2], pj: Parity, k: [i32; 2], pi: Parity) -> f64 {
        let minus = [l[0] - k[0], l[1] - k[1]];
        let plus = [l[0] + k[0], l[1] + k[1]];
        match (pj, pi) {
            (Parity::Cos, Parity::Cos) => 0.5 * (self.c(minus) + self.c(plus)),
            (Parity::Sin, Parity::Sin) => 0.5 * (self.c(minus) - self.c(plus)),
            (Parity::Sin, Parity::Cos) => 0.5 * (self.s(plus) + self.s(minus)),
            (Parity::Cos, Parity::Sin) => 0.5 * (self.s(plus) - self.s(minus)),
        }
    }

    /// `(g, phi)` for a single basis function.
    #[inline]
    fn single(&self, k: [i32; 2], p: Parity) -> f64 {
        match p {
            Parity::Cos => self.c(k),
            Parity::Sin => self.s(k),
        }
    }
}

fn check_quadrature(space: &TrigSpace, quad: &CellQuadrature) -> Result<()> {
    if quad.m() <= 2 * space.k_max() {
        return Err(HomogError::InvalidInput(format!(
            "quadrature with m = {} cannot resolve products of modes up to K = {}; need m > 2K",
            quad.m(),
            space.k_max()
        )));
    }
    Ok(())
}

/// Transforms of `gamma a11`, `gamma a12`, `gamma a22` up to `|d| <= 2K`.
fn scaled_transforms(samples: &CoefficientSamples, space: &TrigSpace, quad: &CellQuadrature) -> [Transform; 3] {
    let range = 2 * space.k_max() as i64;
    let make = |e: &GridField| Transform::new(quad, &samples.gamma.mul(e), range);
    [
        make(&samples.entries[0]),
        make(&samples.entries[1]),
        make(&samples.entries[2]),
    ]
}

fn assemble_from(tr: &[Transform; 3], mu: f64, space: &TrigSpace) -> DenseMatrix {
    let n = space.dim();
    let mut g = DenseMatrix::zeros(n);
    for i in 0..n {
        let (k, pi) = space.basis(i);
        let test_factor = mu + FOUR_PI_SQ * space.freq_sq(i);
        let row = g.row_mut(i);
        for (j, out) in row.iter_mut().enumerate() {
            let (l, pj) = space.basis(j);
            let (l1, l2) = (l[0] as f64, l[1] as f64);
            let q = l1 * l1 * tr[0].product(l, pj, k, pi)
                + 2.0 * l1 * l2 * tr[1].product(l, pj, k, pi)
                + l2 * l2 * tr[2].product(l, pj, k, pi);
            let mass = if i == j { 0.5 * mu } else { 0.0 };
            *out = test_factor * (mass + FOUR_PI_SQ * q);
        }
    }
    g
}

/// Assemble `G[i][j] = b_mu(phi_j, phi_i)`.
///
/// The form is evaluated with the midpoint rule of `quad`; `quad.m() > 2K` is
/// required so that the mass and Laplacian parts are integrated exactly.
pub fn assemble_b_mu(
    spec: &MatrixFieldSpec,
    mu: f64,
    space: &TrigSpace,
    quad: &CellQuadrature,
) -> Result<DenseMatrix> {
    if !(mu >= 0.0) {
        return Err(HomogError::InvalidInput(format!("mu must be nonnegative, got {mu}")));
    }
    check_quadrature(space, quad)?;
    let samples = CoefficientSamples::new(spec, quad);
    let tr = scaled_transforms(&samples, space, quad);
    Ok(assemble_from(&tr, mu, space))
}

/// `||mu phi - Laplacian phi||` for a coefficient vector, exact.
pub fn shifted_laplacian_norm(space: &TrigSpace, mu: f64, x: &[f64]) -> f64 {
    (x.iter()
        .enumerate()
        .map(|(i, c)| (mu + FOUR_PI_SQ * space.freq_sq(i)).powi(2) * c * c)
        .sum::<f64>()
        / 2.0)
        .sqrt()
}

/// Discrete invariant measure `r = gamma (1 - Laplacian psi) / c`.
#[derive(Clone, Debug)]
pub struct SpectralInvariantMeasure {
    spec: MatrixFieldSpec,
    psi: SpectralFunction,
    r_tilde: GridField,
    r: GridField,
    c: f64,
    residual: f64,
}

impl SpectralInvariantMeasure {
    pub fn psi(&self) -> &SpectralFunction {
        &self.psi
    }

    /// Normalization `(gamma, r_tilde)`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// `1 - Laplacian psi` at the quadrature nodes.
    pub fn r_tilde(&self) -> &GridField {
        &self.r_tilde
    }

    /// `r` at the quadrature nodes.
    pub fn r(&self) -> &GridField {
        &self.r
    }

    /// `r` at an arbitrary point.
    pub fn r_at(&self, y: Point) -> f64 {
        self.spec.gamma(y) * (1.0 - self.psi.laplacian(y)) / self.c
    }

    /// `r` on a separate grid, e.g. a finer one for error measurement.
    pub fn r_on(&self, quad: &CellQuadrature) -> GridField {
        let lap = self.psi.on_grid(quad, Deriv::LAPLACIAN);
        let gamma = GridField::from_fn(quad, |y| self.spec.gamma(y));
        gamma.zip_with(&lap, |g, l| g * (1.0 - l) / self.c)
    }

    pub fn min_r(&self) -> f64 {
        self.r.min()
    }

    /// Max relative residual of the Galerkin system for `psi`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `int r A` by the cell quadrature.
    pub fn effective_matrix(&self, samples: &CoefficientSamples) -> Sym2 {
        Sym2::new(
            self.r.inner(&samples.entries[0]),
            self.r.inner(&samples.entries[1]),
            self.r.inner(&samples.entries[2]),
        )
    }
}

/// Solution of the double-divergence problem.
#[derive(Clone, Debug)]
pub struct DoubleDivSolution {
    pub eta: SpectralFunction,
    /// `q0 = -gamma Laplacian eta + (gamma, Laplacian eta) r` at the nodes.
    pub q0: GridField,
}

/// Factorized cell operator for one coefficient, truncation and quadrature.
///
/// Construction solves for `psi` and the invariant measure; all later solves
/// reuse the same LU factors.
pub struct CellSolver {
    spec: MatrixFieldSpec,
    space: Arc<TrigSpace>,
    quad: CellQuadrature,
    samples: CoefficientSamples,
    transforms: [Transform; 3],
    gram: DenseMatrix,
    lu: DenseLu,
    measure: SpectralInvariantMeasure,
}

impl CellSolver {
    /// Default quadrature `max(4K, 128)` and a Cordes check at the nodes.
    pub fn new(spec: &MatrixFieldSpec, k_max: usize) -> Result<Self> {
        Self::build(spec, k_max, CellQuadrature::default_for(k_max), true)
    }

    pub fn with_quadrature(spec: &MatrixFieldSpec, k_max: usize, quad: CellQuadrature) -> Result<Self> {
        Self::build(spec, k_max, quad, true)
    }

    pub fn build(
        spec: &MatrixFieldSpec,
        k_max: usize,
        quad: CellQuadrature,
        check_cordes: bool,
    ) -> Result<Self> {
        let space = TrigSpace::new(k_max)?;
        check_quadrature(&space, &quad)?;
        let samples = CoefficientSamples::new(spec, &quad);
        if check_cordes {
            let d = samples.nodal_cordes();
            if !(d > 0.0) {
                return Err(HomogError::CordesViolated { delta_hat: d });
            }
        }
        let transforms = scaled_transforms(&samples, &space, &quad);
        let gram = assemble_from(&transforms, 0.0, &space);
        let lu = gram.factorize();

        let rhs = Self::psi_rhs(&transforms, &space);
        let x = lu.solve_transpose(&rhs);
        let residual = relative_residual(&gram.mul_transpose_vec(&x), &rhs, &gram, &x);
        if residual > SOLVE_TOL {
            return Err(HomogError::Residual { stage: "psi", residual, tolerance: SOLVE_TOL });
        }
        let psi = SpectralFunction::from_coeffs(&space, x)?;
        let lap = psi.on_grid(&quad, Deriv::LAPLACIAN);
        let r_tilde = lap.map(|l| 1.0 - l);
        let c = samples.gamma.inner(&r_tilde);
        if !(c > 0.0) {
            return Err(HomogError::NonPositiveNormalization { c });
        }
        let r = samples.gamma.zip_with(&r_tilde, |g, t| g * t / c);
        let measure = SpectralInvariantMeasure {
            spec: spec.clone(),
            psi,
            r_tilde,
            r,
            c,
            residual,
        };
        Ok(CellSolver {
            spec: spec.clone(),
            space,
            quad,
            samples,
            transforms,
            gram,
            lu,
            measure,
        })
    }

    /// `(gamma A : D^2 phi_i)` integrated over the cell, for every basis function.
    fn psi_rhs(tr: &[Transform; 3], space: &TrigSpace) -> Vec<f64> {
        (0..space.dim())
            .map(|i| {
                let (k, p) = space.basis(i);
                let (k1, k2) = (k[0] as f64, k[1] as f64);
                -FOUR_PI_SQ
                    * (k1 * k1 * tr[0].single(k, p)
                        + 2.0 * k1 * k2 * tr[1].single(k, p)
                        + k2 * k2 * tr[2].single(k, p))
            })
            .collect()
    }

    pub fn spec(&self) -> &MatrixFieldSpec {
        &self.spec
    }

    pub fn space(&self) -> &Arc<TrigSpace> {
        &self.space
    }

    pub fn quadrature(&self) -> &CellQuadrature {
        &self.quad
    }

    pub fn samples(&self) -> &CoefficientSamples {
        &self.samples
    }

    /// `G[i][j] = b_0(phi_j, phi_i)`.
    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn measure(&self) -> &SpectralInvariantMeasure {
        &self.measure
    }

    /// Residual of `b_0(phi_i, psi) = (gamma A : D^2 phi_i, 1)` per basis function.
    pub fn psi_residual(&self) -> Vec<f64> {
        let rhs = Self::psi_rhs(&self.transforms, &self.space);
        let lhs = self.gram.mul_transpose_vec(self.measure.psi.coeffs());
        lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect()
    }

    /// `(f, r)` by quadrature.
    pub fn r_average(&self, f: &GridField) -> f64 {
        f.inner(&self.measure.r)
    }

    /// Right-hand side `-(gamma f, Laplacian phi_i)`.
    fn nondiv_rhs(&self, f: &GridField) -> Vec<f64> {
        let proj = project(&self.space, &self.quad, &self.samples.gamma.mul(f));
        proj.iter()
            .enumerate()
            .map(|(i, p)| FOUR_PI_SQ * self.space.freq_sq(i) * p)
            .collect()
    }

    /// Mean-zero `v` with `b_0(v, phi) = -(gamma f, Laplacian phi)`, i.e.
    /// `-A : D^2 v = f`.
    ///
    /// With `project_compatibility`, `f` is first replaced by `f - (f, r)`,
    /// which realizes `T(A, f)`. Otherwise `(f, r)` must vanish.
    pub fn solve_nondiv(&self, f: &GridField, project_compatibility: bool) -> Result<SpectralFunction> {
        let f = self.compatible_source(f, project_compatibility)?;
        let rhs = self.nondiv_rhs(&f);
        let x = self.lu.solve(&rhs);
        let residual = relative_residual(&self.gram.mul_vec(&x), &rhs, &self.gram, &x);
        if residual > SOLVE_TOL {
            return Err(HomogError::Residual { stage: "nondivergence", residual, tolerance: SOLVE_TOL });
        }
        SpectralFunction::from_coeffs(&self.space, x)
    }

    /// `f - (f, r)` when projecting, else `f` after checking `(f, r) = 0`.
    pub fn compatible_source(&self, f: &GridField, project_compatibility: bool) -> Result<GridField> {
        let fr = self.r_average(f);
        if project_compatibility {
            Ok(f.shift(-fr))
        } else {
            let tol = COMPAT_TOL * f.l2_norm();
            if fr.abs() > tol {
                return Err(HomogError::Incompatible { measured: fr, tolerance: tol });
            }
            Ok(f.clone())
        }
    }

    /// `T(A, f)`.
    pub fn t_operator(&self, f: &GridField) -> Result<SpectralFunction> {
        self.solve_nondiv(f, true)
    }

    /// Weak residual `b_0(v, phi_i) + (gamma f, Laplacian phi_i)` per basis function.
    pub fn nondiv_residual(&self, v: &SpectralFunction, f: &GridField) -> Vec<f64> {
        let rhs = self.nondiv_rhs(f);
        let lhs = self.gram.mul_vec(v.coeffs());
        lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect()
    }

    /// Solve `b_0(phi, eta) = (f, phi)` and reconstruct
    /// `q0 = -gamma Laplacian eta + (gamma, Laplacian eta) r`, the mean-zero
    /// solution of `-D^2 : (q A) = f`. Requires `int f = 0`.
    pub fn solve_double_div(&self, f: &GridField) -> Result<DoubleDivSolution> {
        let mean = f.mean();
        if mean.abs() > COMPAT_TOL * f.l2_norm() {
            return Err(HomogError::NonzeroMean { mean });
        }
        let rhs = project(&self.space, &self.quad, f);
        let x = self.lu.solve_transpose(&rhs);
        let residual = relative_residual(&self.gram.mul_transpose_vec(&x), &rhs, &self.gram, &x);
        if residual > SOLVE_TOL {
            return Err(HomogError::Residual { stage: "double divergence", residual, tolerance: SOLVE_TOL });
        }
        let eta = SpectralFunction::from_coeffs(&self.space, x)?;
        let lap = eta.on_grid(&self.quad, Deriv::LAPLACIAN);
        let gamma = &self.samples.gamma;
        let shift = gamma.inner(&lap);
        let q0 = gamma
            .zip_with(&lap, |g, l| -g * l)
            .zip_with(&self.measure.r, |q, r| q + shift * r);
        Ok(DoubleDivSolution { eta, q0 })
    }

    /// Weak residual `(q, -A : D^2 phi_i) - (f, phi_i)` per basis function,
    /// evaluated by quadrature independently of the solve.
    pub fn double_div_residual(&self, q: &GridField, f: &GridField) -> Vec<f64> {
        let qa: Vec<Vec<f64>> = self
            .samples
            .entries
            .iter()
            .map(|e| project(&self.space, &self.quad, &q.mul(e)))
            .collect();
        let pf = project(&self.space, &self.quad, f);
        (0..self.space.dim())
            .map(|i| {
                let (k, _) = self.space.basis(i);
                let (k1, k2) = (k[0] as f64, k[1] as f64);
                FOUR_PI_SQ * (k1 * k1 * qa[0][i] + 2.0 * k1 * k2 * qa[1][i] + k2 * k2 * qa[2][i]) - pf[i]
            })
            .collect()
    }

    /// Sample an arbitrary scalar function on the solver's quadrature.
    pub fn grid(&self, f: impl Fn(Point) -> f64) -> GridField {
        GridField::from_fn(&self.quad, f)
    }
}

fn relative_residual(lhs: &[f64], rhs: &[f64], g: &DenseMatrix, x: &[f64]) -> f64 {
    let res: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let gmax = (0..g.dim()).map(|i| max_abs(g.row(i))).fold(0.0, f64::max);
    let scale = max_abs(rhs).max(gmax * max_abs(x));
    if scale == 0.0 {
        0.0
    } else {
        max_abs(&res) / scale
    }
}

/// `psi_K` for the given truncation and quadrature.
pub fn solve_psi(spec: &MatrixFieldSpec, k_max: usize, quad: CellQuadrature) -> Result<SpectralFunction> {
    Ok(CellSolver::with_quadrature(spec, k_max, quad)?.measure.psi)
}

/// Invariant measure built from `psi_K`.
pub fn invariant_measure_spectral(
    spec: &MatrixFieldSpec,
    k_max: usize,
    quad: CellQuadrature,
) -> Result<SpectralInvariantMeasure> {
    Ok(CellSolver::with_quadrature(spec, k_max, quad)?.measure)
}
