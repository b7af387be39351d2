//! Periodic coefficient fields on the unit cell.
//!
//! A [`MatrixFieldSpec`] is a `Z^2`-periodic map `y -> A(y)` into symmetric
//! positive definite 2x2 matrices together with ellipticity bounds
//! `lambda <= A <= Lambda`. Evaluation always wraps `y` into `[0,1)^2` first.
//!
//! Registered built-ins:
//!
//! * `identity` : `A = I`
//! * `paper-sec5` : the discontinuous laminate benchmark `A = diag(1 - a, a)`
//! * `diag-1-9` : `A = diag(1, 9)`
//! * `ca-m-generic` : `A = C + a M` with a trigonometric polynomial `a`
//! * `diag-type-eps` : a smooth diagonal field with non-constant trace

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};

pub type Point = [f64; 2];

/// Sampling tolerance used when checking eigenvalues against `[lambda, Lambda]`.
const BOUND_TOL: f64 = 1e-12;

/// Symmetric 2x2 matrix stored by its three independent entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };
    pub const ZERO: Sym2 = Sym2 { a11: 0.0, a12: 0.0, a22: 0.0 };

    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub const fn diag(a11: f64, a22: f64) -> Self {
        Sym2 { a11, a12: 0.0, a22 }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Sym2::new(v[0], v[1], v[2])
    }

    /// Entry `(i, j)` with zero-based indices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a11,
            (1, 1) => self.a22,
            _ => self.a12,
        }
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// `|A|^2 = A : A`.
    #[inline]
    pub fn frobenius_sq(&self) -> f64 {
        self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22
    }

    #[inline]
    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Frobenius inner product `A : B`.
    #[inline]
    pub fn ddot(&self, other: &Sym2) -> f64 {
        self.a11 * other.a11 + 2.0 * self.a12 * other.a12 + self.a22 * other.a22
    }

    /// `v . A v`
    #[inline]
    pub fn quad_form(&self, v: [f64; 2]) -> f64 {
        self.a11 * v[0] * v[0] + 2.0 * self.a12 * v[0] * v[1] + self.a22 * v[1] * v[1]
    }

    #[inline]
    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a12 * v[0] + self.a22 * v[1],
        ]
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(s * self.a11, s * self.a12, s * self.a22)
    }

    #[inline]
    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2::new(self.a11 + other.a11, self.a12 + other.a12, self.a22 + other.a22)
    }

    #[inline]
    pub fn sub(&self, other: &Sym2) -> Sym2 {
        Sym2::new(self.a11 - other.a11, self.a12 - other.a12, self.a22 - other.a22)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let rad = half_diff.hypot(self.a12);
        let hi = mean + rad;
        // det / hi avoids cancellation in mean - rad for ill-conditioned SPD input
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        let lo = if mean > 0.0 && det > 0.0 { det / hi } else { mean - rad };
        [lo, hi]
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues()[0] > 0.0
    }

    /// Cordes scaling `tr(A) / |A|^2`.
    #[inline]
    pub fn cordes_gamma(&self) -> f64 {
        self.trace() / self.frobenius_sq()
    }
}

/// One term `cos * cos(2 pi k.y) + sin * sin(2 pi k.y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial on the unit torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly { constant: c, terms: Vec::new() }
    }

    pub fn with_cos(mut self, k: [i32; 2], c: f64) -> Self {
        self.terms.push(TrigTerm { k, cos: c, sin: 0.0 });
        self
    }

    pub fn with_sin(mut self, k: [i32; 2], s: f64) -> Self {
        self.terms.push(TrigTerm { k, cos: 0.0, sin: s });
        self
    }

    pub fn eval(&self, y: Point) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let arg = 2.0 * PI * (t.k[0] as f64 * y[0] + t.k[1] as f64 * y[1]);
            if t.cos != 0.0 {
                v += t.cos * arg.cos();
            }
            if t.sin != 0.0 {
                v += t.sin * arg.sin();
            }
        }
        v
    }

    /// Largest `|k|_inf` present.
    pub fn bandwidth(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.k[0].unsigned_abs().max(t.k[1].unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    /// Crude bound `|constant| + sum(|cos| + |sin|)`.
    pub fn abs_bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>()
    }
}

/// Pieces of the discontinuous laminate benchmark
/// `A(y) = diag(1 - a(y), a(y))` with
/// `a = (3 - 2 w(y1) sin(2 pi y2)) / (8 + (pi^2 t(y1) - 2 w(y1)) sin(2 pi y2))`.
pub mod laminate {
    use super::{wrap, Point};
    use std::f64::consts::PI;

    /// Sign of `sin(2 pi t)`; `+1` on the zero set `t in Z/2`.
    #[inline]
    pub fn jump_sign(t: f64) -> f64 {
        let f = wrap(t);
        if f <= 0.5 {
            1.0
        } else {
            -1.0
        }
    }

    /// `S(t) = 1 - 2 (t - floor t)`.
    #[inline]
    pub fn sawtooth(t: f64) -> f64 {
        1.0 - 2.0 * wrap(t)
    }

    /// `theta(t) = S(t) (1 - w(t) S(t))`, a continuous periodic profile with
    /// `theta'' = -8 w(t)`.
    #[inline]
    pub fn profile(t: f64) -> f64 {
        let s = sawtooth(t);
        s * (1.0 - jump_sign(t) * s)
    }

    /// `theta'(t) = -2 + 4 w(t) S(t)`.
    #[inline]
    pub fn profile_derivative(t: f64) -> f64 {
        -2.0 + 4.0 * jump_sign(t) * sawtooth(t)
    }

    pub fn a(y: Point) -> f64 {
        let w = jump_sign(y[0]);
        let s = (2.0 * PI * wrap(y[1])).sin();
        (3.0 - 2.0 * w * s) / (8.0 + (PI * PI * profile(y[0]) - 2.0 * w) * s)
    }

    /// Exact invariant measure `1 + (pi^2 theta(y1) - 2 w(y1)) sin(2 pi y2) / 8`.
    pub fn invariant_measure(y: Point) -> f64 {
        let s = (2.0 * PI * wrap(y[1])).sin();
        1.0 + (PI * PI * profile(y[0]) - 2.0 * jump_sign(y[0])) * s / 8.0
    }

    /// Exact `T(A, a) = -theta(y1) sin(2 pi y2) / 32`.
    pub fn corrector(y: Point) -> f64 {
        -profile(y[0]) * (2.0 * PI * wrap(y[1])).sin() / 32.0
    }

    /// Gradient of [`corrector`].
    pub fn corrector_gradient(y: Point) -> [f64; 2] {
        let arg = 2.0 * PI * wrap(y[1]);
        [
            -profile_derivative(y[0]) * arg.sin() / 32.0,
            -profile(y[0]) * 2.0 * PI * arg.cos() / 32.0,
        ]
    }
}

/// Wrap a coordinate into `[0, 1)`.
#[inline]
pub fn wrap(t: f64) -> f64 {
    let f = t - t.floor();
    // t slightly below an integer can round up to exactly 1.0
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[inline]
pub fn wrap_point(y: Point) -> Point {
    [wrap(y[0]), wrap(y[1])]
}

pub type FieldFn = Arc<dyn Fn(Point) -> Sym2 + Send + Sync>;

/// How the field is evaluated.
#[derive(Clone)]
pub enum CoefficientKind {
    Constant(Sym2),
    /// The discontinuous laminate `diag(1 - a, a)`.
    Laminate,
    /// `A = C + a M` with constant symmetric `C`, `M`.
    CaM { c: Sym2, m: Sym2, a: TrigPoly },
    /// Entrywise trigonometric polynomials.
    Trig { a11: TrigPoly, a12: TrigPoly, a22: TrigPoly },
    /// Piecewise constant on an `grid x grid` array of subcells; cell `(i, j)`
    /// (`i` along `y1`, `j` along `y2`) is stored at index `j * grid + i`.
    Table { grid: usize, cells: Vec<Sym2> },
    /// Arbitrary evaluator supplied by the caller.
    Custom(FieldFn),
}

impl fmt::Debug for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::Constant(a) => f.debug_tuple("Constant").field(a).finish(),
            CoefficientKind::Laminate => f.write_str("Laminate"),
            CoefficientKind::CaM { c, m, a } => f
                .debug_struct("CaM")
                .field("c", c)
                .field("m", m)
                .field("a", a)
                .finish(),
            CoefficientKind::Trig { a11, a12, a22 } => f
                .debug_struct("Trig")
                .field("a11", a11)
                .field("a12", a12)
                .field("a22", a22)
                .finish(),
            CoefficientKind::Table { grid, .. } => {
                f.debug_struct("Table").field("grid", grid).finish_non_exhaustive()
            }
            CoefficientKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A Y-periodic symmetric coefficient field with ellipticity bounds.
#[derive(Clone, Debug)]
pub struct MatrixFieldSpec {
    name: String,
    kind: CoefficientKind,
    lambda: f64,
    big_lambda: f64,
    exact_delta: Option<f64>,
}

pub const BUILTINS: &[&str] = &[
    "identity",
    "paper-sec5",
    "diag-1-9",
    "ca-m-generic",
    "diag-type-eps",
];

impl MatrixFieldSpec {
    /// Look up a registered built-in.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::trusted(name, CoefficientKind::Constant(Sym2::IDENTITY), 1.0, 1.0, Some(1.0))),
            "paper-sec5" => Ok(Self::trusted(name, CoefficientKind::Laminate, 0.1, 0.9, Some(1.0 / 9.0))),
            "diag-1-9" => Ok(Self::trusted(
                name,
                CoefficientKind::Constant(Sym2::diag(1.0, 9.0)),
                1.0,
                9.0,
                Some(9.0 / 41.0),
            )),
            "ca-m-generic" => {
                let (c, m, a) = default_cam();
                Self::ca_m(c, m, a, Some((0.2, 1.6)))
            }
            "diag-type-eps" => {
                // Both entries must vary independently: a constant entry makes the
                // field of the form C + aM, which is always type-eps^2.
                let a11 = TrigPoly::constant(1.0)
                    .with_cos([0, 1], 0.4)
                    .with_sin([1, -1], 0.2);
                let a22 = TrigPoly::constant(1.0)
                    .with_sin([1, 0], 0.4)
                    .with_cos([1, 1], 0.3);
                let mut spec = Self::trig(a11, TrigPoly::default(), a22, Some((0.3, 1.7)))?;
                spec.name = name.to_string();
                Ok(spec)
            }
            other => Err(HomogError::UnknownBuiltin(other.to_string())),
        }
    }

    fn trusted(
        name: &str,
        kind: CoefficientKind,
        lambda: f64,
        big_lambda: f64,
        exact_delta: Option<f64>,
    ) -> Self {
        MatrixFieldSpec {
            name: name.to_string(),
            kind,
            lambda,
            big_lambda,
            exact_delta,
        }
    }

    /// Constant field; bounds are the eigenvalues.
    pub fn constant(a: Sym2) -> Result<Self> {
        let ev = a.eigenvalues();
        if ev[0] <= 0.0 {
            return Err(HomogError::NotSpd { cell: 0, eigenvalues: ev });
        }
        let delta = (a.trace() * a.trace() / a.frobenius_sq() - 1.0).min(1.0);
        Ok(Self::trusted("constant", CoefficientKind::Constant(a), ev[0], ev[1], Some(delta)))
    }

    /// `A = C + a M`; bounds are verified (or, when absent, estimated) by sampling.
    pub fn ca_m(c: Sym2, m: Sym2, a: TrigPoly, bounds: Option<(f64, f64)>) -> Result<Self> {
        Self::sampled("ca-m-generic", CoefficientKind::CaM { c, m, a }, bounds)
    }

    pub fn trig(a11: TrigPoly, a12: TrigPoly, a22: TrigPoly, bounds: Option<(f64, f64)>) -> Result<Self> {
        Self::sampled("trig", CoefficientKind::Trig { a11, a12, a22 }, bounds)
    }

    /// Caller-supplied evaluator. Bounds are verified by sampling, or
    /// estimated from the samples when absent.
    pub fn custom(name: &str, f: FieldFn, bounds: Option<(f64, f64)>) -> Result<Self> {
        let mut spec = Self::sampled(name, CoefficientKind::Custom(f), bounds)?;
        spec.name = name.to_string();
        Ok(spec)
    }

    /// Piecewise-constant table. Every cell must be SPD; supplied bounds must
    /// contain every cell's eigenvalues.
    pub fn table(grid: usize, cells: Vec<Sym2>, bounds: Option<(f64, f64)>) -> Result<Self> {
        if grid == 0 || cells.len() != grid * grid {
            return Err(HomogError::InvalidInput(format!(
                "table with grid {grid} needs {} cells, got {}",
                grid * grid,
                cells.len()
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (idx, cell) in cells.iter().enumerate() {
            let ev = cell.eigenvalues();
            if !(ev[0] > 0.0) || !ev[1].is_finite() {
                return Err(HomogError::NotSpd { cell: idx, eigenvalues: ev });
            }
            lo = lo.min(ev[0]);
            hi = hi.max(ev[1]);
        }
        let (lambda, big_lambda) = check_bounds(bounds, lo, hi)?;
        Ok(Self::trusted(
            "table",
            CoefficientKind::Table { grid, cells },
            lambda,
            big_lambda,
            None,
        ))
    }

    fn sampled(name: &str, kind: CoefficientKind, bounds: Option<(f64, f64)>) -> Result<Self> {
        let probe = Self::trusted(name, kind, 0.0, 0.0, None);
        let (lo, hi) = probe.sampled_eigen_range(256);
        if !(lo > 0.0) {
            return Err(HomogError::EllipticityMismatch {
                lambda: bounds.map_or(0.0, |b| b.0),
                big_lambda: bounds.map_or(0.0, |b| b.1),
                observed_min: lo,
                observed_max: hi,
            });
        }
        let (lambda, big_lambda) = check_bounds(bounds, lo, hi)?;
        Ok(MatrixFieldSpec {
            lambda,
            big_lambda,
            ..probe
        })
    }

    /// Parse a JSON coefficient descriptor.
    pub fn from_descriptor(json: &str) -> Result<Self> {
        let desc: Descriptor = serde_json::from_str(json)?;
        desc.build()
    }

    /// Resolve a CLI-style source: a built-in name or a path to a descriptor.
    pub fn from_name_or_path(source: &str) -> Result<Self> {
        if BUILTINS.contains(&source) {
            return Self::builtin(source);
        }
        let path = std::path::Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::from_descriptor(&text);
        }
        Err(HomogError::UnknownBuiltin(source.to_string()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            CoefficientKind::Constant(_) => true,
            CoefficientKind::CaM { a, m, .. } => a.is_constant() || *m == Sym2::ZERO,
            CoefficientKind::Trig { a11, a12, a22 } => {
                a11.is_constant() && a12.is_constant() && a22.is_constant()
            }
            CoefficientKind::Table { cells, .. } => cells.iter().all(|c| *c == cells[0]),
            _ => false,
        }
    }

    /// Trigonometric bandwidth of `A` when it is a trigonometric polynomial.
    pub fn bandwidth(&self) -> Option<usize> {
        match &self.kind {
            CoefficientKind::Constant(_) => Some(0),
            CoefficientKind::CaM { a, .. } => Some(a.bandwidth()),
            CoefficientKind::Trig { a11, a12, a22 } => {
                Some(a11.bandwidth().max(a12.bandwidth()).max(a22.bandwidth()))
            }
            _ => None,
        }
    }

    /// `A(y)`, with `y` wrapped into the unit cell.
    pub fn evaluate(&self, y: Point) -> Sym2 {
        let y = wrap_point(y);
        match &self.kind {
            CoefficientKind::Constant(a) => *a,
            CoefficientKind::Laminate => {
                let a = laminate::a(y);
                Sym2::diag(1.0 - a, a)
            }
            CoefficientKind::CaM { c, m, a } => c.add(&m.scale(a.eval(y))),
            CoefficientKind::Trig { a11, a12, a22 } => Sym2::new(a11.eval(y), a12.eval(y), a22.eval(y)),
            CoefficientKind::Table { grid, cells } => {
                let n = *grid;
                let i = ((y[0] * n as f64) as usize).min(n - 1);
                let j = ((y[1] * n as f64) as usize).min(n - 1);
                cells[j * n + i]
            }
            CoefficientKind::Custom(f) => f(y),
        }
    }

    /// Cordes scaling `gamma(y) = tr A / |A|^2`.
    pub fn gamma(&self, y: Point) -> f64 {
        self.evaluate(y).cordes_gamma()
    }

    /// The scalar `a` for fields of the form `C + a M`.
    pub fn scalar_factor(&self, y: Point) -> Option<f64> {
        let y = wrap_point(y);
        match &self.kind {
            CoefficientKind::Laminate => Some(laminate::a(y)),
            CoefficientKind::CaM { a, .. } => Some(a.eval(y)),
            _ => None,
        }
    }

    /// Decomposition `A = C + a M` when the field has that structure.
    pub fn cam_parts(&self) -> Option<(Sym2, Sym2)> {
        match &self.kind {
            CoefficientKind::Laminate => Some((Sym2::diag(1.0, 0.0), Sym2::diag(-1.0, 1.0))),
            CoefficientKind::CaM { c, m, .. } => Some((*c, *m)),
            _ => None,
        }
    }

    /// A Cordes parameter that is guaranteed valid: the registered exact value
    /// when known, otherwise `lambda / Lambda` which always works for n = 2.
    pub fn certified_delta(&self) -> f64 {
        self.exact_delta.unwrap_or(self.lambda / self.big_lambda)
    }

    /// `C_delta = (1 - sqrt(1 - delta))^-1` for [`certified_delta`](Self::certified_delta).
    pub fn coercivity_constant(&self) -> f64 {
        coercivity_constant(self.certified_delta())
    }

    fn sampled_eigen_range(&self, resolution: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        // vertices and cell midpoints
        for i in 0..2 * resolution {
            for j in 0..2 * resolution {
                let y = [
                    i as f64 / (2 * resolution) as f64,
                    j as f64 / (2 * resolution) as f64,
                ];
                let ev = self.evaluate(y).eigenvalues();
                lo = lo.min(ev[0]);
                hi = hi.max(ev[1]);
            }
        }
        (lo, hi)
    }

    /// Estimate the Cordes parameter by sampling on the vertex grid
    /// `{(i, j) / resolution}`. Doubling the resolution gives a superset of
    /// sample points, so the estimate can only decrease.
    pub fn cordes_check(&self, resolution: usize) -> Result<CordesReport> {
        if resolution < 2 {
            return Err(HomogError::InvalidInput(format!(
                "Cordes sampling resolution must be at least 2, got {resolution}"
            )));
        }
        let mut delta_hat = f64::INFINITY;
        let mut g_lo = f64::INFINITY;
        let mut g_hi = f64::NEG_INFINITY;
        for i in 0..resolution {
            for j in 0..resolution {
                let y = [i as f64 / resolution as f64, j as f64 / resolution as f64];
                let a = self.evaluate(y);
                let norm_sq = a.frobenius_sq();
                let d = a.trace() * a.trace() / norm_sq - 1.0;
                delta_hat = delta_hat.min(d);
                let g = a.trace() / norm_sq;
                g_lo = g_lo.min(g);
                g_hi = g_hi.max(g);
            }
        }
        let delta_hat = delta_hat.min(1.0);
        Ok(CordesReport {
            delta_hat,
            holds: delta_hat > 0.0,
            n_samples: resolution,
            gamma_bounds: (g_lo, g_hi),
            certified_delta: self.exact_delta,
        })
    }

    /// Analytic reference data, if registered for this field.
    pub fn reference(&self) -> Option<ReferenceSolution> {
        match &self.kind {
            CoefficientKind::Laminate => reference_solution("paper-sec5").ok(),
            CoefficientKind::Constant(a) => Some(ReferenceSolution::constant(&self.name, *a)),
            _ => None,
        }
    }
}

fn check_bounds(bounds: Option<(f64, f64)>, lo: f64, hi: f64) -> Result<(f64, f64)> {
    match bounds {
        Some((lambda, big_lambda)) => {
            if !(lambda > 0.0) || big_lambda < lambda || lo < lambda - BOUND_TOL || hi > big_lambda + BOUND_TOL {
                Err(HomogError::EllipticityMismatch {
                    lambda,
                    big_lambda,
                    observed_min: lo,
                    observed_max: hi,
                })
            } else {
                Ok((lambda, big_lambda))
            }
        }
        None => Ok((lo, hi)),
    }
}

fn default_cam() -> (Sym2, Sym2, TrigPoly) {
    let c = Sym2::new(1.0, 0.2, 0.8);
    let m = Sym2::new(0.5, 0.1, -0.3);
    let a = TrigPoly::default()
        .with_sin([1, 0], 0.4)
        .with_cos([1, 2], 0.3)
        .with_sin([2, -1], 0.2);
    (c, m, a)
}

/// `C_delta = (1 - sqrt(1 - delta))^-1`.
pub fn coercivity_constant(delta: f64) -> f64 {
    1.0 / (1.0 - (1.0 - delta).sqrt())
}

/// Outcome of a sampled Cordes check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CordesReport {
    /// `min tr(A)^2 / |A|^2 - 1` over the samples.
    pub delta_hat: f64,
    pub holds: bool,
    /// Samples per axis.
    pub n_samples: usize,
    pub gamma_bounds: (f64, f64),
    /// Exact Cordes parameter registered for the field, if any.
    pub certified_delta: Option<f64>,
}

impl CordesReport {
    /// The registered value when present, else the sampled one.
    pub fn delta(&self) -> f64 {
        self.certified_delta.unwrap_or(self.delta_hat)
    }
}

impl fmt::Display for CordesReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples per axis : {}", self.n_samples)?;
        writeln!(f, "delta (sampled)  : {:.12}", self.delta_hat)?;
        match self.certified_delta {
            Some(d) => writeln!(f, "delta (exact)    : {d:.12}")?,
            None => writeln!(f, "delta (exact)    : n/a")?,
        }
        writeln!(
            f,
            "gamma range      : [{:.12}, {:.12}]",
            self.gamma_bounds.0, self.gamma_bounds.1
        )?;
        write!(f, "Cordes condition : {}", if self.holds { "holds" } else { "FAILS" })
    }
}

#[derive(Clone, Copy, Debug)]
enum ReferenceKind {
    Constant,
    Laminate,
}

/// Closed-form invariant measure, corrector `T(A, a)` and effective matrix.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub name: String,
    /// Exact effective matrix.
    pub a_bar: Sym2,
    /// Exact `(a, r)` for fields of the form `C + a M`.
    pub mean_a: Option<f64>,
    kind: ReferenceKind,
}

impl ReferenceSolution {
    fn constant(name: &str, a: Sym2) -> Self {
        ReferenceSolution {
            name: name.to_string(),
            a_bar: a,
            mean_a: None,
            kind: ReferenceKind::Constant,
        }
    }

    /// Exact invariant measure.
    pub fn r(&self, y: Point) -> f64 {
        match self.kind {
            ReferenceKind::Constant => 1.0,
            ReferenceKind::Laminate => laminate::invariant_measure(y),
        }
    }

    /// Exact `T(A, a)`; zero for constant fields.
    pub fn w(&self, y: Point) -> f64 {
        match self.kind {
            ReferenceKind::Constant => 0.0,
            ReferenceKind::Laminate => laminate::corrector(y),
        }
    }
}

/// Look up the analytic reference for a built-in.
pub fn reference_solution(name: &str) -> Result<ReferenceSolution> {
    match name {
        "paper-sec5" => Ok(ReferenceSolution {
            name: name.to_string(),
            a_bar: Sym2::diag(5.0 / 8.0, 3.0 / 8.0),
            mean_a: Some(3.0 / 8.0),
            kind: ReferenceKind::Laminate,
        }),
        "identity" => Ok(ReferenceSolution::constant(name, Sym2::IDENTITY)),
        "diag-1-9" => Ok(ReferenceSolution::constant(name, Sym2::diag(1.0, 9.0))),
        other => Err(HomogError::NoReference(other.to_string())),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Descriptor {
    Table {
        n: usize,
        grid: usize,
        cells: Vec<[f64; 3]>,
        lambda: Option<f64>,
        #[serde(rename = "Lambda")]
        big_lambda: Option<f64>,
    },
    Builtin {
        builtin: String,
        #[serde(rename = "C")]
        c: Option<[f64; 3]>,
        #[serde(rename = "M")]
        m: Option<[f64; 3]>,
        a: Option<TrigPoly>,
        lambda: Option<f64>,
        #[serde(rename = "Lambda")]
        big_lambda: Option<f64>,
    },
}

fn bounds_pair(lambda: Option<f64>, big_lambda: Option<f64>) -> Result<Option<(f64, f64)>> {
    match (lambda, big_lambda) {
        (Some(l), Some(u)) => Ok(Some((l, u))),
        (None, None) => Ok(None),
        _ => Err(HomogError::InvalidInput(
            "supply both `lambda` and `Lambda` or neither".into(),
        )),
    }
}

impl Descriptor {
    fn build(self) -> Result<MatrixFieldSpec> {
        match self {
            Descriptor::Table { n, grid, cells, lambda, big_lambda } => {
                if n != 2 {
                    return Err(HomogError::InvalidInput(format!("only n = 2 is supported, got {n}")));
                }
                let cells = cells.into_iter().map(Sym2::from_array).collect();
                MatrixFieldSpec::table(grid, cells, bounds_pair(lambda, big_lambda)?)
            }
            Descriptor::Builtin { builtin, c, m, a, lambda, big_lambda } => {
                let has_params = c.is_some() || m.is_some() || a.is_some();
                if builtin == "ca-m-generic" && has_params {
                    let (c0, m0, a0) = default_cam();
                    let bounds = bounds_pair(lambda, big_lambda)?;
                    MatrixFieldSpec::ca_m(
                        c.map(Sym2::from_array).unwrap_or(c0),
                        m.map(Sym2::from_array).unwrap_or(m0),
                        a.unwrap_or(a0),
                        bounds,
                    )
                } else if has_params {
                    Err(HomogError::InvalidInput(format!(
                        "built-in `{builtin}` takes no parameters"
                    )))
                } else {
                    MatrixFieldSpec::builtin(&builtin)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laminate_at_quarter_point() {
        let spec = MatrixFieldSpec::builtin("paper-sec5").unwrap();
        let a = spec.evaluate([0.25, 0.25]);
        let expected = 1.0 / (6.0 + PI * PI / 4.0);
        assert!((a.a22 - expected).abs() < 1e-15);
        assert!((a.a11 - (1.0 - expected)).abs() < 1e-15);
        assert!((expected - 0.118105).abs() < 1e-5);
        assert_eq!(a.a12, 0.0);
        let g = spec.gamma([0.25, 0.25]);
        assert!((g - 1.0 / ((1.0 - expected).powi(2) + expected.powi(2))).abs() < 1e-14);
        assert!((g - 1.26310).abs() < 2e-5);
    }

    #[test]
    fn gamma_of_simple_matrices() {
        assert_eq!(Sym2::IDENTITY.cordes_gamma(), 1.0);
        assert_eq!(Sym2::diag(0.5, 0.5).cordes_gamma(), 2.0);
    }

    #[test]
    fn laminate_scalar_within_published_bounds() {
        let n = 256;
        for i in 0..n {
            for j in 0..n {
                let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let a = laminate::a(y);
                assert!((0.1 - 1e-14..=5.0 / 6.0 + 1e-14).contains(&a), "a = {a} at {y:?}");
            }
        }
    }

    #[test]
    fn jump_sign_convention_on_zero_set() {
        assert_eq!(laminate::jump_sign(0.0), 1.0);
        assert_eq!(laminate::jump_sign(0.5), 1.0);
        assert_eq!(laminate::jump_sign(0.75), -1.0);
        assert_eq!(laminate::jump_sign(-0.25), -1.0);
    }

    #[test]
    fn cordes_identity_and_diag() {
        let id = MatrixFieldSpec::builtin("identity").unwrap();
        let rep = id.cordes_check(8).unwrap();
        assert_eq!(rep.delta_hat, 1.0);
        assert!(rep.holds);

        let d = MatrixFieldSpec::builtin("diag-1-9").unwrap();
        let rep = d.cordes_check(4).unwrap();
        assert!((rep.delta_hat - 9.0 / 41.0).abs() < 1e-15);
        assert!(rep.delta_hat >= 1.0 / 9.0);
    }

    #[test]
    fn cordes_laminate_at_least_one_ninth() {
        let spec = MatrixFieldSpec::builtin("paper-sec5").unwrap();
        let rep = spec.cordes_check(1024).unwrap();
        assert!(rep.holds);
        assert!(rep.delta_hat >= 1.0 / 9.0);
        assert_eq!(rep.certified_delta, Some(1.0 / 9.0));
        let (lo, hi) = rep.gamma_bounds;
        assert!(lo >= 0.1 / 0.81 - 1e-12 && hi <= 0.9 / 0.01 + 1e-12);
    }

    #[test]
    fn cordes_rejects_tiny_resolution() {
        let spec = MatrixFieldSpec::builtin("identity").unwrap();
        assert!(spec.cordes_check(1).is_err());
    }

    #[test]
    fn reference_values() {
        let r = reference_solution("paper-sec5").unwrap();
        assert!((r.r([0.25, 0.25]) - (1.0 + (PI * PI / 4.0 - 2.0) / 8.0)).abs() < 1e-15);
        assert!((r.r([0.25, 0.25]) - 1.058425).abs() < 1e-6);
        assert_eq!(r.a_bar, Sym2::diag(0.625, 0.375));
        assert_eq!(r.mean_a, Some(0.375));
        assert!(matches!(reference_solution("nope"), Err(HomogError::NoReference(_))));
    }

    #[test]
    fn reference_measure_has_unit_mass() {
        let r = reference_solution("paper-sec5").unwrap();
        let n = 512;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                sum += r.r([(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64]);
            }
        }
        assert!((sum / (n * n) as f64 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn table_descriptor_round_trip() {
        let json = r#"{"n": 2, "grid": 2, "cells": [[1,0,1],[2,0.5,1],[1,0,3],[1,0,1]]}"#;
        let spec = MatrixFieldSpec::from_descriptor(json).unwrap();
        assert_eq!(spec.evaluate([0.75, 0.25]), Sym2::new(2.0, 0.5, 1.0));
        assert_eq!(spec.evaluate([0.25, 0.75]), Sym2::new(1.0, 0.0, 3.0));
        assert_eq!(spec.evaluate([1.25, -0.25]), Sym2::new(1.0, 0.0, 3.0));
        assert!((spec.big_lambda() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn table_rejects_non_spd_cell() {
        let json = r#"{"n": 2, "grid": 1, "cells": [[1, 2, 1]]}"#;
        assert!(matches!(
            MatrixFieldSpec::from_descriptor(json),
            Err(HomogError::NotSpd { cell: 0, .. })
        ));
    }

    #[test]
    fn table_rejects_wrong_bounds() {
        let json = r#"{"n": 2, "grid": 1, "cells": [[1, 0, 4]], "lambda": 1, "Lambda": 2}"#;
        assert!(matches!(
            MatrixFieldSpec::from_descriptor(json),
            Err(HomogError::EllipticityMismatch { .. })
        ));
    }

    #[test]
    fn builtin_descriptor_and_unknown_name() {
        let spec = MatrixFieldSpec::from_descriptor(r#"{"builtin": "diag-1-9"}"#).unwrap();
        assert_eq!(spec.evaluate([0.3, 0.1]), Sym2::diag(1.0, 9.0));
        assert!(matches!(
            MatrixFieldSpec::from_descriptor(r#"{"builtin": "nope"}"#),
            Err(HomogError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn cam_descriptor_with_parameters() {
        let json = r#"{"builtin": "ca-m-generic", "C": [1, 0, 1], "M": [1, 0, -1],
                       "a": {"terms": [{"k": [1, 0], "sin": 0.5}]}, "lambda": 0.5, "Lambda": 1.5}"#;
        let spec = MatrixFieldSpec::from_descriptor(json).unwrap();
        let a = spec.evaluate([0.25, 0.0]);
        assert!((a.a11 - 1.5).abs() < 1e-15 && (a.a22 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn builtins_verify_their_bounds() {
        for name in BUILTINS {
            let spec = MatrixFieldSpec::builtin(name).unwrap();
            assert!(spec.lambda() > 0.0 && spec.big_lambda() >= spec.lambda(), "{name}");
        }
    }
}
