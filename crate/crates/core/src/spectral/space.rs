//! Truncated real trigonometric basis of the zero-mean periodic functions on
//! the unit cell, midpoint quadrature grids and grid-sampled fields.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficient::{Point, Sym2};
use crate::error::{HomogError, Result};

const TWO_PI: f64 = 2.0 * PI;
const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Cos,
    Sin,
}

/// Span of `cos(2 pi k.y)`, `sin(2 pi k.y)` over the half-lattice
/// `{k1 > 0} u {k1 = 0, k2 > 0}` with `|k|_inf <= K`.
///
/// Basis index `2p` is the cosine and `2p + 1` the sine of mode `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSpace {
    k_max: usize,
    modes: Vec<[i32; 2]>,
}

impl TrigSpace {
    pub fn new(k_max: usize) -> Result<Arc<Self>> {
        if k_max == 0 {
            return Err(HomogError::InvalidInput("spectral truncation K must be at least 1".into()));
        }
        let k = k_max as i32;
        let mut modes = Vec::with_capacity(((2 * k_max + 1).pow(2) - 1) / 2);
        for k2 in 1..=k {
            modes.push([0, k2]);
        }
        for k1 in 1..=k {
            for k2 in -k..=k {
                modes.push([k1, k2]);
            }
        }
        Ok(Arc::new(TrigSpace { k_max, modes }))
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `(2K + 1)^2 - 1`
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn modes(&self) -> &[[i32; 2]] {
        &self.modes
    }

    #[inline]
    pub fn basis(&self, index: usize) -> ([i32; 2], Parity) {
        let parity = if index % 2 == 0 { Parity::Cos } else { Parity::Sin };
        (self.modes[index / 2], parity)
    }

    /// `|k|^2` of the mode carrying basis function `index`.
    #[inline]
    pub fn freq_sq(&self, index: usize) -> f64 {
        let k = self.modes[index / 2];
        (k[0] * k[0] + k[1] * k[1]) as f64
    }

    /// Basis index of `(k, parity)`, if `k` is in the half-lattice.
    pub fn index_of(&self, k: [i32; 2], parity: Parity) -> Option<usize> {
        let kk = self.k_max as i32;
        if k[0].abs() > kk || k[1].abs() > kk {
            return None;
        }
        let p = if k[0] == 0 {
            if k[1] <= 0 {
                return None;
            }
            (k[1] - 1) as usize
        } else if k[0] > 0 {
            self.k_max + (k[0] - 1) as usize * (2 * self.k_max + 1) + (k[1] + kk) as usize
        } else {
            return None;
        };
        Some(2 * p + usize::from(parity == Parity::Sin))
    }
}

/// Uniform midpoint grid `{(i + 1/2) / m}^2` with weights `1/m^2`.
///
/// Integrates `exp(2 pi i k.y)` exactly for `|k|_inf < m`. The nodes never
/// lie on `y1 in Z/2`, so jump lines there are never sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellQuadrature {
    m: usize,
}

impl CellQuadrature {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(HomogError::InvalidInput(format!("quadrature needs m >= 2, got {m}")));
        }
        Ok(CellQuadrature { m })
    }

    /// `max(4K, 128)`
    pub fn default_for(k_max: usize) -> Self {
        CellQuadrature { m: (4 * k_max).max(128) }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.m as f64
    }

    #[inline]
    pub fn node(&self, i1: usize, i2: usize) -> Point {
        [self.coord(i1), self.coord(i2)]
    }

    pub fn weight(&self) -> f64 {
        1.0 / (self.m * self.m) as f64
    }

    pub(crate) fn phases(&self) -> PhaseTable {
        PhaseTable::new(self.m)
    }
}

/// `cos`/`sin` of `2 pi k (i + 1/2) / m`, looked up through the integer
/// `k (2i + 1) mod 2m` so that symmetric nodes get bitwise-symmetric values.
pub(crate) struct PhaseTable {
    m: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PhaseTable {
    fn new(m: usize) -> Self {
        let two_m = 2 * m;
        let cos = (0..two_m).map(|n| (PI * n as f64 / m as f64).cos()).collect();
        let sin = (0..two_m).map(|n| (PI * n as f64 / m as f64).sin()).collect();
        PhaseTable { m, cos, sin }
    }

    #[inline]
    fn index(&self, k: i64, i: usize) -> usize {
        (k * (2 * i as i64 + 1)).rem_euclid(2 * self.m as i64) as usize
    }

    #[inline]
    pub fn cos(&self, k: i64, i: usize) -> f64 {
        self.cos[self.index(k, i)]
    }

    #[inline]
    pub fn sin(&self, k: i64, i: usize) -> f64 {
        self.sin[self.index(k, i)]
    }
}

/// Values of a scalar field at the nodes of a [`CellQuadrature`], stored with
/// index `i1 * m + i2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    m: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn from_fn(quad: &CellQuadrature, f: impl Fn(Point) -> f64) -> Self {
        let m = quad.m();
        let mut values = Vec::with_capacity(m * m);
        for i1 in 0..m {
            for i2 in 0..m {
                values.push(f(quad.node(i1, i2)));
            }
        }
        GridField { m, values }
    }

    pub fn constant(quad: &CellQuadrature, c: f64) -> Self {
        GridField { m: quad.m(), values: vec![c; quad.len()] }
    }

    pub fn from_values(quad: &CellQuadrature, values: Vec<f64>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(HomogError::InvalidInput(format!(
                "grid field needs {} values, got {}",
                quad.len(),
                values.len()
            )));
        }
        Ok(GridField { m: quad.m(), values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.m + i2]
    }

    /// Quadrature approximation of the cell average.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `(self, other)_{L^2(Y)}` by quadrature.
    pub fn inner(&self, other: &GridField) -> f64 {
        debug_assert_eq!(self.m, other.m);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            / self.values.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { m: self.m, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        debug_assert_eq!(self.m, other.m);
        GridField {
            m: self.m,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn mul(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    pub fn shift(&self, s: f64) -> GridField {
        self.map(|v| v + s)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which derivative of a [`SpectralFunction`] to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Deriv {
    Value,
    /// `d/dy_a` with zero-based `a`.
    Grad(usize),
    /// `S : D^2 f`; `Hess(Sym2::IDENTITY)` is the Laplacian.
    Hess(Sym2),
}

impl Deriv {
    pub const LAPLACIAN: Deriv = Deriv::Hess(Sym2::IDENTITY);

    /// Second partial `d^2 / dy_a dy_b`.
    pub fn second(a: usize, b: usize) -> Deriv {
        match (a, b) {
            (0, 0) => Deriv::Hess(Sym2::diag(1.0, 0.0)),
            (1, 1) => Deriv::Hess(Sym2::diag(0.0, 1.0)),
            _ => Deriv::Hess(Sym2::new(0.0, 0.5, 0.0)),
        }
    }

    /// Complex multiplier of `exp(2 pi i k.y)` as `(re, im)`.
    #[inline]
    fn symbol(&self, k: [i32; 2]) -> (f64, f64) {
        match self {
            Deriv::Value => (1.0, 0.0),
            Deriv::Grad(a) => (0.0, TWO_PI * k[*a] as f64),
            Deriv::Hess(s) => {
                let kf = [k[0] as f64, k[1] as f64];
                (-FOUR_PI_SQ * s.quad_form(kf), 0.0)
            }
        }
    }
}

/// Element of a [`TrigSpace`]; always mean-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFunction {
    space: Arc<TrigSpace>,
    coeffs: Vec<f64>,
}

impl SpectralFunction {
    pub fn zero(space: &Arc<TrigSpace>) -> Self {
        SpectralFunction { space: space.clone(), coeffs: vec![0.0; space.dim()] }
    }

    pub fn from_coeffs(space: &Arc<TrigSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(HomogError::InvalidInput(format!(
                "expected {} coefficients, got {}",
                space.dim(),
                coeffs.len()
            )));
        }
        Ok(SpectralFunction { space: space.clone(), coeffs })
    }

    pub fn space(&self) -> &Arc<TrigSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn scale(&self, s: f64) -> Self {
        SpectralFunction {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| s * c).collect(),
        }
    }

    pub fn add(&self, other: &SpectralFunction) -> Self {
        SpectralFunction {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SpectralFunction) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Pointwise evaluation by direct summation.
    pub fn eval_deriv(&self, y: Point, d: Deriv) -> f64 {
        let mut v = 0.0;
        for (p, k) in self.space.modes().iter().enumerate() {
            let (cc, cs) = (self.coeffs[2 * p], self.coeffs[2 * p + 1]);
            if cc == 0.0 && cs == 0.0 {
                continue;
            }
            let arg = TWO_PI * (k[0] as f64 * y[0] + k[1] as f64 * y[1]);
            let (sin, cos) = arg.sin_cos();
            // Re[(cc - i cs) * symbol * exp(i arg)]
            let (sr, si) = d.symbol(*k);
            let zr = cc * sr + cs * si;
            let zi = cc * si - cs * sr;
            v += zr * cos - zi * sin;
        }
        v
    }

    pub fn eval(&self, y: Point) -> f64 {
        self.eval_deriv(y, Deriv::Value)
    }

    pub fn gradient(&self, y: Point) -> [f64; 2] {
        [self.eval_deriv(y, Deriv::Grad(0)), self.eval_deriv(y, Deriv::Grad(1))]
    }

    pub fn hessian(&self, y: Point) -> Sym2 {
        Sym2::new(
            self.eval_deriv(y, Deriv::second(0, 0)),
            self.eval_deriv(y, Deriv::second(0, 1)),
            self.eval_deriv(y, Deriv::second(1, 1)),
        )
    }

    pub fn laplacian(&self, y: Point) -> f64 {
        self.eval_deriv(y, Deriv::LAPLACIAN)
    }

    /// Evaluate a derivative on every node of `quad`, separably in `y2` then `y1`.
    pub fn on_grid(&self, quad: &CellQuadrature, d: Deriv) -> GridField {
        let m = quad.m();
        let kk = self.space.k_max();
        let ph = quad.phases();
        // inner[k1][i2] = sum over k2 of z_k exp(2 pi i k2 y2)
        let mut inner_re = vec![0.0; (kk + 1) * m];
        let mut inner_im = vec![0.0; (kk + 1) * m];
        for (p, k) in self.space.modes().iter().enumerate() {
            let (cc, cs) = (self.coeffs[2 * p], self.coeffs[2 * p + 1]);
            if cc == 0.0 && cs == 0.0 {
                continue;
            }
            let (sr, si) = d.symbol(*k);
            let zr = cc * sr + cs * si;
            let zi = cc * si - cs * sr;
            let row = k[0] as usize * m;
            for i2 in 0..m {
                let c = ph.cos(k[1] as i64, i2);
                let s = ph.sin(k[1] as i64, i2);
                inner_re[row + i2] += zr * c - zi * s;
                inner_im[row + i2] += zr * s + zi * c;
            }
        }
        let mut values = vec![0.0; m * m];
        for i1 in 0..m {
            let out = &mut values[i1 * m..(i1 + 1) * m];
            for k1 in 0..=kk {
                let c = ph.cos(k1 as i64, i1);
                let s = ph.sin(k1 as i64, i1);
                let row = k1 * m;
                for (i2, o) in out.iter_mut().enumerate() {
                    *o += c * inner_re[row + i2] - s * inner_im[row + i2];
                }
            }
        }
        GridField { m, values }
    }

    /// `sum c^2 / 2`, exact.
    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|c| c * c).sum::<f64>() / 2.0).sqrt()
    }

    /// `||grad f||`, exact.
    pub fn gradient_norm(&self) -> f64 {
        self.weighted_norm(|i| FOUR_PI_SQ * self.space.freq_sq(i))
    }

    /// `||Laplacian f||`, exact.
    pub fn laplacian_norm(&self) -> f64 {
        self.weighted_norm(|i| (FOUR_PI_SQ * self.space.freq_sq(i)).powi(2))
    }

    /// `||D^2 f||` summed entrywise over the Hessian, exact.
    pub fn hessian_norm(&self) -> f64 {
        self.weighted_norm(|i| {
            let (k, _) = self.space.basis(i);
            let (k1, k2) = (k[0] as f64, k[1] as f64);
            FOUR_PI_SQ * FOUR_PI_SQ * (k1 * k1 * k1 * k1 + 2.0 * k1 * k1 * k2 * k2 + k2 * k2 * k2 * k2)
        })
    }

    fn weighted_norm(&self, w: impl Fn(usize) -> f64) -> f64 {
        (self.coeffs.iter().enumerate().map(|(i, c)| w(i) * c * c).sum::<f64>() / 2.0).sqrt()
    }
}

/// Quadrature projections `(f, phi_i)` for every basis function.
pub fn project(space: &TrigSpace, quad: &CellQuadrature, f: &GridField) -> Vec<f64> {
    let m = quad.m();
    let kk = space.k_max() as i64;
    let ph = quad.phases();
    let w = quad.weight();
    // partial[i1][k2] = sum_i2 f exp(-2 pi i k2 y2)
    let width = (2 * kk + 1) as usize;
    let mut pre = vec![0.0; m * width];
    let mut pim = vec![0.0; m * width];
    for i1 in 0..m {
        for (j, k2) in (-kk..=kk).enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for i2 in 0..m {
                let v = f.at(i1, i2);
                re += v * ph.cos(k2, i2);
                im += v * ph.sin(k2, i2);
            }
            pre[i1 * width + j] = re;
            pim[i1 * width + j] = im;
        }
    }
    let mut out = vec![0.0; space.dim()];
    for (p, k) in space.modes().iter().enumerate() {
        let j = (k[1] as i64 + kk) as usize;
        let mut c = 0.0;
        let mut s = 0.0;
        for i1 in 0..m {
            let c1 = ph.cos(k[0] as i64, i1);
            let s1 = ph.sin(k[0] as i64, i1);
            let (re, im) = (pre[i1 * width + j], pim[i1 * width + j]);
            // cos(a + b) = c1 re - s1 im ; sin(a + b) = s1 re + c1 im
            c += c1 * re - s1 * im;
            s += s1 * re + c1 * im;
        }
        out[2 * p] = c * w;
        out[2 * p + 1] = s * w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_and_indexing() {
        let space = TrigSpace::new(3).unwrap();
        assert_eq!(space.dim(), 7 * 7 - 1);
        for i in 0..space.dim() {
            let (k, par) = space.basis(i);
            assert_eq!(space.index_of(k, par), Some(i));
        }
        assert_eq!(space.index_of([0, 0], Parity::Cos), None);
        assert_eq!(space.index_of([-1, 2], Parity::Cos), None);
        assert!(TrigSpace::new(0).is_err());
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let space = TrigSpace::new(3).unwrap();
        let coeffs = (0..space.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let f = SpectralFunction::from_coeffs(&space, coeffs).unwrap();
        let quad = CellQuadrature::new(10).unwrap();
        for d in [
            Deriv::Value,
            Deriv::Grad(0),
            Deriv::Grad(1),
            Deriv::second(0, 0),
            Deriv::second(0, 1),
            Deriv::LAPLACIAN,
        ] {
            let g = f.on_grid(&quad, d);
            for i1 in 0..10 {
                for i2 in 0..10 {
                    let want = f.eval_deriv(quad.node(i1, i2), d);
                    assert!((g.at(i1, i2) - want).abs() < 1e-10 * (1.0 + want.abs()), "{d:?}");
                }
            }
        }
    }

    #[test]
    fn projection_recovers_coefficients() {
        let space = TrigSpace::new(4).unwrap();
        let coeffs: Vec<f64> = (0..space.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = SpectralFunction::from_coeffs(&space, coeffs.clone()).unwrap();
        let quad = CellQuadrature::new(16).unwrap();
        let proj = project(&space, &quad, &f.on_grid(&quad, Deriv::Value));
        for (p, c) in proj.iter().zip(&coeffs) {
            assert!((2.0 * p - c).abs() < 1e-13);
        }
    }

    #[test]
    fn first_derivative_of_single_mode() {
        let space = TrigSpace::new(2).unwrap();
        let mut c = vec![0.0; space.dim()];
        c[space.index_of([1, 0], Parity::Sin).unwrap()] = 1.0;
        let f = SpectralFunction::from_coeffs(&space, c).unwrap();
        let y = [0.1, 0.3];
        assert!((f.eval(y) - (TWO_PI * 0.1).sin()).abs() < 1e-15);
        assert!((f.gradient(y)[0] - TWO_PI * (TWO_PI * 0.1).cos()).abs() < 1e-13);
        assert!((f.laplacian(y) + FOUR_PI_SQ * (TWO_PI * 0.1).sin()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        let q = CellQuadrature::new(7).unwrap();
        assert!((GridField::constant(&q, 1.0).mean() - 1.0).abs() < 1e-15);
        assert_eq!(CellQuadrature::default_for(8).m(), 128);
        assert_eq!(CellQuadrature::default_for(64).m(), 256);
    }
}
