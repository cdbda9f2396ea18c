//! The noise space H = L²([0,T]×V), its Legendre CONS, driving fields,
//! symmetric tensors and multiple integrals.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosExpansion, Truncation};
use crate::error::{Error, Result};
use crate::multiindex::{factorial, Multiindex};
use crate::quadrature::{gauss_legendre, integrate_adaptive, legendre, legendre_antiderivative};

/// H = L²([0,T] × {1..d}) with K = cells·M·d orthonormal modes.
///
/// The horizon is split into `cells` equal intervals carrying M
/// orthonormal shifted Legendre polynomials each. Mode k (1-based) has
/// k − 1 = ((cell·M) + i)·d + v with Legendre degree i and point v, both
/// 0-based. With one cell the first mode is the constant 1/√T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpaceConfig", into = "NoiseSpaceConfig")]
pub struct NoiseSpace {
    horizon: f64,
    points: usize,
    time_modes: usize,
    cells: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSpaceConfig {
    #[serde(rename = "T")]
    horizon: f64,
    d: usize,
    time_modes: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    time_cells: usize,
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

impl TryFrom<NoiseSpaceConfig> for NoiseSpace {
    type Error = Error;
    fn try_from(c: NoiseSpaceConfig) -> Result<Self> {
        NoiseSpace::with_cells(c.horizon, c.d, c.time_modes, c.time_cells)
    }
}

impl From<NoiseSpace> for NoiseSpaceConfig {
    fn from(s: NoiseSpace) -> Self {
        NoiseSpaceConfig { horizon: s.horizon, d: s.points, time_modes: s.time_modes, time_cells: s.cells }
    }
}

/// Location of a CONS element, all parts 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub cell: usize,
    pub degree: usize,
    pub point: usize,
}

impl NoiseSpace {
    pub fn new(horizon: f64, points: usize, time_modes: usize) -> Result<Self> {
        Self::with_cells(horizon, points, time_modes, 1)
    }

    pub fn with_cells(horizon: f64, points: usize, time_modes: usize, cells: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if points == 0 || time_modes == 0 || cells == 0 {
            return Err(Error::InvalidArgument("point, mode and cell counts must be at least 1".into()));
        }
        Ok(Self { horizon, points, time_modes, cells })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn time_modes(&self) -> usize {
        self.time_modes
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of CONS elements K.
    pub fn len(&self) -> usize {
        self.cells * self.time_modes * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self, k: usize) -> Mode {
        assert!(k >= 1 && k <= self.len(), "mode {k} outside 1..={}", self.len());
        let i = k - 1;
        let point = i % self.points;
        let rest = i / self.points;
        Mode { cell: rest / self.time_modes, degree: rest % self.time_modes, point }
    }

    /// 1-based index of a mode.
    pub fn index(&self, mode: Mode) -> usize {
        (mode.cell * self.time_modes + mode.degree) * self.points + mode.point + 1
    }

    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        let w = self.horizon / self.cells as f64;
        let b = if cell + 1 == self.cells { self.horizon } else { (cell + 1) as f64 * w };
        (cell as f64 * w, b)
    }

    /// Interior cell boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        (1..self.cells).map(|c| self.cell_bounds(c).0).collect()
    }

    /// Cell containing t; cells are closed on the left, the last one on
    /// both sides.
    pub fn cell_of(&self, t: f64) -> usize {
        let c = (t / self.horizon * self.cells as f64).floor();
        (c.max(0.0) as usize).min(self.cells - 1)
    }

    fn legendre_mode(&self, cell: usize, degree: usize, t: f64) -> f64 {
        let (a, b) = self.cell_bounds(cell);
        let x = 2.0 * (t - a) / (b - a) - 1.0;
        ((2 * degree + 1) as f64 / (b - a)).sqrt() * legendre(degree, x)
    }

    /// Time factor ℓ of mode k at t.
    pub fn time_mode_value(&self, k: usize, t: f64) -> f64 {
        self.time_mode_in_cell(k, self.cell_of(t), t)
    }

    /// Time factor of mode k at t using the polynomial of `cell` (the one-
    /// sided value at a cell boundary).
    pub fn time_mode_in_cell(&self, k: usize, cell: usize, t: f64) -> f64 {
        let m = self.mode(k);
        if m.cell != cell {
            return 0.0;
        }
        self.legendre_mode(cell, m.degree, t)
    }

    /// m_k(t, v) with v 1-based.
    pub fn mode_value(&self, k: usize, t: f64, v: usize) -> f64 {
        if self.mode(k).point + 1 != v {
            return 0.0;
        }
        self.time_mode_value(k, t)
    }

    /// ∫_s^t ℓ_k(r) dr, exact.
    pub fn time_integral(&self, k: usize, s: f64, t: f64) -> f64 {
        let m = self.mode(k);
        let (a, b) = self.cell_bounds(m.cell);
        let (lo, hi) = (s.max(a), t.min(b));
        if hi <= lo {
            return 0.0;
        }
        let x = |r: f64| 2.0 * (r - a) / (b - a) - 1.0;
        let scale = ((2 * m.degree + 1) as f64 / (b - a)).sqrt() * (b - a) / 2.0;
        scale * (legendre_antiderivative(m.degree, x(hi)) - legendre_antiderivative(m.degree, x(lo)))
    }

    /// ∫_s^t Σ_v m_j m_k dr, exact.
    pub fn overlap(&self, j: usize, k: usize, s: f64, t: f64) -> f64 {
        let (mj, mk) = (self.mode(j), self.mode(k));
        if mj.point != mk.point || mj.cell != mk.cell {
            return 0.0;
        }
        let (a, b) = self.cell_bounds(mj.cell);
        let (lo, hi) = (s.max(a), t.min(b));
        if hi <= lo {
            return 0.0;
        }
        if lo == a && hi == b {
            return if mj.degree == mk.degree { 1.0 } else { 0.0 };
        }
        let rule = gauss_legendre(self.time_modes);
        let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        rule.0
            .iter()
            .zip(&rule.1)
            .map(|(&x, &w)| {
                let r = c + h * x;
                w * self.legendre_mode(mj.cell, mj.degree, r) * self.legendre_mode(mj.cell, mk.degree, r)
            })
            .sum::<f64>()
            * h
    }

    /// Projection of χ_{[s,t]} h onto the CONS.
    pub fn restrict(&self, h: &HElement, s: f64, t: f64) -> HElement {
        let k_total = self.len();
        let mut out = vec![0.0; k_total];
        for (jj, &hj) in h.coeffs.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            let mj = self.mode(jj + 1);
            for deg in 0..self.time_modes {
                let k = self.index(Mode { degree: deg, ..mj });
                out[k - 1] += hj * self.overlap(jj + 1, k, s, t);
            }
        }
        HElement::new(out)
    }

    /// γ_k(t) = Σ_v g(t,v) m_k(t,v) for all k, evaluated with the
    /// polynomials of `cell`.
    pub fn pointwise_products(&self, g: &HElement, cell: usize, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut gv = vec![0.0; self.points];
        let ell: Vec<f64> = (0..self.time_modes).map(|i| self.legendre_mode(cell, i, t)).collect();
        for (j, &gj) in g.coeffs.iter().enumerate() {
            let m = self.mode(j + 1);
            if m.cell == cell && gj != 0.0 {
                gv[m.point] += gj * ell[m.degree];
            }
        }
        for i in 0..self.time_modes {
            for v in 0..self.points {
                out[self.index(Mode { cell, degree: i, point: v }) - 1] = gv[v] * ell[i];
            }
        }
        out
    }

    /// Coefficients of a time–space function.
    pub fn project(&self, f: &TimeSpaceFn) -> HElement {
        let k_total = self.len();
        match f {
            TimeSpaceFn::Zero => HElement::zeros(k_total),
            TimeSpaceFn::Mode(k) => HElement::unit(k_total, *k),
            TimeSpaceFn::Indicator { start, end, point } => {
                let coeffs = (1..=k_total)
                    .map(|k| {
                        let m = self.mode(k);
                        if point.is_some_and(|p| p != m.point + 1) {
                            0.0
                        } else {
                            self.time_integral(k, *start, *end)
                        }
                    })
                    .collect();
                HElement::new(coeffs)
            }
            TimeSpaceFn::Polynomial { coeffs, point } => {
                let n = (coeffs.len() + self.time_modes).div_ceil(2) + 1;
                let rule = gauss_legendre(n);
                let poly = |t: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c);
                let out = (1..=k_total)
                    .map(|k| {
                        let m = self.mode(k);
                        if point.is_some_and(|p| p != m.point + 1) {
                            return 0.0;
                        }
                        let (a, b) = self.cell_bounds(m.cell);
                        crate::quadrature::integrate_fixed(
                            |t| poly(t) * self.legendre_mode(m.cell, m.degree, t),
                            a,
                            b,
                            &rule,
                        )
                    })
                    .collect();
                HElement::new(out)
            }
            TimeSpaceFn::Function(func) => {
                let out = (1..=k_total)
                    .map(|k| {
                        let m = self.mode(k);
                        let (a, b) = self.cell_bounds(m.cell);
                        integrate_adaptive(
                            |t| func(t, m.point + 1) * self.legendre_mode(m.cell, m.degree, t),
                            a,
                            b,
                            1e-12,
                        )
                    })
                    .collect();
                HElement::new(out)
            }
        }
    }
}

type FieldFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Closed-form or general functions on [0,T]×V. Points are 1-based.
#[derive(Clone)]
pub enum TimeSpaceFn {
    Zero,
    /// The CONS element m_k.
    Mode(usize),
    /// χ_{[start,end]} at one point, or at all points when `None`.
    Indicator { start: f64, end: f64, point: Option<usize> },
    /// Σ_j coeffs[j] t^j at one point or at all points.
    Polynomial { coeffs: Vec<f64>, point: Option<usize> },
    /// Arbitrary f(t, v), projected by adaptive quadrature.
    Function(FieldFn),
}

impl fmt::Debug for TimeSpaceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSpaceFn::Zero => f.write_str("Zero"),
            TimeSpaceFn::Mode(k) => write!(f, "Mode({k})"),
            TimeSpaceFn::Indicator { start, end, point } => {
                write!(f, "Indicator[{start}, {end}] at {point:?}")
            }
            TimeSpaceFn::Polynomial { coeffs, point } => write!(f, "Polynomial{coeffs:?} at {point:?}"),
            TimeSpaceFn::Function(_) => f.write_str("Function"),
        }
    }
}

/// An element of H by its CONS coefficients.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HElement {
    coeffs: Vec<f64>,
}

impl HElement {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        Self { coeffs: vec![0.0; len] }
    }

    /// m_k as an element of an H with `len` modes.
    pub fn unit(len: usize, k: usize) -> Self {
        let mut coeffs = vec![0.0; len];
        coeffs[k - 1] = 1.0;
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// f_k, 1-based.
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// self += a·x, growing to the longer length.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        if x.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(x.coeffs.len(), 0.0);
        }
        for (s, &v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
    }

    /// Pointwise value h(t, v), v 1-based.
    pub fn eval(&self, space: &NoiseSpace, t: f64, v: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| c * space.mode_value(j + 1, t, v))
            .sum()
    }
}

/// A degree-n element of the symmetric tensor power, Σ_{|α|=n} v_α E_α
/// where E_α sums m_{k_σ(1)} ⊗ … ⊗ m_{k_σ(n)} over all permutations σ of
/// the characteristic set of α.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetricTensor {
    degree: usize,
    coeffs: BTreeMap<Multiindex, f64>,
}

impl SymmetricTensor {
    pub fn zero(degree: usize) -> Self {
        Self { degree, coeffs: BTreeMap::new() }
    }

    /// The constant c as a degree-0 tensor.
    pub fn constant(c: f64) -> Self {
        let mut t = Self::zero(0);
        if c != 0.0 {
            t.coeffs.insert(Multiindex::zero(), c);
        }
        t
    }

    pub fn from_coefficients<I: IntoIterator<Item = (Multiindex, f64)>>(degree: usize, iter: I) -> Result<Self> {
        let mut t = Self::zero(degree);
        for (a, c) in iter {
            t.insert(a, c)?;
        }
        Ok(t)
    }

    /// Add c to the coefficient on E_α.
    pub fn insert(&mut self, alpha: Multiindex, c: f64) -> Result<()> {
        if alpha.degree() as usize != self.degree {
            return Err(Error::InvalidArgument(format!(
                "multiindex {alpha} has degree {}, tensor has degree {}",
                alpha.degree(),
                self.degree
            )));
        }
        *self.coeffs.entry(alpha).or_insert(0.0) += c;
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn get(&self, alpha: &Multiindex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Multiindex, &f64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree-1 tensor with E_{ε_k} = m_k coefficients f_k.
    pub fn from_h(h: &HElement) -> Self {
        let coeffs = h
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, &c)| (Multiindex::unit(k as u32 + 1), c))
            .collect();
        Self { degree: 1, coeffs }
    }

    /// f^{⊗n} = Σ_{|α|=n} (f^α/α!) E_α.
    pub fn tensor_power(h: &HElement, n: usize) -> Self {
        let support: Vec<u32> =
            h.coeffs().iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, _)| k as u32 + 1).collect();
        let mut coeffs = BTreeMap::new();
        for a in crate::multiindex::enumerate_degree(support.len(), n) {
            let a = a.relabel(&support);
            let c: f64 = a
                .entries()
                .iter()
                .map(|&(k, e)| h.get(k as usize).powi(e as i32) / factorial(e))
                .product();
            coeffs.insert(a, c);
        }
        Self { degree: n, coeffs }
    }

    /// Read a full row-major array A[k_1,…,k_n] (0-based, K^n entries).
    pub fn from_dense(vars: usize, degree: usize, data: &[f64]) -> Result<Self> {
        let expected = vars.pow(degree as u32);
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!("expected {expected} entries, got {}", data.len())));
        }
        let scale = data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let mut coeffs = BTreeMap::new();
        let mut idx = vec![0usize; degree];
        for (flat, &x) in data.iter().enumerate() {
            let mut r = flat;
            for slot in idx.iter_mut().rev() {
                *slot = r % vars;
                r /= vars;
            }
            let set: Vec<u32> = idx.iter().map(|&i| i as u32 + 1).collect();
            let alpha = Multiindex::from_characteristic_set(&set);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            let canonical = sorted.iter().fold(0usize, |acc, &i| acc * vars + i);
            if (data[canonical] - x).abs() > 1e-12 * scale {
                return Err(Error::Asymmetric);
            }
            if canonical == flat && x != 0.0 {
                coeffs.insert(alpha.clone(), x / alpha.factorial()?);
            }
        }
        Ok(Self { degree, coeffs })
    }

    /// |v|² = Σ v_α² |α|! α!.
    pub fn norm_sq(&self) -> f64 {
        let n = factorial(self.degree as u32);
        self.coeffs.iter().map(|(a, c)| c * c * n * a.factorial().unwrap_or(f64::INFINITY)).sum()
    }

    /// Symmetrized tensor product.
    pub fn symmetric_product(&self, other: &Self) -> Self {
        let (n, m) = (self.degree, other.degree);
        let w = factorial(n as u32) * factorial(m as u32) / factorial((n + m) as u32);
        let mut coeffs: BTreeMap<Multiindex, f64> = BTreeMap::new();
        for (b, x) in &self.coeffs {
            for (g, y) in &other.coeffs {
                *coeffs.entry(b.add(g)).or_insert(0.0) += w * x * y;
            }
        }
        Self { degree: n + m, coeffs }
    }

    /// v(·, t) as Σ_β E_β ⊗ h_β with h_β ∈ H: the degree-(n−1) tensor
    /// valued in H obtained by freezing the last argument.
    pub fn partial_evaluation(&self, vars: usize) -> Result<BTreeMap<Multiindex, HElement>> {
        if self.degree == 0 {
            return Err(Error::InvalidArgument("cannot freeze an argument of a degree-0 tensor".into()));
        }
        let mut out: BTreeMap<Multiindex, HElement> = BTreeMap::new();
        for (a, &c) in &self.coeffs {
            for &(k, e) in a.entries() {
                if k as usize > vars {
                    return Err(Error::InvalidArgument(format!("mode {k} outside {vars} modes")));
                }
                let beta = a.decrement(k)?;
                let h = out.entry(beta).or_insert_with(|| HElement::zeros(vars));
                h.coeffs_mut()[k as usize - 1] += e as f64 * c;
            }
        }
        Ok(out)
    }

    pub(crate) fn add_scaled(&mut self, a: f64, other: &Self) {
        if self.coeffs.is_empty() {
            self.degree = other.degree;
        }
        assert_eq!(self.degree, other.degree, "adding tensors of different degrees");
        for (k, v) in &other.coeffs {
            *self.coeffs.entry(k.clone()).or_insert(0.0) += a * v;
        }
    }

    fn max_var(&self) -> u32 {
        self.coeffs.keys().map(|a| a.max_var()).max().unwrap_or(0)
    }
}

/// symmetrize(f, g) for a degree-1 g: coefficient (1/(n+1)) Σ_k f_{α−ε_k} g_k.
pub fn symmetrize(f: &SymmetricTensor, g: &SymmetricTensor) -> Result<SymmetricTensor> {
    if g.degree != 1 {
        return Err(Error::InvalidArgument(format!("second factor must have degree 1, got {}", g.degree)));
    }
    Ok(f.symmetric_product(g))
}

/// 𝔑(f) = Σ_k f_k ξ_k, truncated at `degree`.
pub fn driving_field(space: &NoiseSpace, f: &HElement, degree: usize) -> Result<ChaosExpansion<f64>> {
    if f.len() > space.len() {
        return Err(Error::Incompatible(format!("{} coefficients for {} modes", f.len(), space.len())));
    }
    let mut u = ChaosExpansion::new(Truncation::new(space.len(), degree.max(1)));
    for (k, &c) in f.coeffs().iter().enumerate() {
        if c != 0.0 {
            u.insert(Multiindex::unit(k as u32 + 1), c)?;
        }
    }
    Ok(u)
}

/// I_n(v) with I_n(E_α) = n! 𝔑_α.
pub fn multiple_integral(space: &NoiseSpace, v: &SymmetricTensor) -> Result<ChaosExpansion<f64>> {
    if v.max_var() as usize > space.len() {
        return Err(Error::Incompatible(format!("tensor uses mode {} of {}", v.max_var(), space.len())));
    }
    let n = factorial(v.degree as u32);
    let mut u = ChaosExpansion::new(Truncation::new(space.len(), v.degree));
    for (a, &c) in &v.coeffs {
        if c != 0.0 {
            u.insert(a.clone(), n * c)?;
        }
    }
    Ok(u)
}

/// The kernels η_n with u = Σ_n I_n(η_n)/n!, so η_{n,α} = u_α.
pub fn chaos_kernels(u: &ChaosExpansion<f64>) -> Vec<SymmetricTensor> {
    let top = u.iter().map(|(a, _)| a.degree() as usize).max().unwrap_or(0);
    let mut out: Vec<SymmetricTensor> = (0..=top).map(SymmetricTensor::zero).collect();
    for (a, &c) in u.iter() {
        out[a.degree() as usize].coeffs.insert(a.clone(), c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(t: f64, d: usize, m: usize) -> NoiseSpace {
        NoiseSpace::new(t, d, m).unwrap()
    }

    #[test]
    fn modes_are_orthonormal() {
        for s in [space(1.0, 2, 5), NoiseSpace::with_cells(2.0, 1, 3, 4).unwrap()] {
            let rule = gauss_legendre(20);
            for j in 1..=s.len() {
                for k in 1..=s.len() {
                    let mut ip = 0.0;
                    for c in 0..s.cells() {
                        let (a, b) = s.cell_bounds(c);
                        for v in 1..=s.points() {
                            ip += crate::quadrature::integrate_fixed(
                                |t| {
                                    s.time_mode_in_cell(j, c, t)
                                        * s.time_mode_in_cell(k, c, t)
                                        * f64::from(s.mode(j).point + 1 == v && s.mode(k).point + 1 == v)
                                },
                                a,
                                b,
                                &rule,
                            );
                        }
                    }
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-13, "{j},{k}: {ip}");
                    assert!((s.overlap(j, k, 0.0, s.horizon()) - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn first_mode_is_constant() {
        let s = space(4.0, 1, 3);
        assert!((s.time_mode_value(1, 0.7) - 0.5).abs() < 1e-15);
        assert!((s.time_mode_value(1, 3.9) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn index_map_round_trips() {
        let s = NoiseSpace::with_cells(1.0, 3, 4, 2).unwrap();
        for k in 1..=s.len() {
            assert_eq!(s.index(s.mode(k)), k);
        }
        assert_eq!(s.mode(1), Mode { cell: 0, degree: 0, point: 0 });
        assert_eq!(s.mode(2), Mode { cell: 0, degree: 0, point: 1 });
        assert_eq!(s.mode(4), Mode { cell: 0, degree: 1, point: 0 });
    }

    #[test]
    fn project_examples() {
        let s = space(1.0, 1, 6);
        assert_eq!(s.project(&TimeSpaceFn::Mode(3)), HElement::unit(6, 3));
        assert_eq!(s.project(&TimeSpaceFn::Zero), HElement::zeros(6));
        let t = 0.37;
        let p = s.project(&TimeSpaceFn::Indicator { start: 0.0, end: t, point: None });
        assert!((p.get(1) - t).abs() < 1e-15);
        // f_2 = ∫_0^t √3 (2r − 1) dr = √3 (t² − t)
        assert!((p.get(2) - 3f64.sqrt() * (t * t - t)).abs() < 1e-14);
        let full = s.project(&TimeSpaceFn::Indicator { start: 0.0, end: 1.0, point: None });
        assert!((full.get(1) - 1.0).abs() < 1e-15);
        assert!(full.coeffs()[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn parseval_for_closed_forms() {
        let s = space(2.0, 1, 6);
        // t² on [0,2]: ∫ t⁴ = 32/5, lies in span of degree ≤ 5.
        let p = s.project(&TimeSpaceFn::Polynomial { coeffs: vec![0.0, 0.0, 1.0], point: None });
        assert!((p.norm_sq() - 32.0 / 5.0).abs() < 1e-10);
        let g = s.project(&TimeSpaceFn::Function(Arc::new(|t, _| t * t)));
        assert!((g.norm_sq() - 32.0 / 5.0).abs() < 1e-10);
        // Indicator on cell boundaries is exactly representable with cells.
        let c = NoiseSpace::with_cells(1.0, 2, 2, 4).unwrap();
        let i = c.project(&TimeSpaceFn::Indicator { start: 0.25, end: 0.75, point: Some(2) });
        assert!((i.norm_sq() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn restrict_matches_projection_of_product() {
        let s = space(1.0, 1, 4);
        let g = s.project(&TimeSpaceFn::Polynomial { coeffs: vec![1.0, 2.0], point: None });
        let r = s.restrict(&g, 0.2, 0.9);
        let want = s.project(&TimeSpaceFn::Function(Arc::new(|t, _| {
            if (0.2..=0.9).contains(&t) {
                1.0 + 2.0 * t
            } else {
                0.0
            }
        })));
        for k in 1..=4 {
            assert!((r.get(k) - want.get(k)).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn driving_field_examples() {
        let s = space(1.0, 1, 3);
        let u = driving_field(&s, &HElement::unit(3, 1), 1).unwrap();
        assert_eq!(u.get(&Multiindex::unit(1)), Some(&1.0));
        let u = driving_field(&s, &HElement::new(vec![1.0, 1.0, 0.0]), 1).unwrap();
        assert_eq!(u.second_moment(), 2.0);
        assert!(driving_field(&s, &HElement::zeros(3), 1).unwrap().is_empty());
    }

    #[test]
    fn multiple_integral_examples() {
        let s = space(1.0, 1, 2);
        let e2 = SymmetricTensor::from_coefficients(2, [(Multiindex::from_dense(&[2]), 1.0)]).unwrap();
        assert_eq!(multiple_integral(&s, &e2).unwrap().get(&Multiindex::from_dense(&[2])), Some(&2.0));
        let m1m1 = SymmetricTensor::from_dense(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(m1m1.get(&Multiindex::from_dense(&[2])), 0.5);
        assert_eq!(multiple_integral(&s, &m1m1).unwrap().get(&Multiindex::from_dense(&[2])), Some(&1.0));
        let c = multiple_integral(&s, &SymmetricTensor::constant(3.5)).unwrap();
        assert_eq!(c.mean(), 3.5);
    }

    #[test]
    fn multiple_integral_second_moment() {
        let s = space(1.0, 1, 3);
        let v = SymmetricTensor::from_coefficients(
            3,
            [(Multiindex::from_dense(&[2, 1]), 0.3), (Multiindex::from_dense(&[0, 1, 2]), -1.1)],
        )
        .unwrap();
        let i = multiple_integral(&s, &v).unwrap();
        assert!((i.second_moment() - 6.0 * v.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        assert_eq!(SymmetricTensor::from_dense(2, 2, &[0.0, 1.0, 0.0, 0.0]), Err(Error::Asymmetric));
        let t = SymmetricTensor::from_dense(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        // m1⊗m2 + m2⊗m1 = E_{ε1+ε2}
        assert_eq!(t.get(&Multiindex::from_dense(&[1, 1])), 1.0);
        assert!((t.norm_sq() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetrize_examples() {
        let m1 = SymmetricTensor::from_h(&HElement::unit(2, 1));
        let m2 = SymmetricTensor::from_h(&HElement::unit(2, 2));
        assert_eq!(symmetrize(&m1, &m2).unwrap().get(&Multiindex::from_dense(&[1, 1])), 0.5);
        assert_eq!(symmetrize(&m1, &m1).unwrap().get(&Multiindex::from_dense(&[2])), 0.5);
        let f = HElement::new(vec![0.7, -1.3]);
        let fg = SymmetricTensor::from_h(&f);
        for n in 1..5 {
            let lhs = symmetrize(&SymmetricTensor::tensor_power(&f, n), &fg).unwrap();
            let rhs = SymmetricTensor::tensor_power(&f, n + 1);
            for (a, c) in rhs.iter() {
                assert!((lhs.get(a) - c).abs() < 1e-14);
            }
        }
        assert!(symmetrize(&m1, &symmetrize(&m1, &m2).unwrap()).is_err());
    }

    #[test]
    fn kernel_round_trip() {
        let s = space(1.0, 1, 2);
        let u = ChaosExpansion::from_coefficients(
            Truncation::new(2, 3),
            [
                (Multiindex::zero(), 1.5),
                (Multiindex::unit(2), -0.5),
                (Multiindex::from_dense(&[1, 2]), 0.25),
            ],
        )
        .unwrap();
        let mut back = ChaosExpansion::new(Truncation::new(2, 3));
        for (n, eta) in chaos_kernels(&u).iter().enumerate() {
            let part = multiple_integral(&s, eta).unwrap().scaled(1.0 / factorial(n as u32));
            back = back.add(&part).unwrap();
        }
        assert!(back.max_abs_diff(&u) < 1e-15);
    }

    #[test]
    fn config_parsing() {
        let s: NoiseSpace = serde_json::from_str(r#"{"T":1.0,"d":1,"time_modes":8}"#).unwrap();
        assert_eq!(s.len(), 8);
        let c: NoiseSpace = serde_json::from_str(r#"{"T":2.0,"d":2,"time_modes":1,"time_cells":4}"#).unwrap();
        assert_eq!(c.len(), 8);
        assert!(serde_json::from_str::<NoiseSpace>(r#"{"T":-1.0,"d":1,"time_modes":8}"#).is_err());
    }
}
