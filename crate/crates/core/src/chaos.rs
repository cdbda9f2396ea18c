//! Truncated chaos expansions u = Σ u_α 𝔑_α with E[𝔑_α²] = α!, the Wick
//! product and weighted norms.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{enumerate, factorial, Multiindex};
use crate::noise_space::{HElement, SymmetricTensor};

/// Values a chaos coefficient can take.
pub trait Coefficient: Clone + Debug + PartialEq + Send + Sync {
    fn is_zero(&self) -> bool;
    /// self += a·x
    fn add_scaled(&mut self, a: f64, x: &Self);
    fn scaled(&self, a: f64) -> Self;
    /// Squared norm in the value space.
    fn norm_sq(&self) -> f64;
    /// Dimension tag used for compatibility checks.
    fn dim(&self) -> usize;
}

impl Coefficient for f64 {
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn scaled(&self, a: f64) -> Self {
        a * self
    }
    fn norm_sq(&self) -> f64 {
        self * self
    }
    fn dim(&self) -> usize {
        1
    }
}

impl Coefficient for Vec<f64> {
    fn is_zero(&self) -> bool {
        self.iter().all(|x| *x == 0.0)
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        if x.len() > self.len() {
            self.resize(x.len(), 0.0);
        }
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }
    fn scaled(&self, a: f64) -> Self {
        self.iter().map(|x| a * x).collect()
    }
    fn norm_sq(&self) -> f64 {
        self.iter().map(|x| x * x).sum()
    }
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Coefficient for HElement {
    fn is_zero(&self) -> bool {
        self.coeffs().iter().all(|x| *x == 0.0)
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        self.axpy(a, x);
    }
    fn scaled(&self, a: f64) -> Self {
        HElement::scaled(self, a)
    }
    fn norm_sq(&self) -> f64 {
        HElement::norm_sq(self)
    }
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Coefficient for SymmetricTensor {
    fn is_zero(&self) -> bool {
        self.iter().all(|(_, c)| *c == 0.0)
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        SymmetricTensor::add_scaled(self, a, x);
    }
    fn scaled(&self, a: f64) -> Self {
        let mut out = SymmetricTensor::zero(self.degree());
        out.add_scaled(a, self);
        out
    }
    fn norm_sq(&self) -> f64 {
        SymmetricTensor::norm_sq(self)
    }
    fn dim(&self) -> usize {
        self.degree()
    }
}

/// Truncation (K, N): variables 1..=K and total degree at most N.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub vars: usize,
    pub degree: usize,
}

impl Truncation {
    pub fn new(vars: usize, degree: usize) -> Self {
        Self { vars, degree }
    }

    pub fn contains(&self, alpha: &Multiindex) -> bool {
        alpha.max_var() as usize <= self.vars && alpha.degree() as usize <= self.degree
    }

    /// The full index set in canonical order.
    pub fn index_set(&self) -> Vec<Multiindex> {
        enumerate(self.vars, self.degree)
    }

    fn join(self, other: Self) -> Self {
        Self { vars: self.vars.max(other.vars), degree: self.degree.max(other.degree) }
    }
}

/// A finite chaos expansion. Absent keys are zero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosExpansion<C = f64> {
    truncation: Truncation,
    coeffs: BTreeMap<Multiindex, C>,
    truncation_loss: bool,
}

impl<C: Coefficient> ChaosExpansion<C> {
    pub fn new(truncation: Truncation) -> Self {
        Self { truncation, coeffs: BTreeMap::new(), truncation_loss: false }
    }

    /// The expansion with only a mean coefficient.
    pub fn constant(truncation: Truncation, c: C) -> Self {
        let mut u = Self::new(truncation);
        u.coeffs.insert(Multiindex::zero(), c);
        u
    }

    pub fn from_coefficients<I: IntoIterator<Item = (Multiindex, C)>>(truncation: Truncation, iter: I) -> Result<Self> {
        let mut u = Self::new(truncation);
        for (a, c) in iter {
            u.insert(a, c)?;
        }
        Ok(u)
    }

    /// Set u_α, replacing any previous value.
    pub fn insert(&mut self, alpha: Multiindex, c: C) -> Result<()> {
        if !self.truncation.contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "multiindex {alpha} outside truncation (K={}, N={})",
                self.truncation.vars, self.truncation.degree
            )));
        }
        self.coeffs.insert(alpha, c);
        Ok(())
    }

    /// u_α += a·c for α inside the truncation; reports whether it fit.
    pub(crate) fn accumulate(&mut self, alpha: Multiindex, a: f64, c: &C) -> bool {
        if !self.truncation.contains(&alpha) {
            if !c.is_zero() && a != 0.0 {
                self.truncation_loss = true;
            }
            return false;
        }
        match self.coeffs.get_mut(&alpha) {
            Some(s) => s.add_scaled(a, c),
            None => {
                self.coeffs.insert(alpha, c.scaled(a));
            }
        }
        true
    }

    pub fn get(&self, alpha: &Multiindex) -> Option<&C> {
        self.coeffs.get(alpha)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Multiindex, &C)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Whether an operation producing this expansion discarded nonzero
    /// terms above the truncation degree.
    pub fn truncation_loss(&self) -> bool {
        self.truncation_loss
    }

    pub fn with_truncation_loss(mut self, loss: bool) -> Self {
        self.truncation_loss = loss;
        self
    }

    /// Change the truncation, dropping keys outside the new one.
    pub fn retruncate(&self, truncation: Truncation) -> Self {
        let mut out = Self::new(truncation);
        for (a, c) in &self.coeffs {
            out.accumulate(a.clone(), 1.0, c);
        }
        out.truncation_loss |= self.truncation_loss;
        out
    }

    /// Remove exactly-zero coefficients.
    pub fn pruned(mut self) -> Self {
        self.coeffs.retain(|_, c| !c.is_zero());
        self
    }

    pub fn map<D: Coefficient, F: Fn(&Multiindex, &C) -> D>(&self, f: F) -> ChaosExpansion<D> {
        ChaosExpansion {
            truncation: self.truncation,
            coeffs: self.coeffs.iter().map(|(a, c)| (a.clone(), f(a, c))).collect(),
            truncation_loss: self.truncation_loss,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|_, c| c.scaled(a))
    }

    /// u + v over the joined truncation.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut out = self.retruncate(self.truncation.join(other.truncation));
        for (a, c) in &other.coeffs {
            out.accumulate(a.clone(), 1.0, c);
        }
        out.truncation_loss |= other.truncation_loss;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        let d = self.coeffs.values().next().map(|c| c.dim());
        if let Some(d) = d {
            if let Some(c) = other.coeffs.values().find(|c| c.dim() != d) {
                return Err(Error::Incompatible(format!("coefficient dimensions {d} and {}", c.dim())));
            }
        }
        Ok(())
    }

    /// Keys with |α| ≤ n.
    pub fn restrict_degree(&self, n: usize) -> Self {
        let mut out = Self::new(self.truncation);
        for (a, c) in &self.coeffs {
            if a.degree() as usize <= n {
                out.coeffs.insert(a.clone(), c.clone());
            }
        }
        out
    }

    /// Σ_α ‖u_α‖² α!.
    pub fn second_moment(&self) -> f64 {
        self.coeffs.iter().map(|(a, c)| scaled_by_factorial(c.norm_sq(), a)).sum()
    }

    /// Σ_α ‖u_α‖² α! r_α² for a weight sequence applied to the normalized
    /// coefficients u_α √(α!).
    pub fn weighted_norm(&self, w: &WeightSpec) -> Result<f64> {
        Ok(*self.weighted_partial_sums(w)?.last().unwrap_or(&0.0))
    }

    /// Cumulative weighted sums by degree 0..=N.
    pub fn weighted_partial_sums(&self, w: &WeightSpec) -> Result<Vec<f64>> {
        w.validate()?;
        let mut by_degree = vec![Vec::new(); self.truncation.degree + 1];
        for (a, c) in &self.coeffs {
            let n2 = c.norm_sq();
            if n2 == 0.0 {
                continue;
            }
            let direct = a.factorial().map(|f| n2 * f * w.weight_sq(a)).unwrap_or(f64::NAN);
            let term = if direct.is_finite() && direct > 0.0 {
                direct
            } else {
                (n2.ln() + a.ln_factorial() + w.ln_weight_sq(a)?).exp()
            };
            by_degree[a.degree() as usize].push(term);
        }
        let mut out = Vec::with_capacity(by_degree.len());
        let mut acc = NeumaierSum::default();
        for terms in by_degree {
            for t in terms {
                acc.add(t);
            }
            out.push(acc.value());
        }
        Ok(out)
    }
}

fn scaled_by_factorial(x: f64, a: &Multiindex) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    match a.factorial() {
        Ok(f) if f.is_finite() && (x * f).is_finite() => x * f,
        _ => (x.ln() + a.ln_factorial()).exp(),
    }
}

impl<C: Coefficient + Default> ChaosExpansion<C> {
    /// u_0, or zero if absent.
    pub fn mean(&self) -> C {
        self.coeffs.get(&Multiindex::zero()).cloned().unwrap_or_default()
    }
}

impl ChaosExpansion<f64> {
    /// max_α |u_α − v_α|.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = 0.0f64;
        for (a, c) in &self.coeffs {
            m = m.max((c - other.coeffs.get(a).copied().unwrap_or(0.0)).abs());
        }
        for (a, c) in &other.coeffs {
            if !self.coeffs.contains_key(a) {
                m = m.max(c.abs());
            }
        }
        m
    }

    /// Scalar Wick product.
    pub fn wick_mul(&self, other: &Self) -> Self {
        wick_mul(self, other).expect("scalar coefficients are always compatible")
    }
}

impl ChaosExpansion<Vec<f64>> {
    /// max_α max_i |u_α[i] − v_α[i]|.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = 0.0f64;
        let empty = Vec::new();
        for a in self.coeffs.keys().chain(other.coeffs.keys()) {
            let x = self.coeffs.get(a).unwrap_or(&empty);
            let y = other.coeffs.get(a).unwrap_or(&empty);
            for i in 0..x.len().max(y.len()) {
                let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
                m = m.max(d.abs());
            }
        }
        m
    }
}

/// Bilinear pairing of coefficient spaces used by the Wick product.
pub trait WickPair<Rhs: Coefficient>: Coefficient {
    type Output: Coefficient;
    fn pair(&self, rhs: &Rhs) -> Result<Self::Output>;
}

impl WickPair<f64> for f64 {
    type Output = f64;
    fn pair(&self, rhs: &f64) -> Result<f64> {
        Ok(self * rhs)
    }
}

impl WickPair<Vec<f64>> for f64 {
    type Output = Vec<f64>;
    fn pair(&self, rhs: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(rhs.scaled(*self))
    }
}

impl WickPair<f64> for Vec<f64> {
    type Output = Vec<f64>;
    fn pair(&self, rhs: &f64) -> Result<Vec<f64>> {
        Ok(Coefficient::scaled(self, *rhs))
    }
}

impl WickPair<HElement> for f64 {
    type Output = HElement;
    fn pair(&self, rhs: &HElement) -> Result<HElement> {
        Ok(rhs.scaled(*self))
    }
}

impl WickPair<f64> for HElement {
    type Output = HElement;
    fn pair(&self, rhs: &f64) -> Result<HElement> {
        Ok(HElement::scaled(self, *rhs))
    }
}

impl WickPair<HElement> for HElement {
    type Output = f64;
    fn pair(&self, rhs: &HElement) -> Result<f64> {
        if self.len() != rhs.len() {
            return Err(Error::Incompatible(format!("H elements of lengths {} and {}", self.len(), rhs.len())));
        }
        Ok(self.dot(rhs))
    }
}

/// (u ⋄ v)_α = Σ_{β≤α} ⟨u_β, v_{α−β}⟩; degrees above the joined truncation
/// are dropped and flagged.
pub fn wick_mul<A, B>(u: &ChaosExpansion<A>, v: &ChaosExpansion<B>) -> Result<ChaosExpansion<A::Output>>
where
    A: WickPair<B>,
    B: Coefficient,
{
    let truncation = u.truncation.join(v.truncation);
    let mut out = ChaosExpansion::new(truncation);
    for (b, x) in &u.coeffs {
        for (g, y) in &v.coeffs {
            let a = b.add(g);
            let p = x.pair(y)?;
            out.accumulate(a, 1.0, &p);
        }
    }
    out.truncation_loss |= u.truncation_loss || v.truncation_loss;
    Ok(out)
}

/// u^{⋄n}, with u^{⋄0} = 1.
pub fn wick_pow(u: &ChaosExpansion<f64>, n: usize) -> ChaosExpansion<f64> {
    let mut acc = ChaosExpansion::constant(u.truncation, 1.0);
    for _ in 0..n {
        acc = acc.wick_mul(u);
    }
    acc
}

/// exp^⋄(𝔑(f)) with coefficients f^α/α! for |α| ≤ N.
pub fn wick_exp(f: &HElement, degree: usize) -> ChaosExpansion<f64> {
    let support: Vec<u32> =
        f.coeffs().iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, _)| k as u32 + 1).collect();
    let mut out = ChaosExpansion::new(Truncation::new(f.len(), degree));
    for a in enumerate(support.len(), degree) {
        let a = a.relabel(&support);
        let c: f64 = a
            .entries()
            .iter()
            .map(|&(k, e)| f.get(k as usize).powi(e as i32) / factorial(e))
            .product();
        out.coeffs.insert(a, c);
    }
    out
}

/// Weight sequences r_α² for weighted chaos norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// r_α² = Π_k q_k^{α_k}.
    ProductWeights { q: Vec<f64> },
    /// r_α² = (α!)^ρ Π_k (2k)^{l α_k}.
    Kondratiev { rho: f64, l: f64 },
}

impl WeightSpec {
    /// ρ = 0, l = 0: the plain second moment.
    pub fn unweighted() -> Self {
        WeightSpec::Kondratiev { rho: 0.0, l: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::ProductWeights { q } => {
                if q.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::InvalidArgument("product weights must be positive".into()));
                }
            }
            WeightSpec::Kondratiev { rho, l } => {
                if !(rho.is_finite() && l.is_finite()) || *rho > 0.0 || *l > 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "kondratiev weights need rho <= 0 and l <= 0, got rho={rho}, l={l}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// r_α² in linear space; may underflow or overflow, see
    /// [`ln_weight_sq`](Self::ln_weight_sq).
    pub fn weight_sq(&self, alpha: &Multiindex) -> f64 {
        match self {
            WeightSpec::ProductWeights { q } => alpha
                .entries()
                .iter()
                .map(|&(k, e)| q.get(k as usize - 1).map_or(f64::NAN, |w| w.powi(e as i32)))
                .product(),
            WeightSpec::Kondratiev { rho, l } => {
                let f = alpha.factorial().unwrap_or(f64::INFINITY);
                let mut r = if *rho == 0.0 { 1.0 } else { f.powf(*rho) };
                if *l != 0.0 {
                    for &(k, e) in alpha.entries() {
                        r *= (2.0 * k as f64).powf(l * e as f64);
                    }
                }
                r
            }
        }
    }

    /// ln r_α².
    pub fn ln_weight_sq(&self, alpha: &Multiindex) -> Result<f64> {
        match self {
            WeightSpec::ProductWeights { q } => alpha
                .entries()
                .iter()
                .map(|&(k, e)| {
                    q.get(k as usize - 1).map(|w| e as f64 * w.ln()).ok_or_else(|| {
                        Error::InvalidArgument(format!("no product weight for variable {k}"))
                    })
                })
                .sum(),
            WeightSpec::Kondratiev { rho, l } => {
                let mut s = if *rho == 0.0 { 0.0 } else { rho * alpha.ln_factorial() };
                if *l != 0.0 {
                    s += alpha.entries().iter().map(|&(k, e)| l * e as f64 * (2.0 * k as f64).ln()).sum::<f64>();
                }
                Ok(s)
            }
        }
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
