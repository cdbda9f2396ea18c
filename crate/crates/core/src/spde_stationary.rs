//! Stationary equations 𝐀u + Σ_n 𝐌_n u ⋄ ξ_n = f and the Wick-cubic
//! variant 𝐀u − u^⋄3 + Σ_n 𝐌_n u ⋄ ξ_n = f, solved by degree-major sweeps.
//!
//! Vector unknowns use the componentwise cube.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosExpansion, Truncation, WeightSpec};
use crate::error::{Error, Result};
use crate::multiindex::Multiindex;

/// Which equation is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Linear,
    WickCubic,
}

/// Root choice for the degree-0 equation A u_0 − u_0³ = f_0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RootBranch {
    #[default]
    NearestZero,
    Largest,
    Smallest,
    NearestTo(f64),
}

#[derive(Clone, Debug)]
pub struct StationaryProblem {
    pub a: DMatrix<f64>,
    /// M_1, …, M_K.
    pub m: Vec<DMatrix<f64>>,
    pub forcing: ChaosExpansion<Vec<f64>>,
    pub degree: usize,
    pub nonlinearity: Nonlinearity,
    pub branch: RootBranch,
}

impl StationaryProblem {
    pub fn linear(a: DMatrix<f64>, m: Vec<DMatrix<f64>>, forcing: ChaosExpansion<Vec<f64>>, degree: usize) -> Self {
        Self { a, m, forcing, degree, nonlinearity: Nonlinearity::Linear, branch: RootBranch::default() }
    }

    pub fn wick_cubic(
        a: DMatrix<f64>,
        m: Vec<DMatrix<f64>>,
        forcing: ChaosExpansion<Vec<f64>>,
        degree: usize,
        branch: RootBranch,
    ) -> Self {
        Self { a, m, forcing, degree, nonlinearity: Nonlinearity::WickCubic, branch }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.m.len(), self.degree)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.a.ncols() != d {
            return Err(Error::InvalidArgument("A must be a nonempty square matrix".into()));
        }
        if let Some(i) = self.m.iter().position(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::Incompatible(format!("M_{} is not {d}×{d}", i + 1)));
        }
        let t = self.truncation();
        for (a, f) in self.forcing.iter() {
            if !t.contains(a) {
                return Err(Error::InvalidArgument(format!("forcing coefficient {a} outside the truncation")));
            }
            if f.len() != d {
                return Err(Error::Incompatible(format!("forcing coefficient {a} has length {}", f.len())));
            }
        }
        Ok(())
    }

    fn f(&self, a: &Multiindex) -> DVector<f64> {
        self.forcing.get(a).map_or_else(|| DVector::zeros(self.dim()), |v| DVector::from_column_slice(v))
    }
}

/// Solution with the metadata the sweep used.
#[derive(Clone, Debug)]
pub struct StationarySolution {
    pub expansion: ChaosExpansion<Vec<f64>>,
    /// 2-norm condition number of the matrix factorized for |α| ≥ 1.
    pub condition: f64,
    pub branch: Option<RootBranch>,
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn factorize(a: &DMatrix<f64>, what: &str) -> Result<(LU<f64, nalgebra::Dyn, nalgebra::Dyn>, f64)> {
    let cond = condition_number(a);
    if !cond.is_finite() || cond > 1e15 {
        return Err(Error::Singular(format!("{what} (condition number {cond:e})")));
    }
    Ok((a.clone().lu(), cond))
}

struct Levels {
    index: Vec<Multiindex>,
    position: HashMap<Multiindex, usize>,
    bounds: Vec<(usize, usize)>,
}

impl Levels {
    fn new(t: Truncation) -> Self {
        let index = t.index_set();
        let position = index.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        let mut bounds = vec![(0, 0); t.degree + 1];
        for (i, a) in index.iter().enumerate() {
            let d = a.degree() as usize;
            if bounds[d].1 == 0 {
                bounds[d].0 = i;
            }
            bounds[d].1 = i + 1;
        }
        Self { index, position, bounds }
    }

    fn into_expansion(self, t: Truncation, values: Vec<DVector<f64>>) -> ChaosExpansion<Vec<f64>> {
        let mut u = ChaosExpansion::new(t);
        for (a, v) in self.index.into_iter().zip(values) {
            if v.iter().any(|x| *x != 0.0) {
                u.insert(a, v.as_slice().to_vec()).expect("index lies in the truncation");
            }
        }
        u
    }
}

/// Σ_{n: α_n ≥ 1} M_n u_{α−ε_n}.
fn coupling(p: &StationaryProblem, lv: &Levels, alpha: &Multiindex, done: &[DVector<f64>]) -> DVector<f64> {
    let mut s = DVector::zeros(p.dim());
    for &(k, _) in alpha.entries() {
        let beta = alpha.decrement(k).expect("k is in the support");
        s += &p.m[k as usize - 1] * &done[lv.position[&beta]];
    }
    s
}

/// u_0 = A⁻¹f_0, u_α = A⁻¹(f_α − Σ_n M_n u_{α−ε_n}).
pub fn solve_linear(p: &StationaryProblem) -> Result<StationarySolution> {
    if p.nonlinearity != Nonlinearity::Linear {
        return Err(Error::InvalidArgument("solve_linear needs the linear equation".into()));
    }
    p.validate()?;
    let (lu, cond) = factorize(&p.a, "A")?;
    let t = p.truncation();
    let lv = Levels::new(t);
    let mut values: Vec<DVector<f64>> = Vec::with_capacity(lv.index.len());
    for &(lo, hi) in &lv.bounds {
        let done = &values;
        let level: Vec<DVector<f64>> = (lo..hi)
            .into_par_iter()
            .map(|pos| {
                let alpha = &lv.index[pos];
                let rhs = p.f(alpha) - coupling(p, &lv, alpha, done);
                lu.solve(&rhs).ok_or_else(|| Error::Singular("A".into()))
            })
            .collect::<Result<_>>()?;
        values.extend(level);
    }
    Ok(StationarySolution { expansion: lv.into_expansion(t, values), condition: cond, branch: None })
}

/// Real roots of a u − u³ = f, ascending.
pub fn scalar_cubic_roots(a: f64, f: f64) -> Vec<f64> {
    // u³ + p u + q = 0 with p = −a, q = f.
    let (p, q) = (-a, f);
    let newton = |mut u: f64| {
        for _ in 0..4 {
            let d = 3.0 * u * u + p;
            if d == 0.0 {
                break;
            }
            let step = (u * u * u + p * u + q) / d;
            u -= step;
            if step.abs() <= 1e-17 * u.abs().max(1.0) {
                break;
            }
        }
        u
    };
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let mut roots = if p == 0.0 {
        vec![(-q).cbrt()]
    } else if disc > 0.0 {
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3).map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos()).collect()
    } else {
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    };
    for r in &mut roots {
        *r = newton(*r);
    }
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(1.0));
    roots
}

fn pick_root(roots: &[f64], branch: RootBranch) -> Result<f64> {
    let nearest = |c: f64| {
        roots
            .iter()
            .copied()
            .min_by(|x, y| (x - c).abs().partial_cmp(&(y - c).abs()).expect("finite roots"))
    };
    match branch {
        RootBranch::NearestZero => nearest(0.0),
        RootBranch::NearestTo(c) => nearest(c),
        RootBranch::Largest => roots.last().copied(),
        RootBranch::Smallest => roots.first().copied(),
    }
    .ok_or_else(|| Error::NoRoot(format!("{branch:?}")))
}

/// Newton's method on A u − u∘³ = f from `start`.
fn newton_system(a: &DMatrix<f64>, f: &DVector<f64>, start: DVector<f64>) -> Result<DVector<f64>> {
    let mut u = start;
    let residual = |u: &DVector<f64>| a * u - u.map(|x| x * x * x) - f;
    let mut r = residual(&u);
    for _ in 0..100 {
        let rn = r.norm();
        if rn <= 1e-15 * (1.0 + f.norm()) {
            return Ok(u);
        }
        let mut jac = a.clone();
        for i in 0..u.len() {
            jac[(i, i)] -= 3.0 * u[i] * u[i];
        }
        let step = jac.lu().solve(&r).ok_or_else(|| Error::NoRoot("singular Newton step".into()))?;
        let mut theta = 1.0;
        loop {
            let cand = &u - &step * theta;
            let rc = residual(&cand);
            if rc.norm() < rn || theta < 1e-6 {
                u = cand;
                r = rc;
                break;
            }
            theta /= 2.0;
        }
    }
    if r.norm() <= 1e-10 * (1.0 + f.norm()) {
        Ok(u)
    } else {
        Err(Error::NoRoot(format!("Newton stalled at residual {:e}", r.norm())))
    }
}

fn degree_zero_root(p: &StationaryProblem) -> Result<DVector<f64>> {
    let f0 = p.f(&Multiindex::zero());
    if p.dim() == 1 {
        let roots = scalar_cubic_roots(p.a[(0, 0)], f0[0]);
        return Ok(DVector::from_element(1, pick_root(&roots, p.branch)?));
    }
    let start = match p.branch {
        RootBranch::NearestZero => DVector::zeros(p.dim()),
        RootBranch::NearestTo(c) => DVector::from_element(p.dim(), c),
        b => {
            return Err(Error::InvalidArgument(format!("branch {b:?} is only defined for scalar unknowns")));
        }
    };
    newton_system(&p.a, &f0, start)
}

/// Wick-cubic sweep. At α ≠ 0,
/// (u^⋄3)_α = 3u_0²u_α + u_0 S_α + T_α with S_α = Σ_{β+γ=α, β,γ≠0} u_β u_γ
/// and T_α = Σ_{κ+δ=α, κ,δ≠0} u_κ (u⋄u)_δ, so each level solves
/// (A − 3 diag(u_0²)) u_α = f_α − Σ_n M_n u_{α−ε_n} + u_0 S_α + T_α.
pub fn solve_wick_cubic(p: &StationaryProblem) -> Result<StationarySolution> {
    if p.nonlinearity != Nonlinearity::WickCubic {
        return Err(Error::InvalidArgument("solve_wick_cubic needs the Wick-cubic equation".into()));
    }
    p.validate()?;
    let t = p.truncation();
    let lv = Levels::new(t);
    let u0 = degree_zero_root(p)?;
    let mut lin = p.a.clone();
    for i in 0..p.dim() {
        lin[(i, i)] -= 3.0 * u0[i] * u0[i];
    }
    let (lu, cond) = factorize(&lin, "linearized operator A − 3u_0²")?;
    let mut values = vec![u0.clone()];
    let mut squares = vec![u0.component_mul(&u0)];
    for &(lo, hi) in lv.bounds.iter().skip(1) {
        let (done, sq) = (&values, &squares);
        let level: Vec<(DVector<f64>, DVector<f64>)> = (lo..hi)
            .into_par_iter()
            .map(|pos| {
                let alpha = &lv.index[pos];
                let mut s = DVector::zeros(p.dim());
                let mut tt = DVector::zeros(p.dim());
                for beta in alpha.divisors() {
                    if beta.is_zero() || &beta == alpha {
                        continue;
                    }
                    let gamma = alpha.subtract(&beta).expect("β ≤ α");
                    let (ib, ig) = (lv.position[&beta], lv.position[&gamma]);
                    s += done[ib].component_mul(&done[ig]);
                    tt += done[ib].component_mul(&sq[ig]);
                }
                let rhs = p.f(alpha) - coupling(p, &lv, alpha, done) + u0.component_mul(&s) + tt;
                let ua = lu.solve(&rhs).ok_or_else(|| Error::Singular("linearized operator".into()))?;
                let uu = (u0.component_mul(&ua)) * 2.0 + s;
                Ok((ua, uu))
            })
            .collect::<Result<_>>()?;
        for (ua, uu) in level {
            values.push(ua);
            squares.push(uu);
        }
    }
    Ok(StationarySolution { expansion: lv.into_expansion(t, values), condition: cond, branch: Some(p.branch) })
}

/// Dispatches on the nonlinearity flag.
pub fn solve(p: &StationaryProblem) -> Result<StationarySolution> {
    match p.nonlinearity {
        Nonlinearity::Linear => solve_linear(p),
        Nonlinearity::WickCubic => solve_wick_cubic(p),
    }
}

/// Componentwise Wick product of vector-valued expansions, truncated to
/// the degree of `u`.
pub fn wick_mul_componentwise(u: &ChaosExpansion<Vec<f64>>, v: &ChaosExpansion<Vec<f64>>) -> ChaosExpansion<Vec<f64>> {
    let t = u.truncation();
    let mut out: HashMap<Multiindex, Vec<f64>> = HashMap::new();
    for (a, x) in u.iter() {
        for (b, y) in v.iter() {
            let c = a.add(b);
            if !t.contains(&c) {
                continue;
            }
            let slot = out.entry(c).or_insert_with(|| vec![0.0; x.len()]);
            for ((s, p), q) in slot.iter_mut().zip(x).zip(y) {
                *s += p * q;
            }
        }
    }
    let mut e = ChaosExpansion::new(t);
    for (a, x) in out {
        e.insert(a, x).expect("inside the truncation");
    }
    e
}

/// Coefficients of 𝐀u − u^⋄3 + Σ𝐌_n u⋄ξ_n − f on the truncation (the
/// cube only for the Wick-cubic flag); terms pushed past degree N are
/// reported separately.
#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    /// max_α max_i |r_α[i]| over all degrees.
    pub max_abs: f64,
    /// The same below the top degree.
    pub below_top: f64,
    /// max |M_n u_α| over |α| = N, the part that leaves the truncation.
    pub truncation_remainder: f64,
}

pub fn residual(p: &StationaryProblem, u: &ChaosExpansion<Vec<f64>>) -> Result<Residual> {
    p.validate()?;
    let t = p.truncation();
    let d = p.dim();
    let get = |a: &Multiindex| u.get(a).map_or_else(|| DVector::zeros(d), |v| DVector::from_column_slice(v));
    let cube = (p.nonlinearity == Nonlinearity::WickCubic)
        .then(|| wick_mul_componentwise(&wick_mul_componentwise(u, u), u));
    let mut max_abs = 0.0f64;
    let mut below_top = 0.0f64;
    let mut remainder = 0.0f64;
    for alpha in t.index_set() {
        let mut r = &p.a * get(&alpha) - p.f(&alpha);
        for &(k, _) in alpha.entries() {
            let beta = alpha.decrement(k).expect("k is in the support");
            r += &p.m[k as usize - 1] * get(&beta);
        }
        if let Some(c) = &cube {
            if let Some(v) = c.get(&alpha) {
                r -= DVector::from_column_slice(v);
            }
        }
        let e = r.amax();
        max_abs = max_abs.max(e);
        if (alpha.degree() as usize) < p.degree {
            below_top = below_top.max(e);
        } else {
            let ua = get(&alpha);
            for m in &p.m {
                remainder = remainder.max((m * &ua).amax());
            }
        }
    }
    Ok(Residual { max_abs, below_top, truncation_remainder: remainder })
}

/// Norm and per-degree partial sums of a weighted chaos norm.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedNorm {
    pub weights: WeightSpec,
    pub norm: f64,
    pub partial_sums: Vec<f64>,
}

pub fn weighted_solution_norm(u: &ChaosExpansion<Vec<f64>>, w: &WeightSpec) -> Result<WeightedNorm> {
    let partial_sums = u.weighted_partial_sums(w)?;
    Ok(WeightedNorm { weights: w.clone(), norm: *partial_sums.last().unwrap_or(&0.0), partial_sums })
}

/// Oracle: the whole truncated block system assembled densely and solved
/// at once.
pub fn dense_linear_solve(p: &StationaryProblem) -> Result<ChaosExpansion<Vec<f64>>> {
    p.validate()?;
    let t = p.truncation();
    let lv = Levels::new(t);
    let d = p.dim();
    let n = lv.index.len() * d;
    let mut big = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (i, alpha) in lv.index.iter().enumerate() {
        big.view_mut((i * d, i * d), (d, d)).copy_from(&p.a);
        for &(k, _) in alpha.entries() {
            let j = lv.position[&alpha.decrement(k).expect("k is in the support")];
            let mut blk = big.view_mut((i * d, j * d), (d, d));
            blk += &p.m[k as usize - 1];
        }
        rhs.rows_mut(i * d, d).copy_from(&p.f(alpha));
    }
    let x = big.lu().solve(&rhs).ok_or_else(|| Error::Singular("block system".into()))?;
    let values = (0..lv.index.len()).map(|i| x.rows(i * d, d).into_owned()).collect();
    Ok(lv.into_expansion(t, values))
}

/// Oracle: damped fixed point u ← (1−θ)u + θA⁻¹(f + u^⋄3 − Σ𝐌_n u⋄ξ_n)
/// on the full truncated system, started from zero.
pub fn fixed_point_wick_cubic(p: &StationaryProblem, damping: f64, tol: f64, max_iter: usize) -> Result<ChaosExpansion<Vec<f64>>> {
    p.validate()?;
    let t = p.truncation();
    let d = p.dim();
    let lu = p.a.clone().lu();
    let index = t.index_set();
    let mut u: ChaosExpansion<Vec<f64>> = ChaosExpansion::new(t);
    for _ in 0..max_iter {
        let cube = wick_mul_componentwise(&wick_mul_componentwise(&u, &u), &u);
        let get = |e: &ChaosExpansion<Vec<f64>>, a: &Multiindex| {
            e.get(a).map_or_else(|| DVector::zeros(d), |v| DVector::from_column_slice(v))
        };
        let mut next = ChaosExpansion::new(t);
        let mut change = 0.0f64;
        for alpha in &index {
            let mut rhs = p.f(alpha) + get(&cube, alpha);
            for &(k, _) in alpha.entries() {
                rhs -= &p.m[k as usize - 1] * get(&u, &alpha.decrement(k).expect("k is in the support"));
            }
            let target = lu.solve(&rhs).ok_or_else(|| Error::Singular("A".into()))?;
            let old = get(&u, alpha);
            let new = &old * (1.0 - damping) + target * damping;
            change = change.max((&new - &old).amax());
            if new.iter().any(|x| *x != 0.0) {
                next.insert(alpha.clone(), new.as_slice().to_vec())?;
            }
        }
        u = next;
        if change <= tol {
            return Ok(u);
        }
    }
    Err(Error::NoConvergence(format!("fixed point after {max_iter} iterations")))
}

/// Largest coefficientwise difference of vector-valued expansions.
pub fn max_vector_diff(u: &ChaosExpansion<Vec<f64>>, v: &ChaosExpansion<Vec<f64>>) -> f64 {
    let mut m = 0.0f64;
    let zero = Vec::new();
    for (a, x) in u.iter() {
        let y = v.get(a).unwrap_or(&zero);
        for (i, xi) in x.iter().enumerate() {
            m = m.max((xi - y.get(i).copied().unwrap_or(0.0)).abs());
        }
    }
    for (a, y) in v.iter() {
        if u.get(a).is_none() {
            m = y.iter().fold(m, |m, x| m.max(x.abs()));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::factorial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn fibonacci(n: usize) -> StationaryProblem {
        let f = ChaosExpansion::constant(Truncation::new(1, n), vec![1.0]);
        StationaryProblem::linear(scalar(1.0), vec![scalar(-1.0)], f, n)
    }

    #[test]
    fn fibonacci_coefficients_are_one() {
        let u = solve_linear(&fibonacci(20)).unwrap().expansion;
        for n in 0..=20u32 {
            let c = u.get(&Multiindex::from_dense(&[n])).unwrap()[0];
            assert_eq!(c.to_bits(), 1.0f64.to_bits());
            let orth = c * factorial(n).sqrt();
            assert!((orth - factorial(n).sqrt()).abs() <= 1e-12 * factorial(n).sqrt());
        }
    }

    #[test]
    fn fibonacci_weighted_sums() {
        let u = solve_linear(&fibonacci(20)).unwrap().expansion;
        let k = weighted_solution_norm(&u, &WeightSpec::Kondratiev { rho: -2.0, l: 0.0 }).unwrap();
        assert!((k.norm - std::f64::consts::E).abs() < 1e-15);
        let plain = weighted_solution_norm(&u, &WeightSpec::unweighted()).unwrap();
        assert!(plain.partial_sums.windows(2).all(|w| w[1] > w[0]));
        assert!(plain.norm > 2e18);
    }

    #[test]
    fn no_coupling_is_coefficientwise_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let t = Truncation::new(2, 2);
        let f = ChaosExpansion::from_coefficients(t, [(Multiindex::unit(2), vec![1.0, 2.0])]).unwrap();
        let p = StationaryProblem::linear(a.clone(), vec![DMatrix::zeros(2, 2); 2], f, 2);
        let u = solve_linear(&p).unwrap().expansion;
        let x = a.lu().solve(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(u.len(), 1);
        assert!((u.get(&Multiindex::unit(2)).unwrap()[0] - x[0]).abs() < 1e-15);
    }

    fn random_linear(rng: &mut ChaCha8Rng) -> StationaryProblem {
        let (d, k, n) = (4, 3, 4);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(d, d) * d as f64;
        let m = (0..k).map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5))).collect();
        let t = Truncation::new(k, n);
        let mut f = ChaosExpansion::new(t);
        for a in t.index_set().into_iter().filter(|a| a.degree() <= 2) {
            f.insert(a, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        }
        StationaryProblem::linear(a, m, f, n)
    }

    #[test]
    fn sweep_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_linear(&mut rng);
        let u = solve_linear(&p).unwrap().expansion;
        let v = dense_linear_solve(&p).unwrap();
        assert!(max_vector_diff(&u, &v) < 1e-12);
        let r = residual(&p, &u).unwrap();
        assert!(r.max_abs < 1e-12 && r.truncation_remainder > 0.0);
    }

    #[test]
    fn triangularity_under_larger_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_linear(&mut rng);
        let mut q = p.clone();
        q.degree = 5;
        q.forcing = p.forcing.retruncate(q.truncation());
        let u = solve_linear(&p).unwrap().expansion;
        let v = solve_linear(&q).unwrap().expansion;
        for (a, x) in u.iter() {
            assert_eq!(v.get(a).unwrap(), x);
        }
    }

    #[test]
    fn cubic_roots_and_branches() {
        let r = scalar_cubic_roots(2.0, 1.0);
        assert_eq!(r.len(), 3);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((pick_root(&r, RootBranch::NearestZero).unwrap() - golden).abs() < 1e-15);
        assert!((pick_root(&r, RootBranch::Smallest).unwrap() + (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((pick_root(&r, RootBranch::Largest).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(scalar_cubic_roots(1.0, 5.0).len(), 1);
        for &(a, f) in &[(1.0, 5.0), (-2.0, 0.3), (0.0, 8.0), (3.0, 0.0)] {
            for u in scalar_cubic_roots(a, f) {
                assert!((a * u - u * u * u - f).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let f = ChaosExpansion::new(Truncation::new(2, 3));
        let p = StationaryProblem::wick_cubic(scalar(2.0), vec![scalar(0.1), scalar(0.2)], f, 3, RootBranch::NearestZero);
        assert!(solve_wick_cubic(&p).unwrap().expansion.is_empty());
    }

    #[test]
    fn wick_cubic_matches_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Truncation::new(2, 3);
        let mut f = ChaosExpansion::new(t);
        f.insert(Multiindex::zero(), vec![1.0]).unwrap();
        f.insert(Multiindex::unit(1), vec![0.2]).unwrap();
        let m = (0..2).map(|_| scalar(rng.random_range(-0.3..0.3))).collect();
        let p = StationaryProblem::wick_cubic(scalar(2.0), m, f, 3, RootBranch::NearestZero);
        let u = solve_wick_cubic(&p).unwrap().expansion;
        let v = fixed_point_wick_cubic(&p, 0.7, 1e-15, 10_000).unwrap();
        assert!(max_vector_diff(&u, &v) < 1e-12);
        assert!(residual(&p, &u).unwrap().max_abs < 1e-13);
    }

    #[test]
    fn vector_wick_cubic() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.5]);
        let t = Truncation::new(1, 3);
        let f = ChaosExpansion::from_coefficients(t, [(Multiindex::zero(), vec![0.4, -0.3])]).unwrap();
        let p = StationaryProblem::wick_cubic(a, vec![DMatrix::identity(2, 2) * 0.2], f, 3, RootBranch::NearestZero);
        let u = solve_wick_cubic(&p).unwrap().expansion;
        assert!(residual(&p, &u).unwrap().max_abs < 1e-13);
    }

    #[test]
    fn mean_ignores_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_linear(&mut rng);
        let mut q = p.clone();
        q.m.iter_mut().for_each(|m| *m *= 3.0);
        let z = Multiindex::zero();
        assert_eq!(solve_linear(&p).unwrap().expansion.get(&z), solve_linear(&q).unwrap().expansion.get(&z));
    }

    #[test]
    fn singular_a_is_reported() {
        let f = ChaosExpansion::constant(Truncation::new(1, 1), vec![1.0, 1.0]);
        let p = StationaryProblem::linear(DMatrix::from_element(2, 2, 1.0), vec![DMatrix::zeros(2, 2)], f, 1);
        assert!(matches!(solve_linear(&p), Err(Error::Singular(_))));
    }
}
