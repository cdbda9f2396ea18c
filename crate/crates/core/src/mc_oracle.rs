//! Sampling oracle: pointwise evaluation of expansions, seeded Monte Carlo
//! estimates and the Gaussian pathwise cross-check of the linear SDE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::ProductBasis;
use crate::chaos::{ChaosExpansion, NeumaierSum, Truncation};
use crate::distributions::{DistributionSpec, Sampler};
use crate::error::{Error, Result};
use crate::malliavin::{duality_sides, isometry_sides, skorokhod};
use crate::multiindex::{enumerate, Multiindex};
use crate::sde::{propagate, SdeProblem};

/// Samples per independent stream.
pub const CHUNK: usize = 4096;

/// Σ_α u_α 𝔑_α(point).
pub fn evaluate(u: &ChaosExpansion<f64>, basis: &ProductBasis, point: &[f64]) -> Result<f64> {
    Evaluator::new(basis, u)?.eval(point)
}

/// Evaluates one expansion at many points, caching 𝔑^k_n(x_k) per point.
pub struct Evaluator<'a> {
    basis: &'a ProductBasis,
    terms: Vec<(&'a Multiindex, f64)>,
    vars: usize,
    degree: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(basis: &'a ProductBasis, u: &'a ChaosExpansion<f64>) -> Result<Self> {
        let mut terms = Vec::new();
        let mut vars = 0;
        let mut degree = 0;
        for (a, &c) in u.iter() {
            if c == 0.0 {
                continue;
            }
            if basis.is_degenerate(a) {
                return Err(Error::DegenerateBasis(a.to_string()));
            }
            vars = vars.max(a.max_var() as usize);
            degree = degree.max(a.entries().iter().map(|e| e.1 as usize).max().unwrap_or(0));
            terms.push((a, c));
        }
        if vars > basis.vars() || degree > basis.degree() {
            return Err(Error::InvalidArgument(format!(
                "expansion needs {vars} variables to degree {degree}, basis has {} to {}",
                basis.vars(),
                basis.degree()
            )));
        }
        Ok(Self { basis, terms, vars, degree })
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() < self.vars {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, need {}", point.len(), self.vars)));
        }
        let table: Vec<Vec<f64>> = (0..self.vars)
            .map(|k| {
                let b = self.basis.factor(k + 1);
                (0..=self.degree).map(|n| b.eval(n, point[k])).collect()
            })
            .collect();
        let mut s = NeumaierSum::default();
        for (a, c) in &self.terms {
            let v: f64 = a.entries().iter().map(|&(k, e)| table[k as usize - 1][e as usize]).product();
            s.add(c * v);
        }
        Ok(s.value())
    }
}

/// A Monte Carlo estimate against an exact value.
#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub exact: f64,
    pub se: f64,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
}

impl McEstimate {
    fn new(estimate: f64, se: f64, exact: f64, samples: usize, seed: u64) -> Self {
        let pass = (estimate - exact).abs() <= 4.0 * se || (se == 0.0 && (estimate - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        Self { estimate, exact, se, samples, seed, pass }
    }
}

/// Mean and standard error of several statistics of one sampled point,
/// each chunk of [`CHUNK`] samples drawn from stream (seed, chunk).
pub fn monte_carlo<F>(samplers: &[Sampler], samples: usize, seed: u64, stats: usize, f: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<(NeumaierSum, NeumaierSum)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut acc = vec![(NeumaierSum::default(), NeumaierSum::default()); stats];
            let mut point = vec![0.0; samplers.len()];
            let mut out = vec![0.0; stats];
            for _ in 0..count {
                for (p, s) in point.iter_mut().zip(samplers) {
                    *p = s.draw(&mut rng);
                }
                f(&point, &mut out)?;
                for ((s1, s2), x) in acc.iter_mut().zip(&out) {
                    s1.add(*x);
                    s2.add(x * x);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    Ok((0..stats)
        .map(|i| {
            let (mut s1, mut s2) = (NeumaierSum::default(), NeumaierSum::default());
            for p in &partial {
                s1.merge(&p[i].0);
                s2.merge(&p[i].1);
            }
            let mean = s1.value() / n;
            let var = ((s2.value() - n * mean * mean) / (n - 1.0)).max(0.0);
            (mean, (var / n).sqrt())
        })
        .collect())
}

fn samplers(basis: &ProductBasis, vars: usize) -> Result<Vec<Sampler>> {
    (1..=vars).map(|k| basis.spec(k).sampler()).collect()
}

fn vars_of(u: &ChaosExpansion<f64>) -> usize {
    u.iter().map(|(a, _)| a.max_var() as usize).max().unwrap_or(0)
}

/// Empirical E[uv] against Σ_α u_α v_α α!.
pub fn empirical_check(
    u: &ChaosExpansion<f64>,
    v: &ChaosExpansion<f64>,
    basis: &ProductBasis,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let (eu, ev) = (Evaluator::new(basis, u)?, Evaluator::new(basis, v)?);
    let vars = vars_of(u).max(vars_of(v)).max(1);
    let mut exact = NeumaierSum::default();
    for (a, x) in u.iter() {
        if let Some(y) = v.get(a) {
            exact.add(x * y * a.factorial()?);
        }
    }
    let r = monte_carlo(&samplers(basis, vars)?, samples, seed, 1, |p, out| {
        out[0] = eu.eval(p)? * ev.eval(p)?;
        Ok(())
    })?;
    Ok(McEstimate::new(r[0].0, r[0].1, exact.value(), samples, seed))
}

/// ξ_k · u re-expanded exactly through the three-term relation of
/// variable k. The result carries one extra degree.
pub fn times_variable(u: &ChaosExpansion<f64>, basis: &ProductBasis, k: u32) -> Result<ChaosExpansion<f64>> {
    if k == 0 || k as usize > basis.vars() {
        return Err(Error::InvalidArgument(format!("variable {k} outside the basis")));
    }
    let t = u.truncation();
    let out_t = Truncation::new(t.vars.max(k as usize), t.degree + 1);
    let factor = basis.factor(k as usize);
    let mut out = ChaosExpansion::new(out_t);
    for (a, &c) in u.iter() {
        if c == 0.0 {
            continue;
        }
        let n = a.get(k) as usize;
        let rel = factor.times_x(n)?;
        let rest = Multiindex::from_pairs(a.entries().iter().copied().filter(|e| e.0 != k))?;
        for (j, &r) in rel.iter().enumerate() {
            if r != 0.0 {
                let b = (0..j).fold(rest.clone(), |b, _| b.increment(k));
                out.accumulate(b, c, &r);
            }
        }
    }
    Ok(out)
}

/// Gaussian pathwise check of the linear SDE with deterministic w and
/// f = 0: u(T) = w_0 exp(𝔑(H) − |H|²/2) with H = χ_{[s,T]}G, sampled on
/// the same finite CONS as the chaos side.
#[derive(Clone, Debug, Serialize)]
pub struct GbmReport {
    pub mean: McEstimate,
    pub second_moment: McEstimate,
    pub pass: bool,
}

pub fn gbm_crosscheck(p: &SdeProblem, law: &DistributionSpec, samples: usize, seed: u64) -> Result<GbmReport> {
    if !matches!(law, DistributionSpec::Gaussian) {
        return Err(Error::InvalidArgument(format!("the pathwise cross-check needs gaussian noise, got {}", law.kind())));
    }
    if p.initial.iter().any(|(a, c)| !a.is_zero() && *c != 0.0) {
        return Err(Error::InvalidArgument("the pathwise cross-check needs a deterministic initial value".into()));
    }
    if p.forcing.iter().any(|(_, f)| f.norm_sq() != 0.0) {
        return Err(Error::InvalidArgument("the pathwise cross-check needs f = 0".into()));
    }
    let u = propagate(p)?.last();
    let w0 = p.initial.mean();
    let h = p.space.restrict(&p.g, p.start, p.space.horizon());
    let half = 0.5 * h.norm_sq();
    let sampler = vec![law.sampler()?; h.len()];
    let r = monte_carlo(&sampler, samples, seed, 2, |xi, out| {
        let z: f64 = h.coeffs().iter().zip(xi).map(|(a, b)| a * b).sum();
        let v = w0 * (z - half).exp();
        out[0] = v;
        out[1] = v * v;
        Ok(())
    })?;
    let mean = McEstimate::new(r[0].0, r[0].1, u.mean(), samples, seed);
    let second_moment = McEstimate::new(r[1].0, r[1].1, u.second_moment(), samples, seed);
    let pass = mean.pass && second_moment.pass;
    Ok(GbmReport { mean, second_moment, pass })
}

/// Sampled orthogonality E[𝔑_α𝔑_β] ≈ δ_{αβ}α! over all pairs up to
/// `degree`, skipping degenerate elements.
#[derive(Clone, Debug, Serialize)]
pub struct GramEntry {
    pub alpha: Multiindex,
    pub beta: Multiindex,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

pub fn gram_suite(basis: &ProductBasis, degree: usize, samples: usize, seed: u64) -> Result<Vec<GramEntry>> {
    let t = Truncation::new(basis.vars(), degree);
    let set: Vec<Multiindex> = enumerate(basis.vars(), degree).into_iter().filter(|a| !basis.is_degenerate(a)).collect();
    let mut out = Vec::new();
    for (i, a) in set.iter().enumerate() {
        for b in &set[i..] {
            let u = ChaosExpansion::from_coefficients(t, [(a.clone(), 1.0)])?;
            let v = ChaosExpansion::from_coefficients(t, [(b.clone(), 1.0)])?;
            out.push(GramEntry { alpha: a.clone(), beta: b.clone(), estimate: empirical_check(&u, &v, basis, samples, seed)? });
        }
    }
    Ok(out)
}

/// Sampling counterparts of duality E[δ(u)v] and the isometry E[δ(u)²]
/// on a random instance over non-degenerate elements.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub duality: McEstimate,
    pub isometry: McEstimate,
    pub pass: bool,
}

pub fn identity_suite(basis: &ProductBasis, samples: usize, seed: u64) -> Result<IdentityReport> {
    let vars = basis.vars();
    let degree = basis.degree().min(3);
    let t = Truncation::new(vars, degree);
    let mut rng = crate::suites::trial_rng(seed, 0);
    let mut u = crate::suites::random_h(&mut rng, t, vars, degree.saturating_sub(1), 0.8);
    // Drop H-components whose Skorokhod image lands on a degenerate element.
    u = u.map(|a, h| {
        let mut h = h.clone();
        for k in 1..=vars {
            if basis.is_degenerate(&a.increment(k as u32)) {
                h.coeffs_mut()[k - 1] = 0.0;
            }
        }
        h
    });
    let v = {
        let raw = crate::suites::random_scalar(&mut rng, t, degree, 0.8);
        let mut clean = ChaosExpansion::new(t);
        for (a, &c) in raw.iter() {
            if !basis.is_degenerate(a) {
                clean.insert(a.clone(), c)?;
            }
        }
        clean
    };
    let d = skorokhod(&u).pruned();
    let (ed, ev) = (Evaluator::new(basis, &d)?, Evaluator::new(basis, &v)?);
    let r = monte_carlo(&samplers(basis, vars)?, samples, seed, 2, |p, out| {
        let x = ed.eval(p)?;
        out[0] = x * ev.eval(p)?;
        out[1] = x * x;
        Ok(())
    })?;
    let duality = McEstimate::new(r[0].0, r[0].1, duality_sides(&u, &v).rhs, samples, seed);
    let isometry = McEstimate::new(r[1].0, r[1].1, isometry_sides(&u).rhs, samples, seed);
    let pass = duality.pass && isometry.pass;
    Ok(IdentityReport { duality, isometry, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::wick_exp;
    use crate::noise_space::{HElement, NoiseSpace};

    fn gauss(vars: usize, n: usize) -> ProductBasis {
        ProductBasis::iid(&DistributionSpec::Gaussian, vars, n).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let b = gauss(2, 12);
        let t = Truncation::new(2, 12);
        assert_eq!(evaluate(&ChaosExpansion::constant(t, 1.0), &b, &[0.3, -1.0]).unwrap(), 1.0);
        let u = ChaosExpansion::from_coefficients(t, [(Multiindex::from_dense(&[2]), 1.0)]).unwrap();
        assert!((evaluate(&u, &b, &[2.0, 0.0]).unwrap() - 3.0).abs() < 1e-14);
        // Partial sums Σ_{n≤N} He_n(x)/n! from the recurrence.
        let partial = |x: f64, n: usize| {
            let (mut h0, mut h1, mut f, mut s) = (1.0, x, 1.0, 1.0 + x);
            for j in 1..n {
                let h2 = x * h1 - j as f64 * h0;
                f *= (j + 1) as f64;
                s += h2 / f;
                (h0, h1) = (h1, h2);
            }
            s
        };
        let e12 = wick_exp(&HElement::unit(2, 1), 12);
        let x = evaluate(&e12, &b, &[0.5, 0.0]).unwrap();
        assert!((x - partial(0.5, 12)).abs() < 1e-14);
        assert!((x - 1.0).abs() < 1e-5);
        let b16 = gauss(2, 16);
        let e16 = wick_exp(&HElement::unit(2, 1), 16);
        assert!((evaluate(&e16, &b16, &[0.5, 0.0]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn generating_function() {
        let b = gauss(2, 14);
        let z = [0.4, -0.3];
        let e = wick_exp(&HElement::new(z.to_vec()), 14);
        for p in [[0.1, 0.2], [1.5, -0.7], [-1.0, 2.0]] {
            let want = (z[0] * p[0] + z[1] * p[1] - 0.5 * (z[0] * z[0] + z[1] * z[1])).exp();
            assert!((evaluate(&e, &b, &p).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_element_rejected() {
        let b = ProductBasis::iid(&DistributionSpec::Rademacher, 1, 3).unwrap();
        let t = Truncation::new(1, 3);
        let u = ChaosExpansion::from_coefficients(t, [(Multiindex::from_dense(&[2]), 1.0)]).unwrap();
        assert!(matches!(evaluate(&u, &b, &[1.0]), Err(Error::DegenerateBasis(_))));
    }

    #[test]
    fn empirical_examples() {
        let b = gauss(2, 4);
        let t = Truncation::new(2, 4);
        let e1 = ChaosExpansion::from_coefficients(t, [(Multiindex::unit(1), 1.0)]).unwrap();
        let e2 = ChaosExpansion::from_coefficients(t, [(Multiindex::unit(2), 1.0)]).unwrap();
        let h3 = ChaosExpansion::from_coefficients(t, [(Multiindex::from_dense(&[3]), 1.0)]).unwrap();
        let r = empirical_check(&e1, &e1, &b, 100_000, 1).unwrap();
        assert!(r.pass && r.exact == 1.0);
        let r = empirical_check(&e1, &e2, &b, 100_000, 2).unwrap();
        assert!(r.pass && r.exact == 0.0);
        let r = empirical_check(&h3, &h3, &b, 100_000, 3).unwrap();
        assert!(r.pass && r.exact == 6.0);
        for law in [DistributionSpec::UniformPmSqrt3, DistributionSpec::Rademacher, DistributionSpec::PoissonStandardized { lambda: 1.0 }] {
            let b = ProductBasis::iid(&law, 1, 2).unwrap();
            let u = ChaosExpansion::from_coefficients(Truncation::new(1, 1), [(Multiindex::unit(1), 1.0)]).unwrap();
            assert!(empirical_check(&u, &u, &b, 50_000, 4).unwrap().pass);
        }
    }

    #[test]
    fn estimates_replay_exactly() {
        let b = gauss(1, 2);
        let u = ChaosExpansion::from_coefficients(Truncation::new(1, 2), [(Multiindex::from_dense(&[2]), 1.0)]).unwrap();
        let a = empirical_check(&u, &u, &b, 10_000, 5).unwrap();
        let c = empirical_check(&u, &u, &b, 10_000, 5).unwrap();
        assert_eq!(a.estimate.to_bits(), c.estimate.to_bits());
    }

    #[test]
    fn times_variable_gaussian() {
        let b = gauss(2, 4);
        let t = Truncation::new(2, 3);
        let u = ChaosExpansion::from_coefficients(t, [(Multiindex::from_dense(&[2, 1]), 1.0)]).unwrap();
        // x·He_2 = He_3 + 2 He_1
        let p = times_variable(&u, &b, 1).unwrap();
        assert!((p.get(&Multiindex::from_dense(&[3, 1])).unwrap() - 1.0).abs() < 1e-14);
        assert!((p.get(&Multiindex::from_dense(&[1, 1])).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn gbm_examples() {
        let space = NoiseSpace::new(1.0, 1, 2).unwrap();
        let t = Truncation::new(2, 8);
        let p = SdeProblem::new(space.clone(), HElement::unit(2, 1), ChaosExpansion::constant(t, 1.0), 8);
        let r = gbm_crosscheck(&p, &DistributionSpec::Gaussian, 100_000, 7).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.mean.exact - 1.0).abs() < 1e-15);
        let q = SdeProblem::new(space, HElement::zeros(2), ChaosExpansion::constant(t, 2.0), 8);
        let r = gbm_crosscheck(&q, &DistributionSpec::Gaussian, 1000, 7).unwrap();
        assert_eq!((r.mean.estimate, r.mean.exact, r.mean.se), (2.0, 2.0, 0.0));
        assert!(r.pass);
        assert!(gbm_crosscheck(&q, &DistributionSpec::Rademacher, 10, 1).is_err());
    }

    #[test]
    fn sampled_identities() {
        for law in [DistributionSpec::Gaussian, DistributionSpec::Rademacher] {
            let b = ProductBasis::iid(&law, 2, 3).unwrap();
            let r = identity_suite(&b, 50_000, 11).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let g = gram_suite(&gauss(2, 2), 2, 20_000, 3).unwrap();
        assert!(g.iter().filter(|e| e.estimate.pass).count() >= g.len() - 1);
    }
}
