//! Orthogonal polynomial bases built from moments.
//!
//! Internally each degree is kept as an orthonormal polynomial p_n in
//! double-double coefficients; the public convention is 𝔑_n = √(n!) p_n so
//! that E[𝔑_n²] = n!.

use serde::Serialize;

use crate::dd::Dd;
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::multiindex::{enumerate, factorial, Multiindex};

/// Relative pivot threshold below which a degree is declared degenerate.
pub const PIVOT_THRESHOLD: f64 = 1e-10;

/// Orthogonal polynomials 𝔑_0..𝔑_N of one variable.
#[derive(Clone, Debug)]
pub struct OrthogonalBasis1D {
    degree: usize,
    orthonormal: Vec<Vec<Dd>>,
    degenerate: Vec<bool>,
    moments: Vec<Dd>,
}

/// JSON layout of a basis triangle.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BasisTriangle {
    pub degree: usize,
    pub coeffs: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub degenerate: Vec<bool>,
}

fn form(a: &[Dd], b: &[Dd], m: &[Dd], shift: usize) -> Dd {
    let mut s = Dd::ZERO;
    for (i, &x) in a.iter().enumerate() {
        if x.hi == 0.0 {
            continue;
        }
        let mut row = Dd::ZERO;
        for (j, &y) in b.iter().enumerate() {
            if y.hi != 0.0 {
                row = row + y * m[i + j + shift];
            }
        }
        s = s + x * row;
    }
    s
}

/// Build 𝔑_0..𝔑_N for the given law.
pub fn orthogonalize(spec: &DistributionSpec, max_degree: usize) -> Result<OrthogonalBasis1D> {
    let moments = spec.moments_dd(2 * max_degree + 1)?;
    let mut orthonormal: Vec<Vec<Dd>> = Vec::with_capacity(max_degree + 1);
    let mut degenerate = Vec::with_capacity(max_degree + 1);
    for n in 0..=max_degree {
        let mut v = vec![Dd::ZERO; n + 1];
        v[n] = Dd::ONE;
        // Two passes of modified Gram–Schmidt in the moment inner product.
        for _ in 0..2 {
            for (j, p) in orthonormal.iter().enumerate() {
                if degenerate[j] {
                    continue;
                }
                let r = form(&v, p, &moments, 0);
                for (vi, &pi) in v.iter_mut().zip(p) {
                    *vi = *vi - r * pi;
                }
            }
        }
        let norm2 = form(&v, &v, &moments, 0);
        let scale = moments[2 * n].to_f64().abs().max(f64::MIN_POSITIVE);
        if norm2.to_f64() < -PIVOT_THRESHOLD * scale {
            return Err(Error::InvalidMoments(format!(
                "moment matrix is not positive semidefinite at degree {n}"
            )));
        }
        if norm2.to_f64() <= PIVOT_THRESHOLD * scale {
            orthonormal.push(vec![Dd::ZERO; n + 1]);
            degenerate.push(true);
        } else {
            let inv = Dd::ONE / norm2.sqrt();
            orthonormal.push(v.into_iter().map(|c| c * inv).collect());
            degenerate.push(false);
        }
    }
    Ok(OrthogonalBasis1D { degree: max_degree, orthonormal, degenerate, moments })
}

impl OrthogonalBasis1D {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_degenerate(&self, n: usize) -> bool {
        self.degenerate[n]
    }

    pub fn degenerate_flags(&self) -> &[bool] {
        &self.degenerate
    }

    /// Monomial coefficients of 𝔑_n, lowest degree first.
    pub fn coeffs(&self, n: usize) -> Vec<f64> {
        let s = Dd::new(factorial(n as u32)).sqrt();
        self.orthonormal[n].iter().map(|&c| (c * s).to_f64()).collect()
    }

    /// Monomial coefficients of the orthonormal p_n = 𝔑_n/√(n!).
    pub fn orthonormal_coeffs(&self, n: usize) -> Vec<f64> {
        self.orthonormal[n].iter().map(|c| c.to_f64()).collect()
    }

    /// E[𝔑_n²]: n! or 0 for degenerate degrees.
    pub fn norm(&self, n: usize) -> f64 {
        if self.degenerate[n] {
            0.0
        } else {
            factorial(n as u32)
        }
    }

    /// 𝔑_n(x) by Horner's rule.
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        self.eval_orthonormal(n, x) * factorial(n as u32).sqrt()
    }

    /// p_n(x) by Horner's rule.
    pub fn eval_orthonormal(&self, n: usize, x: f64) -> f64 {
        self.orthonormal[n].iter().rev().fold(0.0, |acc, c| acc * x + c.to_f64())
    }

    /// Values 𝔑_0(x)..𝔑_N(x).
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        (0..=self.degree).map(|n| self.eval(n, x)).collect()
    }

    /// E[p_n p_m] from the stored moments in double-double arithmetic.
    pub fn orthonormal_gram(&self, n: usize, m: usize) -> f64 {
        form(&self.orthonormal[n], &self.orthonormal[m], &self.moments, 0).to_f64()
    }

    /// E[𝔑_n 𝔑_m].
    pub fn gram(&self, n: usize, m: usize) -> f64 {
        self.orthonormal_gram(n, m) * (factorial(n as u32) * factorial(m as u32)).sqrt()
    }

    /// Coefficients c_j with ξ·𝔑_n = Σ_j c_j 𝔑_j, exact when the law's
    /// products close in degree n+1. Requires n < degree.
    pub fn times_x(&self, n: usize) -> Result<Vec<f64>> {
        if n >= self.degree {
            return Err(Error::InvalidArgument(format!(
                "multiplication by the variable needs degree {} but the basis stops at {}",
                n + 1,
                self.degree
            )));
        }
        let mut out = vec![0.0; n + 2];
        for (j, c) in out.iter_mut().enumerate() {
            if self.degenerate[j] || self.degenerate[n] {
                continue;
            }
            // E[ξ p_n p_j] · √(n!) / √(j!)
            let e = form(&self.orthonormal[n], &self.orthonormal[j], &self.moments, 1).to_f64();
            *c = e * (factorial(n as u32) / factorial(j as u32)).sqrt();
        }
        Ok(out)
    }

    pub fn triangle(&self) -> BasisTriangle {
        BasisTriangle {
            degree: self.degree,
            coeffs: (0..=self.degree).map(|n| self.coeffs(n)).collect(),
            norms: (0..=self.degree).map(|n| self.norm(n)).collect(),
            degenerate: self.degenerate.clone(),
        }
    }
}

/// Product basis 𝔑_α = Π_k 𝔑^k_{α_k} for independent variables.
#[derive(Clone, Debug)]
pub struct ProductBasis {
    specs: Vec<DistributionSpec>,
    bases: Vec<OrthogonalBasis1D>,
}

impl ProductBasis {
    pub fn new(specs: Vec<DistributionSpec>, max_degree: usize) -> Result<Self> {
        let bases = specs.iter().map(|s| orthogonalize(s, max_degree)).collect::<Result<_>>()?;
        Ok(Self { specs, bases })
    }

    /// `vars` independent copies of one law.
    pub fn iid(spec: &DistributionSpec, vars: usize, max_degree: usize) -> Result<Self> {
        let b = orthogonalize(spec, max_degree)?;
        Ok(Self { specs: vec![spec.clone(); vars], bases: vec![b; vars] })
    }

    pub fn vars(&self) -> usize {
        self.bases.len()
    }

    pub fn degree(&self) -> usize {
        self.bases.iter().map(|b| b.degree).min().unwrap_or(0)
    }

    pub fn spec(&self, k: usize) -> &DistributionSpec {
        &self.specs[k - 1]
    }

    pub fn factor(&self, k: usize) -> &OrthogonalBasis1D {
        &self.bases[k - 1]
    }

    /// True if some factor of 𝔑_α is a degenerate degree.
    pub fn is_degenerate(&self, alpha: &Multiindex) -> bool {
        alpha.entries().iter().any(|&(k, a)| {
            self.bases.get(k as usize - 1).is_none_or(|b| (a as usize) > b.degree || b.degenerate[a as usize])
        })
    }

    fn check(&self, alpha: &Multiindex) -> Result<()> {
        for &(k, a) in alpha.entries() {
            let b = self.bases.get(k as usize - 1).ok_or_else(|| {
                Error::InvalidArgument(format!("variable {k} outside the basis of {} variables", self.vars()))
            })?;
            if a as usize > b.degree {
                return Err(Error::InvalidArgument(format!(
                    "exponent {a} of variable {k} exceeds basis degree {}",
                    b.degree
                )));
            }
            if b.degenerate[a as usize] {
                return Err(Error::DegenerateBasis(alpha.to_string()));
            }
        }
        Ok(())
    }

    /// 𝔑_α at a point with at least K coordinates.
    pub fn eval_basis(&self, alpha: &Multiindex, point: &[f64]) -> Result<f64> {
        self.check(alpha)?;
        if point.len() < alpha.max_var() as usize {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, multiindex uses variable {}",
                point.len(),
                alpha.max_var()
            )));
        }
        Ok(alpha
            .entries()
            .iter()
            .map(|&(k, a)| self.bases[k as usize - 1].eval(a as usize, point[k as usize - 1]))
            .product())
    }

    /// E[𝔑_α 𝔑_β] as a product of one-variable Gram entries.
    pub fn gram_entry(&self, alpha: &Multiindex, beta: &Multiindex) -> f64 {
        let vars = self.vars();
        let (a, b) = (alpha.to_dense(vars), beta.to_dense(vars));
        (0..vars)
            .map(|k| {
                if a[k] == 0 && b[k] == 0 {
                    1.0
                } else {
                    self.bases[k].gram(a[k] as usize, b[k] as usize)
                }
            })
            .product()
    }
}

/// Result of [`gram_check`].
#[derive(Clone, Debug, Serialize)]
pub struct GramReport {
    pub max_deviation: f64,
    pub worst: Option<(Multiindex, Multiindex)>,
    pub pairs: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Worst deviation |E[𝔑_α 𝔑_β] − δ_{αβ} α!| over the non-degenerate
/// truncated index set.
pub fn gram_check(basis: &ProductBasis, tolerance: f64) -> GramReport {
    let set: Vec<Multiindex> = enumerate(basis.vars(), basis.degree())
        .into_iter()
        .filter(|a| !basis.is_degenerate(a))
        .collect();
    let mut max_deviation = 0.0f64;
    let mut worst = None;
    for (i, a) in set.iter().enumerate() {
        for b in &set[i..] {
            let g = basis.gram_entry(a, b);
            let target = if a == b { a.factorial().unwrap_or(f64::INFINITY) } else { 0.0 };
            let dev = (g - target).abs();
            if dev > max_deviation {
                max_deviation = dev;
                worst = Some((a.clone(), b.clone()));
            }
        }
    }
    GramReport {
        max_deviation,
        worst,
        pairs: set.len() * (set.len() + 1) / 2,
        tolerance,
        pass: max_deviation < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gaussian_is_hermite() {
        let b = orthogonalize(&DistributionSpec::Gaussian, 3).unwrap();
        assert!(close(&b.coeffs(0), &[1.0], 1e-15));
        assert!(close(&b.coeffs(1), &[0.0, 1.0], 1e-15));
        assert!(close(&b.coeffs(2), &[-1.0, 0.0, 1.0], 1e-14));
        assert!(close(&b.coeffs(3), &[0.0, -3.0, 0.0, 1.0], 1e-14));
        assert_eq!(b.norm(3), 6.0);
    }

    #[test]
    fn uniform_degree_two() {
        let b = orthogonalize(&DistributionSpec::UniformPmSqrt3, 2).unwrap();
        let s = (5.0f64 / 2.0).sqrt();
        assert!(close(&b.coeffs(2), &[-s, 0.0, s], 1e-14));
    }

    #[test]
    fn rademacher_degenerates_from_two() {
        let b = orthogonalize(&DistributionSpec::Rademacher, 4).unwrap();
        assert_eq!(b.degenerate_flags(), &[false, false, true, true, true]);
        assert!(b.coeffs(2).iter().all(|&c| c == 0.0));
        assert_eq!(b.norm(2), 0.0);
    }

    #[test]
    fn finite_support_degenerates_at_support_size() {
        // Three-point law on {−√(3/2), 0, √(3/2)} with weights 1/3 each.
        let a: f64 = 1.5;
        let moments: Vec<f64> = (0..12)
            .map(|j| if j == 0 { 1.0 } else if j % 2 == 1 { 0.0 } else { 2.0 / 3.0 * a.powi(j / 2) })
            .collect();
        let b = orthogonalize(&DistributionSpec::CustomMoments { moments }, 5).unwrap();
        assert_eq!(b.degenerate_flags(), &[false, false, false, true, true, true]);
    }

    #[test]
    fn invalid_moment_sequence() {
        // m4 < m2² is impossible.
        let spec = DistributionSpec::CustomMoments { moments: vec![1.0, 0.0, 1.0, 0.0, 0.5] };
        assert!(matches!(orthogonalize(&spec, 2), Err(Error::InvalidMoments(_))));
        let short = DistributionSpec::CustomMoments { moments: vec![1.0, 0.0, 1.0, 0.0] };
        assert!(matches!(orthogonalize(&short, 2), Err(Error::MomentHorizon { .. })));
    }

    #[test]
    fn orthogonal_against_monomials() {
        for spec in [
            DistributionSpec::Gaussian,
            DistributionSpec::UniformPmSqrt3,
            DistributionSpec::PoissonStandardized { lambda: 1.0 },
        ] {
            let b = orthogonalize(&spec, 8).unwrap();
            for n in 1..=8 {
                let p = b.orthonormal_coeffs(n);
                for m in 0..n {
                    let s: f64 = p
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * spec.raw_moment(j + m).unwrap())
                        .sum();
                    let scale: f64 = p
                        .iter()
                        .enumerate()
                        .map(|(j, c)| (c * spec.raw_moment(j + m).unwrap()).abs())
                        .sum();
                    assert!(s.abs() <= 1e-12 * scale.max(1.0), "{} n={n} m={m}: {s}", spec.kind());
                }
            }
        }
    }

    #[test]
    fn leading_coefficients_positive() {
        let b = orthogonalize(&DistributionSpec::PoissonStandardized { lambda: 2.0 }, 6).unwrap();
        for n in 0..=6 {
            assert!(b.coeffs(n)[n] > 0.0);
        }
    }

    #[test]
    fn eval_basis_examples() {
        let pb = ProductBasis::iid(&DistributionSpec::Gaussian, 2, 3).unwrap();
        assert_eq!(pb.eval_basis(&Multiindex::zero(), &[0.3, 0.1]).unwrap(), 1.0);
        assert!((pb.eval_basis(&Multiindex::from_dense(&[2]), &[2.0, 0.0]).unwrap() - 3.0).abs() < 1e-14);
        assert!((pb.eval_basis(&Multiindex::from_dense(&[1, 1]), &[1.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
        let rb = ProductBasis::iid(&DistributionSpec::Rademacher, 1, 2).unwrap();
        assert!(matches!(
            rb.eval_basis(&Multiindex::from_dense(&[2]), &[1.0]),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn gram_check_examples() {
        let r = gram_check(&ProductBasis::iid(&DistributionSpec::Rademacher, 1, 1).unwrap(), 1e-10);
        assert_eq!(r.max_deviation, 0.0);
        let g = gram_check(&ProductBasis::iid(&DistributionSpec::Gaussian, 2, 4).unwrap(), 1e-10);
        assert!(g.pass, "{g:?}");
    }

    #[test]
    fn gaussian_linearization_is_three_term() {
        // ξ He_n = He_{n+1} + n He_{n−1}
        let b = orthogonalize(&DistributionSpec::Gaussian, 6).unwrap();
        let c = b.times_x(4).unwrap();
        assert!(close(&c, &[0.0, 0.0, 0.0, 4.0, 0.0, 1.0], 1e-12), "{c:?}");
        assert!(b.times_x(6).is_err());
    }
}
