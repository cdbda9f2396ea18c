//! Marginal laws of the driving variables: moments and samplers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive, integrate_fixed};

/// Tolerance for the standardization check E ξ = 0, E ξ² = 1.
pub const STANDARDIZATION_TOL: f64 = 1e-9;

/// Relative tolerance of adaptive quadrature for density moments.
pub const DENSITY_QUAD_TOL: f64 = 1e-12;

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A probability density on an interval, possibly unbounded.
#[derive(Clone)]
pub struct CustomDensity {
    density: DensityFn,
    support: (f64, f64),
}

impl CustomDensity {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(density: F, support: (f64, f64)) -> Self {
        Self { density: Arc::new(density), support }
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    fn moment(&self, j: usize) -> f64 {
        let (a, b) = self.support;
        integrate_adaptive(|x| x.powi(j as i32) * self.pdf(x), a, b, DENSITY_QUAD_TOL)
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity").field("support", &self.support).finish()
    }
}

/// Law of a standardized driving variable ξ.
#[derive(Clone, Debug)]
pub enum DistributionSpec {
    Gaussian,
    UniformPmSqrt3,
    Rademacher,
    /// (N − λ)/√λ with N Poisson(λ).
    PoissonStandardized { lambda: f64 },
    /// Raw moments E ξ^j for j = 0, 1, ...
    CustomMoments { moments: Vec<f64> },
    CustomDensity(CustomDensity),
}

/// JSON form of [`DistributionSpec`]; densities are not expressible.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    Gaussian,
    UniformPmSqrt3,
    Rademacher,
    PoissonStandardized { lambda: f64 },
    CustomMoments { moments: Vec<f64> },
}

impl TryFrom<DistributionConfig> for DistributionSpec {
    type Error = Error;

    fn try_from(c: DistributionConfig) -> Result<Self> {
        let spec = match c {
            DistributionConfig::Gaussian => DistributionSpec::Gaussian,
            DistributionConfig::UniformPmSqrt3 => DistributionSpec::UniformPmSqrt3,
            DistributionConfig::Rademacher => DistributionSpec::Rademacher,
            DistributionConfig::PoissonStandardized { lambda } => {
                DistributionSpec::PoissonStandardized { lambda }
            }
            DistributionConfig::CustomMoments { moments } => DistributionSpec::CustomMoments { moments },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for DistributionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("kind", self.kind())?;
        match self {
            DistributionSpec::PoissonStandardized { lambda } => m.serialize_entry("lambda", lambda)?,
            DistributionSpec::CustomMoments { moments } => m.serialize_entry("moments", moments)?,
            DistributionSpec::CustomDensity(d) => m.serialize_entry("support", &[d.support.0, d.support.1])?,
            _ => {}
        }
        m.end()
    }
}

impl DistributionSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DistributionSpec::Gaussian => "gaussian",
            DistributionSpec::UniformPmSqrt3 => "uniform_pm_sqrt3",
            DistributionSpec::Rademacher => "rademacher",
            DistributionSpec::PoissonStandardized { .. } => "poisson_standardized",
            DistributionSpec::CustomMoments { .. } => "custom_moments",
            DistributionSpec::CustomDensity(_) => "custom_density",
        }
    }

    /// Check the law is a valid standardized one.
    pub fn validate(&self) -> Result<()> {
        if let DistributionSpec::PoissonStandardized { lambda } = self {
            if !(lambda.is_finite() && *lambda > 0.0) {
                return Err(Error::InvalidArgument(format!("poisson rate must be positive, got {lambda}")));
            }
        }
        if let DistributionSpec::CustomMoments { moments } = self {
            if moments.len() < 3 {
                return Err(Error::MomentHorizon { requested: 2, available: moments.len().saturating_sub(1) });
            }
        }
        let m = [self.moment_unchecked(0)?, self.moment_unchecked(1)?, self.moment_unchecked(2)?];
        if (m[0] - 1.0).abs() > STANDARDIZATION_TOL {
            return Err(Error::NotStandardized(format!("total mass {}", m[0])));
        }
        if m[1].abs() > STANDARDIZATION_TOL {
            return Err(Error::NotStandardized(format!("mean {}", m[1])));
        }
        if (m[2] - 1.0).abs() > STANDARDIZATION_TOL {
            return Err(Error::NotStandardized(format!("second moment {}", m[2])));
        }
        Ok(())
    }

    /// E ξ^j.
    pub fn raw_moment(&self, j: usize) -> Result<f64> {
        self.validate()?;
        self.moment_unchecked(j)
    }

    fn moment_unchecked(&self, j: usize) -> Result<f64> {
        match self {
            DistributionSpec::CustomDensity(d) => Ok(d.moment(j)),
            _ => Ok(self.moment_dd(j)?.to_f64()),
        }
    }

    /// First `count` raw moments in double-double precision.
    pub(crate) fn moments_dd(&self, count: usize) -> Result<Vec<Dd>> {
        self.validate()?;
        match self {
            DistributionSpec::PoissonStandardized { lambda } => Ok(poisson_moments(*lambda, count)),
            DistributionSpec::CustomDensity(d) => Ok((0..count).map(|j| Dd::new(d.moment(j))).collect()),
            _ => (0..count).map(|j| self.moment_dd(j)).collect(),
        }
    }

    fn moment_dd(&self, j: usize) -> Result<Dd> {
        Ok(match self {
            DistributionSpec::Gaussian => {
                if j % 2 == 1 {
                    Dd::ZERO
                } else {
                    // (j − 1)!!
                    (1..j).step_by(2).fold(Dd::ONE, |acc, i| acc * Dd::new(i as f64))
                }
            }
            DistributionSpec::UniformPmSqrt3 => {
                if j % 2 == 1 {
                    Dd::ZERO
                } else {
                    Dd::new(3.0).powi(j as u32 / 2) / Dd::new(j as f64 + 1.0)
                }
            }
            DistributionSpec::Rademacher => {
                if j % 2 == 1 {
                    Dd::ZERO
                } else {
                    Dd::ONE
                }
            }
            DistributionSpec::PoissonStandardized { lambda } => poisson_moments(*lambda, j + 1)[j],
            DistributionSpec::CustomMoments { moments } => match moments.get(j) {
                Some(&m) => Dd::new(m),
                None => {
                    return Err(Error::MomentHorizon { requested: j, available: moments.len() - 1 })
                }
            },
            DistributionSpec::CustomDensity(d) => Dd::new(d.moment(j)),
        })
    }

    /// A sampler for this law.
    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match self {
            DistributionSpec::Gaussian => Sampler::Gaussian,
            DistributionSpec::UniformPmSqrt3 => Sampler::Uniform,
            DistributionSpec::Rademacher => Sampler::Rademacher,
            DistributionSpec::PoissonStandardized { lambda } => Sampler::Poisson {
                dist: Poisson::new(*lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?,
                lambda: *lambda,
            },
            DistributionSpec::CustomMoments { .. } => return Err(Error::NotSamplable("custom_moments")),
            DistributionSpec::CustomDensity(d) => Sampler::Table(Arc::new(InverseCdf::new(d))),
        })
    }

    /// `count` draws from the stream determined by `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        let sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
    }
}

/// Standardized Poisson moments from the cumulant recurrence
/// m_n = Σ_k C(n−1, k) κ_{k+1} m_{n−1−k}, κ_1 = 0, κ_i = λ^{1−i/2}.
fn poisson_moments(lambda: f64, count: usize) -> Vec<Dd> {
    let kappa: Vec<Dd> = (0..=count)
        .map(|i| match i {
            0 | 1 => Dd::ZERO,
            2 => Dd::ONE,
            _ => {
                // λ^{1 − i/2} = (1/√λ)^{i−2}
                let r = Dd::ONE / Dd::new(lambda).sqrt();
                r.powi(i as u32 - 2)
            }
        })
        .collect();
    let mut m = vec![Dd::ONE];
    for n in 1..count {
        let mut binom = Dd::ONE;
        let mut s = Dd::ZERO;
        for k in 0..n {
            if k > 0 {
                binom = binom * Dd::new((n - k) as f64) / Dd::new(k as f64);
            }
            s = s + binom * kappa[k + 1] * m[n - 1 - k];
        }
        m.push(s);
    }
    m.truncate(count);
    m
}

/// Draws single values from a law.
#[derive(Clone, Debug)]
pub enum Sampler {
    Gaussian,
    Uniform,
    Rademacher,
    Poisson { dist: Poisson<f64>, lambda: f64 },
    Table(Arc<InverseCdf>),
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian => rng.sample(StandardNormal),
            Sampler::Uniform => {
                let s = 3f64.sqrt();
                rng.random_range(-s..s)
            }
            Sampler::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Sampler::Poisson { dist, lambda } => (dist.sample(rng) - lambda) / lambda.sqrt(),
            Sampler::Table(t) => t.invert(rng.random::<f64>()),
        }
    }
}

/// Tabulated inverse CDF of a density, in the compactified variable
/// s with x = s/(1 − s²) when the support is unbounded.
#[derive(Debug)]
pub struct InverseCdf {
    s: Vec<f64>,
    cdf: Vec<f64>,
    unbounded: bool,
}

impl InverseCdf {
    const CELLS: usize = 4096;

    fn new(d: &CustomDensity) -> Self {
        let (a, b) = d.support;
        let unbounded = a.is_infinite() || b.is_infinite();
        let to_s = |x: f64| if x == 0.0 { 0.0 } else { (-1.0 + (1.0 + 4.0 * x * x).sqrt()) / (2.0 * x) };
        let (sa, sb) = if unbounded {
            (if a.is_infinite() { -1.0 } else { to_s(a) }, if b.is_infinite() { 1.0 } else { to_s(b) })
        } else {
            (a, b)
        };
        let g = |s: f64| {
            if !unbounded {
                return d.pdf(s);
            }
            let q = 1.0 - s * s;
            if q <= 0.0 {
                return 0.0;
            }
            let v = d.pdf(s / q) * (1.0 + s * s) / (q * q);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let rule = gauss_legendre(8);
        let h = (sb - sa) / Self::CELLS as f64;
        let mut s = Vec::with_capacity(Self::CELLS + 1);
        let mut cdf = Vec::with_capacity(Self::CELLS + 1);
        let mut acc = 0.0;
        s.push(sa);
        cdf.push(0.0);
        for i in 0..Self::CELLS {
            let lo = sa + i as f64 * h;
            acc += integrate_fixed(g, lo, lo + h, &rule).max(0.0);
            s.push(lo + h);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Self { s, cdf, unbounded }
    }

    fn invert(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        let s = self.s[i - 1] + t * (self.s[i] - self.s[i - 1]);
        if self.unbounded {
            s / (1.0 - s * s)
        } else {
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_density() -> CustomDensity {
        CustomDensity::new(
            |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }

    #[test]
    fn named_moments() {
        assert_eq!(DistributionSpec::Gaussian.raw_moment(4).unwrap(), 3.0);
        assert_eq!(DistributionSpec::Gaussian.raw_moment(6).unwrap(), 15.0);
        let u = DistributionSpec::UniformPmSqrt3;
        assert_eq!(u.raw_moment(2).unwrap(), 1.0);
        assert!((u.raw_moment(4).unwrap() - 9.0 / 5.0).abs() < 1e-15);
        let r = DistributionSpec::Rademacher;
        assert_eq!(r.raw_moment(7).unwrap(), 0.0);
        assert_eq!(r.raw_moment(8).unwrap(), 1.0);
    }

    #[test]
    fn standardized_low_moments_are_exact() {
        for spec in [
            DistributionSpec::Gaussian,
            DistributionSpec::UniformPmSqrt3,
            DistributionSpec::Rademacher,
            DistributionSpec::PoissonStandardized { lambda: 1.0 },
            DistributionSpec::PoissonStandardized { lambda: 3.5 },
        ] {
            assert_eq!(spec.raw_moment(0).unwrap(), 1.0);
            assert_eq!(spec.raw_moment(1).unwrap(), 0.0);
            assert_eq!(spec.raw_moment(2).unwrap(), 1.0);
        }
    }

    #[test]
    fn poisson_moments_match_direct_sum() {
        // E[((N − λ)/√λ)^j] by summing the pmf.
        for &lambda in &[1.0, 2.5] {
            let spec = DistributionSpec::PoissonStandardized { lambda };
            for j in 3..9 {
                let mut p = (-lambda as f64).exp();
                let mut s = 0.0;
                for n in 0..200 {
                    if n > 0 {
                        p *= lambda / n as f64;
                    }
                    s += p * ((n as f64 - lambda) / lambda.sqrt()).powi(j as i32);
                }
                let m = spec.raw_moment(j).unwrap();
                assert!((m - s).abs() < 1e-11 * s.abs().max(1.0), "λ={lambda} j={j}: {m} vs {s}");
            }
        }
    }

    #[test]
    fn custom_moment_errors() {
        let bad = DistributionSpec::CustomMoments { moments: vec![1.0, 0.5, 1.0] };
        assert!(matches!(bad.raw_moment(0), Err(Error::NotStandardized(_))));
        let short = DistributionSpec::CustomMoments { moments: vec![1.0, 0.0, 1.0, 0.0, 3.0] };
        assert_eq!(short.raw_moment(4).unwrap(), 3.0);
        assert!(matches!(short.raw_moment(5), Err(Error::MomentHorizon { .. })));
        assert!(matches!(short.sample(1, 3), Err(Error::NotSamplable(_))));
    }

    #[test]
    fn density_moments_match_named() {
        let g = DistributionSpec::CustomDensity(gaussian_density());
        for j in 0..9 {
            let want = DistributionSpec::Gaussian.raw_moment(j).unwrap();
            assert!((g.raw_moment(j).unwrap() - want).abs() < 1e-10, "j={j}");
        }
        let s = 3f64.sqrt();
        let u = DistributionSpec::CustomDensity(CustomDensity::new(move |_| 1.0 / (2.0 * s), (-s, s)));
        for j in 0..9 {
            let want = DistributionSpec::UniformPmSqrt3.raw_moment(j).unwrap();
            assert!((u.raw_moment(j).unwrap() - want).abs() < 1e-10, "j={j}");
        }
    }

    #[test]
    fn sampling_support_and_reproducibility() {
        let r = DistributionSpec::Rademacher.sample(11, 4).unwrap();
        assert!(r.iter().all(|&x| x == 1.0 || x == -1.0));
        let p = DistributionSpec::PoissonStandardized { lambda: 1.0 }.sample(3, 500).unwrap();
        assert!(p.iter().all(|&x| (x + 1.0).fract() == 0.0 && x >= -1.0));
        let a = DistributionSpec::Gaussian.sample(99, 100).unwrap();
        let b = DistributionSpec::Gaussian.sample(99, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, DistributionSpec::Gaussian.sample(100, 100).unwrap());
    }

    #[test]
    fn gaussian_sample_mean_clt_bound() {
        let n = 100_000;
        let x = DistributionSpec::Gaussian.sample(2024, n).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn density_sampler_is_standardized() {
        let g = DistributionSpec::CustomDensity(gaussian_density());
        let n = 100_000;
        let x = g.sample(5, n).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn config_round_trip() {
        let c: DistributionConfig = serde_json::from_str(r#"{"kind":"custom_moments","moments":[1,0,1,0,3]}"#).unwrap();
        let spec = DistributionSpec::try_from(c).unwrap();
        assert_eq!(spec.kind(), "custom_moments");
        let j = serde_json::to_string(&DistributionSpec::PoissonStandardized { lambda: 2.0 }).unwrap();
        assert_eq!(j, r#"{"kind":"poisson_standardized","lambda":2.0}"#);
        assert!(serde_json::from_str::<DistributionConfig>(r#"{"kind":"cauchy"}"#).is_err());
    }
}
