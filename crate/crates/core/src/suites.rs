//! Randomized verification suites for the coefficient-level identities.
//!
//! Every trial draws from its own ChaCha8 stream (seed, trial), so a
//! report can be replayed from its seed alone.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::ProductBasis;
use crate::chaos::{wick_exp, wick_mul, ChaosExpansion, Truncation};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::malliavin::{
    duality_sides, field_adaptedness_defect, isometry_sides, measurability_defect, skorokhod, HValuedExpansion,
};
use crate::mc_oracle::times_variable;
use crate::multiindex::{enumerate_degree, factorial, Multiindex};
use crate::noise_space::{chaos_kernels, multiple_integral, symmetrize, HElement, NoiseSpace, SymmetricTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Isometry,
    Duality,
    Adapted,
    Fl1,
    Fp3,
    Prop1,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Isometry, Suite::Duality, Suite::Adapted, Suite::Fl1, Suite::Fp3, Suite::Prop1];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Isometry => "isometry",
            Suite::Duality => "duality",
            Suite::Adapted => "adapted",
            Suite::Fl1 => "fl1",
            Suite::Fp3 => "fp3",
            Suite::Prop1 => "prop1",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{s}`")))
    }
}

/// One named identity within a suite.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: usize,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.into(), instances: 0, max_error: 0.0, tolerance, failures: 0 }
    }

    fn record(&mut self, error: f64) {
        self.instances += 1;
        if error.is_nan() || error > self.tolerance {
            self.failures += 1;
        }
        self.max_error = if error.is_nan() { f64::NAN } else { self.max_error.max(error) };
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    /// Largest error of the first check.
    pub max_error: f64,
    pub tolerance: f64,
    /// Failures summed over all checks.
    pub failures: usize,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn from_checks(suite: Suite, trials: usize, seed: u64, checks: Vec<Check>) -> Self {
        let failures = checks.iter().map(|c| c.failures).sum();
        Self {
            suite,
            trials,
            seed,
            max_error: checks[0].max_error,
            tolerance: checks[0].tolerance,
            failures,
            pass: failures == 0,
            checks,
        }
    }
}

/// Stream `trial` of `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Uniform(−1,1)/√(α!) on each α of degree ≤ `max_degree`, kept with
/// probability `fill`.
pub fn random_scalar<R: Rng>(rng: &mut R, t: Truncation, max_degree: usize, fill: f64) -> ChaosExpansion<f64> {
    let mut u = ChaosExpansion::new(t);
    for a in t.index_set() {
        if a.degree() as usize <= max_degree && rng.random::<f64>() < fill {
            let c = rng.random_range(-1.0..1.0) / a.factorial().expect("small degree").sqrt();
            u.insert(a, c).expect("inside the truncation");
        }
    }
    u
}

/// H-valued analogue of [`random_scalar`] with `modes` H-coefficients.
pub fn random_h<R: Rng>(rng: &mut R, t: Truncation, modes: usize, max_degree: usize, fill: f64) -> HValuedExpansion {
    let mut u = ChaosExpansion::new(t);
    for a in t.index_set() {
        if a.degree() as usize <= max_degree && rng.random::<f64>() < fill {
            let s = 1.0 / a.factorial().expect("small degree").sqrt();
            let h = HElement::new((0..modes).map(|_| s * rng.random_range(-1.0..1.0)).collect());
            u.insert(a, h).expect("inside the truncation");
        }
    }
    u
}

/// A random adapted field: u_α only has components on modes whose cell is
/// strictly later than every cell used by α.
pub fn random_adapted_h<R: Rng>(rng: &mut R, space: &NoiseSpace, degree: usize, fill: f64) -> HValuedExpansion {
    let k = space.len();
    let t = Truncation::new(k, degree);
    let mut u = ChaosExpansion::new(t);
    for a in t.index_set() {
        if a.degree() as usize >= degree || rng.random::<f64>() >= fill {
            continue;
        }
        let last = a.entries().iter().map(|&(j, _)| space.mode(j as usize).cell as isize).max().unwrap_or(-1);
        let s = 1.0 / a.factorial().expect("small degree").sqrt();
        let coeffs: Vec<f64> = (1..=k)
            .map(|j| if space.mode(j).cell as isize > last { s * rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        if coeffs.iter().any(|c| *c != 0.0) {
            u.insert(a, HElement::new(coeffs)).expect("inside the truncation");
        }
    }
    u
}

/// Random symmetric tensor of degree n over `vars` modes, E_α-coefficients
/// Uniform(−1,1) on the variables in `allowed`.
pub fn random_tensor<R: Rng>(rng: &mut R, vars: usize, n: usize, allowed: &[u32]) -> SymmetricTensor {
    let mut v = SymmetricTensor::zero(n);
    for a in enumerate_degree(vars, n) {
        if a.entries().iter().all(|(k, _)| allowed.contains(k)) {
            v.insert(a, rng.random_range(-1.0..1.0)).expect("degree matches");
        }
    }
    v
}

fn relative(err: f64, scale: f64) -> f64 {
    err / scale.max(1.0)
}

pub fn run(suite: Suite, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let checks = match suite {
        Suite::Isometry => isometry(trials, seed)?,
        Suite::Duality => duality(trials, seed)?,
        Suite::Adapted => adapted(trials, seed)?,
        Suite::Fl1 => fl1(trials, seed)?,
        Suite::Fp3 => fp3(trials, seed)?,
        Suite::Prop1 => prop1(trials, seed)?,
    };
    Ok(VerifyReport::from_checks(suite, trials, seed, checks))
}

/// Relative isometry gap at K = 3, N = 4, and the adapted subcase on a
/// three-cell space where the cross term must vanish.
fn isometry(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let space = NoiseSpace::new(1.0, 1, 3)?;
    let cells = NoiseSpace::with_cells(1.0, 1, 1, 3)?;
    let t = Truncation::new(3, 4);
    let mut main = Check::new("isometry_relative_gap", 1e-10);
    let mut cross = Check::new("adapted_cross_term", 1e-12);
    let mut adapted_gap = Check::new("adapted_isometry_relative_gap", 1e-10);
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let u = random_h(&mut rng, t, space.len(), 3, 0.7);
        let r = isometry_sides(&u);
        if r.truncation_loss {
            return Err(Error::InvalidArgument("isometry instance lost mass to truncation".into()));
        }
        main.record(relative((r.lhs - r.rhs).abs(), r.lhs.abs().max(r.rhs.abs())));
        let ua = random_adapted_h(&mut rng, &cells, 4, 0.7);
        let ra = isometry_sides(&ua);
        cross.record(ra.cross_term.abs());
        adapted_gap.record(relative((ra.lhs - ra.norm_sq).abs(), ra.norm_sq));
    }
    Ok(vec![main, cross, adapted_gap])
}

fn duality(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let t = Truncation::new(3, 4);
    let mut gap = Check::new("duality_gap", 1e-10);
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let u = random_h(&mut rng, t, 3, 3, 0.7);
        let v = random_scalar(&mut rng, t, 4, 0.7);
        let r = duality_sides(&u, &v);
        if r.truncation_loss {
            return Err(Error::InvalidArgument("duality instance lost mass to truncation".into()));
        }
        gap.record(r.gap);
    }
    Ok(vec![gap])
}

/// Preservation of adaptedness by t ↦ δ(χ_{[0,t]}u) at the cell
/// boundaries, and measurability of wick_exp(χ_{[0,t0]}G) at t0.
fn adapted(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let space = NoiseSpace::with_cells(1.0, 1, 2, 4)?;
    let mut preservation = Check::new("integral_measurability_defect", crate::malliavin::MEASURABILITY_TOL);
    let mut input = Check::new("input_field_defect", crate::malliavin::MEASURABILITY_TOL);
    let mut exponent = Check::new("wick_exp_measurability_defect", crate::malliavin::MEASURABILITY_TOL);
    let mut times = space.breakpoints();
    times.push(space.horizon());
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let u = random_adapted_h(&mut rng, &space, 3, 0.5);
        input.record(field_adaptedness_defect(&space, &u)?);
        let mut worst = 0.0f64;
        for &t in &times {
            let cut = u.map(|_, h| space.restrict(h, 0.0, t));
            worst = worst.max(measurability_defect(&space, &skorokhod(&cut), t)?);
        }
        preservation.record(worst);
        let g = HElement::new((0..space.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut worst = 0.0f64;
        for &t in &times {
            let m = wick_exp(&space.restrict(&g, 0.0, t), 4);
            worst = worst.max(measurability_defect(&space, &m, t)?);
        }
        exponent.record(worst);
    }
    Ok(vec![preservation, input, exponent])
}

/// Dense array A[i_1..i_n] = v_{α(i)} α(i)! of a symmetric tensor.
fn to_dense(v: &SymmetricTensor, vars: usize) -> Vec<f64> {
    let n = v.degree();
    let size = vars.pow(n as u32);
    let mut out = vec![0.0; size];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut idx = flat;
        let mut exps = vec![0u32; vars];
        for _ in 0..n {
            exps[idx % vars] += 1;
            idx /= vars;
        }
        let a = Multiindex::from_dense(&exps);
        *o = v.get(&a) * a.factorial().expect("small degree");
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Symmetrization of the dense tensor product, by averaging over all
/// permutations of the n + m slots.
fn dense_symmetric_product(a: &[f64], n: usize, b: &[f64], m: usize, vars: usize) -> Vec<f64> {
    let total = n + m;
    let size = vars.pow(total as u32);
    let digits = |mut flat: usize| {
        let mut d = vec![0usize; total];
        for x in d.iter_mut() {
            *x = flat % vars;
            flat /= vars;
        }
        d
    };
    let flatten = |d: &[usize]| d.iter().rev().fold(0usize, |acc, &x| acc * vars + x);
    let product: Vec<f64> = (0..size)
        .map(|flat| {
            let d = digits(flat);
            a[flatten(&d[..n])] * b[flatten(&d[n..])]
        })
        .collect();
    let perms = permutations(total);
    (0..size)
        .map(|flat| {
            let d = digits(flat);
            let s: f64 = perms
                .iter()
                .map(|p| {
                    let e: Vec<usize> = p.iter().map(|&i| d[i]).collect();
                    product[flatten(&e)]
                })
                .sum();
            s / perms.len() as f64
        })
        .collect()
}

/// I_n(v) ⋄ I_m(u) = I_{n+m}(v ⊗̂ u) at K = 2 for all n + m ≤ 6, the
/// right side built from dense tensors.
fn fl1(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let vars = 2;
    let space = NoiseSpace::new(1.0, 1, vars)?;
    let mut check = Check::new("wick_of_integrals_relative_error", 1e-12);
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        for n in 0..=6 {
            for m in 0..=(6 - n) {
                let v = random_tensor(&mut rng, vars, n, &[1, 2]);
                let u = random_tensor(&mut rng, vars, m, &[1, 2]);
                let t = Truncation::new(vars, n + m);
                let lhs = wick_mul(
                    &multiple_integral(&space, &v)?.retruncate(t),
                    &multiple_integral(&space, &u)?.retruncate(t),
                )?;
                let dense = dense_symmetric_product(&to_dense(&v, vars), n, &to_dense(&u, vars), m, vars);
                let w = SymmetricTensor::from_dense(vars, n + m, &dense)?;
                let rhs = multiple_integral(&space, &w)?;
                let scale = rhs.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
                check.record(relative(lhs.max_abs_diff(&rhs), scale));
            }
        }
    }
    Ok(vec![check])
}

/// The top chaos of I_n(f)·I_1(g), from the exact product rule, equals
/// I_{n+1}(f ⊗̃ g). Uniform instances keep f and g on disjoint variables;
/// degenerate slots are dropped.
fn fp3(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let vars = 2;
    let space = NoiseSpace::new(1.0, 1, vars)?;
    let laws = [
        ("gaussian", DistributionSpec::Gaussian, false),
        ("rademacher", DistributionSpec::Rademacher, false),
        ("uniform_pm_sqrt3", DistributionSpec::UniformPmSqrt3, true),
    ];
    let mut checks = Vec::new();
    for (name, law, disjoint) in laws {
        let basis = ProductBasis::iid(&law, vars, 7)?;
        let mut check = Check::new(&format!("{name}_top_chaos_relative_error"), 1e-12);
        for i in 0..trials {
            let mut rng = trial_rng(seed, i);
            for n in 0..=5 {
                let (fv, gv): (&[u32], &[u32]) = if disjoint { (&[1], &[2]) } else { (&[1, 2], &[1, 2]) };
                let f = random_tensor(&mut rng, vars, n, fv);
                let g = random_tensor(&mut rng, vars, 1, gv);
                let i_f = multiple_integral(&space, &f)?.retruncate(Truncation::new(vars, n + 1));
                let mut product = ChaosExpansion::new(Truncation::new(vars, n + 1));
                for k in 1..=vars as u32 {
                    let gk = g.get(&Multiindex::unit(k));
                    if gk != 0.0 {
                        product = product.add(&times_variable(&i_f, &basis, k)?.scaled(gk))?;
                    }
                }
                let rhs = multiple_integral(&space, &symmetrize(&f, &g)?)?;
                let mut err = 0.0f64;
                let mut scale = 0.0f64;
                for a in enumerate_degree(vars, n + 1) {
                    if basis.is_degenerate(&a) {
                        continue;
                    }
                    let x = product.get(&a).copied().unwrap_or(0.0);
                    let y = rhs.get(&a).copied().unwrap_or(0.0);
                    err = err.max((x - y).abs());
                    scale = scale.max(y.abs());
                }
                check.record(relative(err, scale));
            }
        }
        checks.push(check);
    }
    Ok(checks)
}

/// δ(u) = Σ_n I_{n+1}(ũ_n)/n! with ũ_n the symmetrization of the degree-n
/// kernel of u against its H-argument.
fn prop1(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let space = NoiseSpace::new(1.0, 1, 3)?;
    let k = space.len();
    let t = Truncation::new(k, 4);
    let mut check = Check::new("skorokhod_kernel_route_error", 1e-12);
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let u = random_h(&mut rng, t, k, 3, 0.7);
        let direct = skorokhod(&u);
        let mut via = ChaosExpansion::new(t);
        for j in 1..=k {
            let component = u.map(|_, h| h.get(j)).pruned();
            let m_j = SymmetricTensor::from_h(&HElement::unit(k, j));
            for (n, eta) in chaos_kernels(&component).into_iter().enumerate() {
                if eta.is_empty() {
                    continue;
                }
                let term = multiple_integral(&space, &symmetrize(&eta, &m_j)?)?.scaled(1.0 / factorial(n as u32));
                via = via.add(&term.retruncate(t))?;
            }
        }
        check.record(direct.max_abs_diff(&via));
    }
    Ok(vec![check])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_trials() {
        for s in Suite::ALL {
            let r = run(s, 5, 42).unwrap();
            assert!(r.pass, "{s}: {r:?}");
        }
    }

    #[test]
    fn reports_replay() {
        let a = serde_json::to_string(&run(Suite::Duality, 4, 9).unwrap()).unwrap();
        let b = serde_json::to_string(&run(Suite::Duality, 4, 9).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn dense_round_trip() {
        let mut rng = trial_rng(1, 0);
        let v = random_tensor(&mut rng, 2, 3, &[1, 2]);
        let back = SymmetricTensor::from_dense(2, 3, &to_dense(&v, 2)).unwrap();
        for (a, c) in v.iter() {
            assert!((back.get(a) - c).abs() < 1e-15);
        }
    }

    #[test]
    fn anticipating_field_fails_preservation() {
        let space = NoiseSpace::with_cells(1.0, 1, 1, 2).unwrap();
        // u = 𝔑_{ε_2} m_1: the integrand looks into the second cell.
        let mut u: HValuedExpansion = ChaosExpansion::new(Truncation::new(2, 2));
        u.insert(Multiindex::unit(2), HElement::unit(2, 1)).unwrap();
        assert!(field_adaptedness_defect(&space, &u).unwrap() > 0.1);
        let cut = u.map(|_, h| space.restrict(h, 0.0, 0.5));
        assert!(measurability_defect(&space, &skorokhod(&cut), 0.5).unwrap() > 0.1);
    }
}
