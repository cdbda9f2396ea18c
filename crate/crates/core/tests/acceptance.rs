//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::f64::consts::E;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wickchaos::basis::{gram_check, orthogonalize, ProductBasis};
use wickchaos::chaos::{wick_exp, ChaosExpansion, Truncation, WeightSpec};
use wickchaos::distributions::DistributionSpec;
use wickchaos::malliavin::measurability_defect;
use wickchaos::mc_oracle::gbm_crosscheck;
use wickchaos::multiindex::{factorial, Multiindex};
use wickchaos::nalgebra::DMatrix;
use wickchaos::noise_space::{HElement, NoiseSpace, TimeSpaceFn};
use wickchaos::sde::{closed_form, picard, propagate, SdeProblem};
use wickchaos::spde_parabolic::{
    grid_points, mild_solution, propagate_parabolic, semigroup_norm_check, ModalGridField, ParabolicProblem,
};
use wickchaos::spde_stationary::{
    dense_linear_solve, fixed_point_wick_cubic, max_vector_diff, residual, solve_linear, solve_wick_cubic,
    weighted_solution_norm, RootBranch, StationaryProblem,
};
use wickchaos::suites::{self, Suite, VerifyReport};

const SEED: u64 = 20_240_611;

const GRAM_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-10;
const ISOMETRY_TOL: f64 = 1e-10;
const CROSS_TERM_TOL: f64 = 1e-12;
const DUALITY_TOL: f64 = 1e-10;
const IDENTITY_TRIALS: usize = 200;
const WICK_EXP_TOL: f64 = 1e-9;
const SDE_AGREEMENT_TOL: f64 = 1e-9;
const SDE_MOMENT_TOL: f64 = 1e-9;
const GBM_PATHS: usize = 100_000;
const MIN_ORDER: f64 = 1.9;
const SEMIGROUP_TIMES: usize = 20;
const FIB_ORTHONORMAL_TOL: f64 = 1e-12;
const FIB_KONDRATIEV_TOL: f64 = 1e-12;
const ELLIPTIC_TOL: f64 = 1e-9;
const PROPERTY_TOL: f64 = 1e-12;
const PROPERTY_TRIALS: usize = 20;
const ADAPTED_FIELDS: usize = 50;

struct Line {
    pass: bool,
    detail: String,
}

impl Line {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn one() -> TimeSpaceFn {
    TimeSpaceFn::Polynomial { coeffs: vec![1.0], point: None }
}

fn suite_line(r: &VerifyReport, pinned: &[(&str, f64)]) -> Line {
    let tolerances_pinned = r.checks.iter().all(|c| {
        pinned.iter().find(|(n, _)| c.name.contains(n)).is_some_and(|(_, t)| c.tolerance <= *t)
    });
    let worst: Vec<String> = r.checks.iter().map(|c| format!("{}={:.2e}/{}", c.name, c.max_error, c.instances)).collect();
    Line::new(r.pass && tolerances_pinned, format!("failures={} {}", r.failures, worst.join(" ")))
}

fn c1_orthogonality() -> Line {
    let laws = [
        ("gaussian", DistributionSpec::Gaussian),
        ("uniform_pm_sqrt3", DistributionSpec::UniformPmSqrt3),
        ("rademacher", DistributionSpec::Rademacher),
        ("poisson_standardized(1)", DistributionSpec::PoissonStandardized { lambda: 1.0 }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, law) in laws {
        let b = ProductBasis::iid(&law, 3, 8).expect("basis");
        let r = gram_check(&b, GRAM_TOL);
        pass &= r.pass;
        parts.push(format!("{name}={:.2e} ({} pairs)", r.max_deviation, r.pairs));
    }
    Line::new(pass, parts.join(" "))
}

fn c2_closed_forms() -> Line {
    let g = orthogonalize(&DistributionSpec::Gaussian, 3).expect("gaussian");
    let dev = |a: &[f64], b: &[f64]| -> f64 {
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let hermite = dev(&g.coeffs(2), &[-1.0, 0.0, 1.0]).max(dev(&g.coeffs(3), &[0.0, -3.0, 0.0, 1.0]));
    // Legendre by Bonnet's recurrence, then x → x/√3 and the n!(2n+1) scale.
    let mut p = vec![vec![1.0], vec![0.0, 1.0]];
    for n in 1..6 {
        let mut next = vec![0.0; n + 2];
        for (j, c) in p[n].iter().enumerate() {
            next[j + 1] += (2 * n + 1) as f64 * c / (n + 1) as f64;
        }
        for (j, c) in p[n - 1].iter().enumerate() {
            next[j] -= n as f64 * c / (n + 1) as f64;
        }
        p.push(next);
    }
    let u = orthogonalize(&DistributionSpec::UniformPmSqrt3, 6).expect("uniform");
    let mut legendre = 0.0f64;
    for (n, pn) in p.iter().enumerate() {
        let s = (factorial(n as u32) * (2 * n + 1) as f64).sqrt();
        let want: Vec<f64> = pn.iter().enumerate().map(|(j, c)| s * c * 3f64.powf(-(j as f64) / 2.0)).collect();
        legendre = legendre.max(dev(&u.coeffs(n), &want));
    }
    Line::new(
        hermite <= CLOSED_FORM_TOL && legendre <= CLOSED_FORM_TOL,
        format!("hermite={hermite:.2e} legendre(n<=6)={legendre:.2e}"),
    )
}

fn c3_isometry() -> Line {
    let r = suites::run(Suite::Isometry, IDENTITY_TRIALS, SEED).expect("isometry suite");
    suite_line(&r, &[("isometry", ISOMETRY_TOL), ("cross_term", CROSS_TERM_TOL)])
}

fn c4_duality() -> Line {
    let r = suites::run(Suite::Duality, IDENTITY_TRIALS, SEED).expect("duality suite");
    suite_line(&r, &[("duality", DUALITY_TOL)])
}

fn c5_wick_exponent() -> Line {
    let f = HElement::new(vec![0.6, 0.8, 0.0]);
    let m = wick_exp(&f, 13).second_moment();
    let err = (m - E).abs();
    Line::new((f.norm_sq() - 1.0).abs() < 1e-15 && err <= WICK_EXP_TOL, format!("|E u^2 - e|={err:.2e} at N=13"))
}

fn gbm_problem(time_modes: usize, degree: usize) -> SdeProblem {
    let space = NoiseSpace::new(1.0, 1, time_modes).expect("space");
    let g = space.project(&one());
    let w = ChaosExpansion::constant(Truncation::new(time_modes, degree), 1.0);
    SdeProblem::new(space, g, w, degree)
}

fn c6_sde() -> (Line, Line) {
    let p = gbm_problem(8, 8);
    let a = propagate(&p).expect("propagate");
    let b = closed_form(&p).expect("closed form");
    let c = picard(&p, 8).expect("picard");
    let ab = a.max_abs_diff(&b).expect("same grid");
    let ac = a.max_abs_diff(&c).expect("same grid");
    let bc = b.max_abs_diff(&c).expect("same grid");
    let moment = (a.last().second_moment() - E).abs();
    let agree = ab.max(ac).max(bc) <= SDE_AGREEMENT_TOL;
    let main = Line::new(
        agree && moment <= SDE_MOMENT_TOL,
        format!("prop-cf={ab:.2e} prop-picard={ac:.2e} cf-picard={bc:.2e} |E u(1)^2 - e|={moment:.2e} at N=8"),
    );
    // Same moment with the series long enough for the tolerance; only m_1 carries G.
    let q = gbm_problem(2, 13);
    let moment13 = (propagate(&q).expect("propagate").last().second_moment() - E).abs();
    let extra = Line::new(moment13 <= SDE_MOMENT_TOL, format!("|E u(1)^2 - e|={moment13:.2e} at N=13, K=2"));
    (main, extra)
}

fn c7_gbm() -> Line {
    let p = gbm_problem(8, 8);
    let r = gbm_crosscheck(&p, &DistributionSpec::Gaussian, GBM_PATHS, SEED).expect("crosscheck");
    let again = gbm_crosscheck(&p, &DistributionSpec::Gaussian, GBM_PATHS, SEED).expect("crosscheck");
    let replay = r.second_moment.estimate.to_bits() == again.second_moment.estimate.to_bits();
    let s = &r.second_moment;
    Line::new(
        s.pass && r.mean.pass && replay,
        format!(
            "chaos={:.6} mc={:.6} se={:.4} z={:.2} mean z={:.2} replay={replay}",
            s.exact,
            s.estimate,
            s.se,
            (s.estimate - s.exact) / s.se,
            (r.mean.estimate - r.mean.exact) / r.mean.se
        ),
    )
}

fn heat(m: usize, steps: usize, k: usize, degree: usize, g: HElement, w0: Vec<f64>) -> ParabolicProblem {
    let space = NoiseSpace::new(1.0, 1, k).expect("space");
    let w = ChaosExpansion::from_coefficients(Truncation::new(k, degree), [(Multiindex::zero(), w0)]).expect("w");
    ParabolicProblem::new(vec![0.5; m], vec![0.0; m], space, g, w, degree, steps)
}

fn c8_parabolic() -> Line {
    // Heat equation with G = 0 against e^{-a t}, e^{-9 a t} mode decay.
    let error = |m: usize| {
        let x = grid_points(m);
        let w0: Vec<f64> = x.iter().map(|x| x.sin() + (3.0 * x).sin()).collect();
        let p = heat(m, m, 1, 0, HElement::zeros(1), w0);
        let u = propagate_parabolic(&p).expect("heat");
        let last = u.coefficient(&Multiindex::zero()).expect("mean").last().expect("time").clone();
        x.iter()
            .zip(&last)
            .map(|(x, v)| (v - ((-0.5f64).exp() * x.sin() + (-4.5f64).exp() * (3.0 * x).sin())).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (error(32), error(64));
    let heat_order = (e1 / e2).log2();

    // Forced problem: propagator against the mild form.
    let m = 16;
    let x = grid_points(m);
    let gap = |steps: usize| {
        let mut p = heat(m, steps, 2, 2, HElement::new(vec![0.5, 0.2]), x.iter().map(|x| x.sin()).collect());
        p.b = vec![0.3; m];
        let phi: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let mut f = ChaosExpansion::new(p.truncation());
        f.insert(Multiindex::zero(), ModalGridField::single(2, 2, phi.clone())).expect("f");
        f.insert(Multiindex::unit(1), ModalGridField::single(2, 1, phi)).expect("f");
        let p = p.with_forcing(f);
        propagate_parabolic(&p).expect("propagator").max_abs_diff(&mild_solution(&p).expect("mild")).expect("grid")
    };
    let (d1, d2) = (gap(40), gap(80));
    let mild_order = (d1 / d2).log2();

    let mut q = heat(32, 50, 1, 0, HElement::zeros(1), vec![0.0; 32]);
    q.b = grid_points(32).iter().map(|x| 0.8 * x.sin()).collect();
    let h: Vec<f64> = grid_points(32).iter().map(|x| x.sin()).collect();
    let holds = (1..=SEMIGROUP_TIMES)
        .filter(|&i| semigroup_norm_check(&q, &h, i as f64 / SEMIGROUP_TIMES as f64).expect("check").holds)
        .count();

    Line::new(
        heat_order >= MIN_ORDER && mild_order >= MIN_ORDER && holds == SEMIGROUP_TIMES,
        format!(
            "heat err {e1:.2e}->{e2:.2e} order={heat_order:.3}; mild gap {d1:.2e}->{d2:.2e} order={mild_order:.3}; semigroup {holds}/{SEMIGROUP_TIMES}"
        ),
    )
}

fn c9_fibonacci() -> Line {
    let n = 20;
    let f = ChaosExpansion::constant(Truncation::new(1, n), vec![1.0]);
    let p = StationaryProblem::linear(DMatrix::from_element(1, 1, 1.0), vec![DMatrix::from_element(1, 1, -1.0)], f, n);
    let u = solve_linear(&p).expect("solve").expansion;
    let mut bitwise = true;
    let mut orth = 0.0f64;
    for k in 0..=n as u32 {
        let c = u.get(&Multiindex::from_dense(&[k])).map_or(f64::NAN, |v| v[0]);
        bitwise &= c.to_bits() == 1.0f64.to_bits();
        let s = factorial(k).sqrt();
        orth = orth.max((c * s - s).abs() / s);
    }
    let k = weighted_solution_norm(&u, &WeightSpec::Kondratiev { rho: -2.0, l: 0.0 }).expect("norm");
    let kerr = (k.norm - E).abs();
    let plain = weighted_solution_norm(&u, &WeightSpec::unweighted()).expect("norm");
    let increasing = plain.partial_sums.windows(2).all(|w| w[1] > w[0]);
    let unbounded = plain.norm >= factorial(n as u32);
    Line::new(
        bitwise && orth <= FIB_ORTHONORMAL_TOL && kerr <= FIB_KONDRATIEV_TOL && increasing && unbounded,
        format!(
            "bitwise ones={bitwise} orthonormal rel={orth:.2e} |S20-e|={kerr:.2e} plain S20={:.3e} increasing={increasing}",
            plain.norm
        ),
    )
}

fn c10_elliptic() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (d, k, n) = (4, 3, 4);
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let a = &b * b.transpose() + DMatrix::identity(d, d) * d as f64;
    let m = (0..k).map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5))).collect();
    let t = Truncation::new(k, n);
    let mut f = ChaosExpansion::new(t);
    for alpha in t.index_set().into_iter().filter(|a| a.degree() <= 2) {
        f.insert(alpha, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("f");
    }
    let p = StationaryProblem::linear(a, m, f, n);
    let sweep = solve_linear(&p).expect("sweep").expansion;
    let dense = dense_linear_solve(&p).expect("dense");
    let linear = max_vector_diff(&sweep, &dense);
    let linear_res = residual(&p, &sweep).expect("residual").below_top;

    let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.5]);
    let t = Truncation::new(2, 4);
    let mut f = ChaosExpansion::new(t);
    f.insert(Multiindex::zero(), vec![0.4, -0.3]).expect("f");
    f.insert(Multiindex::unit(1), vec![0.2, 0.1]).expect("f");
    let m = (0..2).map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.3..0.3))).collect();
    let p = StationaryProblem::wick_cubic(a, m, f, 4, RootBranch::NearestZero);
    let sweep = solve_wick_cubic(&p).expect("sweep").expansion;
    let oracle = fixed_point_wick_cubic(&p, 0.7, 1e-15, 10_000).expect("fixed point");
    let cubic = max_vector_diff(&sweep, &oracle);
    let cubic_res = residual(&p, &sweep).expect("residual").max_abs;
    Line::new(
        linear <= ELLIPTIC_TOL && linear_res <= ELLIPTIC_TOL && cubic <= ELLIPTIC_TOL && cubic_res <= ELLIPTIC_TOL,
        format!(
            "linear sweep-dense={linear:.2e} residual={linear_res:.2e}; cubic sweep-fixed point={cubic:.2e} residual={cubic_res:.2e}"
        ),
    )
}

fn c11_properties() -> Line {
    let fl = suites::run(Suite::Fl1, PROPERTY_TRIALS, SEED).expect("fl1");
    let fp = suites::run(Suite::Fp3, PROPERTY_TRIALS, SEED).expect("fp3");
    let a = suite_line(&fl, &[("", PROPERTY_TOL)]);
    let b = suite_line(&fp, &[("", PROPERTY_TOL)]);
    Line::new(a.pass && b.pass, format!("fl1: {} | fp3: {}", a.detail, b.detail))
}

fn c12_adaptedness() -> Line {
    let space = NoiseSpace::with_cells(1.0, 1, 3, 4).expect("space");
    let g = space.project(&one());
    let t0 = 0.5;
    let u = wick_exp(&space.restrict(&g, 0.0, t0), 4);
    let at = measurability_defect(&space, &u, t0).expect("defect");
    let before = measurability_defect(&space, &u, 0.25).expect("defect");
    let r = suites::run(Suite::Adapted, ADAPTED_FIELDS, SEED).expect("adapted suite");
    let s = suite_line(&r, &[("", wickchaos::malliavin::MEASURABILITY_TOL)]);
    Line::new(
        at <= wickchaos::malliavin::MEASURABILITY_TOL && before > 1e-3 && s.pass,
        format!("defect at t0={at:.2e} (at t0/2: {before:.2e}); {ADAPTED_FIELDS} fields: {}", s.detail),
    )
}

fn main() {
    let mut failed = 0;
    let mut emit = |id: &str, name: &str, start: Instant, line: Line| {
        let verdict = if line.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>3} [{verdict}] {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), line.detail);
        if !line.pass {
            failed += 1;
        }
    };
    let criteria: [(&str, &str, fn() -> Line); 5] = [
        ("1", "basis orthogonality", c1_orthogonality),
        ("2", "hermite and legendre closed forms", c2_closed_forms),
        ("3", "isometry suite", c3_isometry),
        ("4", "duality suite", c4_duality),
        ("5", "wick exponential second moment", c5_wick_exponent),
    ];
    for (id, name, f) in criteria {
        let s = Instant::now();
        emit(id, name, s, f());
    }
    let s = Instant::now();
    let (main, extra) = c6_sde();
    emit("6", "sde three-way agreement", s, main);
    emit("6+", "sde second moment, longer series (supplementary)", s, extra);
    let rest: [(&str, &str, fn() -> Line); 6] = [
        ("7", "gaussian gbm cross-check", c7_gbm),
        ("8", "parabolic consistency", c8_parabolic),
        ("9", "fibonacci elliptic", c9_fibonacci),
        ("10", "elliptic oracle equivalence", c10_elliptic),
        ("11", "product rule property tests", c11_properties),
        ("12", "adaptedness", c12_adaptedness),
    ];
    for (id, name, f) in rest {
        let s = Instant::now();
        emit(id, name, s, f());
    }
    println!("acceptance: {failed} failing");
    if failed > 0 {
        std::process::exit(1);
    }
}
