//! Fixed inputs shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wickchaos::chaos::{ChaosExpansion, Truncation};
use wickchaos::malliavin::HValuedExpansion;
use wickchaos::nalgebra::DMatrix;
use wickchaos::noise_space::{HElement, NoiseSpace};
use wickchaos::sde::SdeProblem;
use wickchaos::spde_parabolic::{grid_points, ParabolicProblem};
use wickchaos::spde_stationary::StationaryProblem;
use wickchaos::suites::{random_h, random_scalar};
use wickchaos::Multiindex;

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(2024)
}

/// Dense random scalar expansion.
pub fn scalar(vars: usize, degree: usize) -> ChaosExpansion<f64> {
    random_scalar(&mut rng(), Truncation::new(vars, degree), degree, 1.0)
}

/// Dense random H-valued expansion one degree below the truncation.
pub fn h_valued(vars: usize, degree: usize) -> HValuedExpansion {
    random_h(&mut rng(), Truncation::new(vars, degree), vars, degree - 1, 1.0)
}

/// G ≡ 1 on [0,1], w = 1.
pub fn sde(time_modes: usize, degree: usize) -> SdeProblem {
    let space = NoiseSpace::new(1.0, 1, time_modes).expect("valid space");
    let g = HElement::unit(time_modes, 1);
    let w = ChaosExpansion::constant(Truncation::new(time_modes, degree), 1.0);
    SdeProblem::new(space, g, w, degree)
}

pub fn parabolic(m: usize, time_modes: usize, degree: usize, steps: usize) -> ParabolicProblem {
    let space = NoiseSpace::new(1.0, 1, time_modes).expect("valid space");
    let w0: Vec<f64> = grid_points(m).iter().map(|x| x.sin()).collect();
    let w = ChaosExpansion::from_coefficients(Truncation::new(time_modes, degree), [(Multiindex::zero(), w0)])
        .expect("constant term");
    ParabolicProblem::new(vec![0.5; m], vec![0.1; m], space, HElement::unit(time_modes, 1).scaled(0.5), w, degree, steps)
}

/// Diagonally dominant A with small couplings.
pub fn stationary(dim: usize, vars: usize, degree: usize) -> StationaryProblem {
    let a = DMatrix::from_fn(dim, dim, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) });
    let m = (0..vars)
        .map(|k| DMatrix::from_fn(dim, dim, |i, j| 0.1 * ((i * 3 + j + k) % 5) as f64 - 0.2))
        .collect();
    let f = ChaosExpansion::constant(Truncation::new(vars, degree), vec![1.0; dim]);
    StationaryProblem::linear(a, m, f, degree)
}
