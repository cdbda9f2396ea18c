//! Scenario configuration files. Every file is one JSON object with a
//! `kind` field naming the scenario.

use serde::{Deserialize, Serialize};
use wickchaos::distributions::DistributionConfig;
use wickchaos::multiindex::Multiindex;
use wickchaos::noise_space::{HElement, NoiseSpace, TimeSpaceFn};
use wickchaos::spde_parabolic::GridFunction;
use wickchaos::spde_stationary::{Nonlinearity, RootBranch};
use wickchaos::WeightSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Basis(BasisConfig),
    Sde(SdeConfig),
    Parabolic(ParabolicConfig),
    Elliptic(EllipticConfig),
    Mc(McConfig),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Basis(_) => "basis",
            Scenario::Sde(_) => "sde",
            Scenario::Parabolic(_) => "parabolic",
            Scenario::Elliptic(_) => "elliptic",
            Scenario::Mc(_) => "mc",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub distribution: DistributionConfig,
    pub degree: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub horizon: f64,
    pub points: usize,
    pub time_modes: usize,
    #[serde(default = "one")]
    pub cells: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl NoiseConfig {
    pub fn space(&self) -> wickchaos::Result<NoiseSpace> {
        NoiseSpace::with_cells(self.horizon, self.points, self.time_modes, self.cells)
    }
}

/// A deterministic kernel on [0,T]×V, projected onto the noise modes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Constant {
        value: f64,
        #[serde(default)]
        point: Option<usize>,
    },
    /// Σ_j coeffs[j] t^j.
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default)]
        point: Option<usize>,
    },
    Indicator {
        start: f64,
        end: f64,
        #[serde(default)]
        point: Option<usize>,
    },
    /// The k-th basis element of the noise space, 1-based.
    Mode { k: usize },
    /// Raw coefficients against every mode.
    Coefficients { values: Vec<f64> },
}

impl KernelConfig {
    pub fn project(&self, space: &NoiseSpace) -> Result<HElement, String> {
        let check_point = |p: &Option<usize>| match p {
            Some(p) if *p == 0 || *p > space.points() => Err(format!("point {p} outside 1..={}", space.points())),
            _ => Ok(()),
        };
        Ok(match self {
            KernelConfig::Constant { value, point } => {
                check_point(point)?;
                space.project(&TimeSpaceFn::Polynomial { coeffs: vec![*value], point: *point })
            }
            KernelConfig::Polynomial { coeffs, point } => {
                check_point(point)?;
                space.project(&TimeSpaceFn::Polynomial { coeffs: coeffs.clone(), point: *point })
            }
            KernelConfig::Indicator { start, end, point } => {
                check_point(point)?;
                if !(0.0 <= *start && start <= end && *end <= space.horizon()) {
                    return Err(format!("indicator [{start}, {end}] outside [0, {}]", space.horizon()));
                }
                space.project(&TimeSpaceFn::Indicator { start: *start, end: *end, point: *point })
            }
            KernelConfig::Mode { k } => {
                if *k == 0 || *k > space.len() {
                    return Err(format!("mode {k} outside 1..={}", space.len()));
                }
                HElement::unit(space.len(), *k)
            }
            KernelConfig::Coefficients { values } => {
                if values.len() != space.len() {
                    return Err(format!("{} coefficients for {} modes", values.len(), space.len()));
                }
                HElement::new(values.clone())
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTerm {
    pub multiindex: Multiindex,
    pub coefficient: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTerm {
    pub multiindex: Multiindex,
    pub kernel: KernelConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeMethod {
    #[default]
    Propagate,
    ClosedForm,
    Picard,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub noise: NoiseConfig,
    pub degree: usize,
    pub g: KernelConfig,
    pub initial: Vec<ScalarTerm>,
    #[serde(default)]
    pub forcing: Vec<KernelTerm>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub output_every: Option<usize>,
    #[serde(default)]
    pub method: SdeMethod,
    #[serde(default)]
    pub picard_iterations: Option<usize>,
    /// Also evaluate the discrete residual of the integral equation.
    #[serde(default = "yes")]
    pub residual: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTerm {
    pub multiindex: Multiindex,
    pub value: GridFunction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeField {
    /// Noise mode, 1-based.
    pub mode: usize,
    pub value: GridFunction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldForcingTerm {
    pub multiindex: Multiindex,
    pub modes: Vec<ModeField>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicConfig {
    pub grid_points: usize,
    pub a: GridFunction,
    pub b: GridFunction,
    pub noise: NoiseConfig,
    pub g: KernelConfig,
    pub degree: usize,
    pub steps: usize,
    #[serde(default = "one")]
    pub output_every: usize,
    pub initial: Vec<GridTerm>,
    #[serde(default)]
    pub forcing: Vec<FieldForcingTerm>,
    #[serde(default = "yes")]
    pub compare_mild: bool,
    /// Number of equispaced times for the semigroup bound.
    #[serde(default = "twenty")]
    pub semigroup_times: usize,
}

fn twenty() -> usize {
    20
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorTerm {
    pub multiindex: Multiindex,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticConfig {
    /// Row-major matrix A.
    pub a: Vec<Vec<f64>>,
    /// M_1, …, M_K; K is the number of driving variables.
    pub m: Vec<Vec<Vec<f64>>>,
    pub forcing: Vec<VectorTerm>,
    pub degree: usize,
    #[serde(default = "linear")]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub branch: RootBranch,
    #[serde(default)]
    pub weights: Option<WeightSpec>,
    /// Bound on the residual below the top degree, relative to max(1, |f|).
    #[serde(default = "residual_tolerance")]
    pub residual_tolerance: f64,
}

fn residual_tolerance() -> f64 {
    1e-9
}

fn linear() -> Nonlinearity {
    Nonlinearity::Linear
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "gaussian")]
    pub distribution: DistributionConfig,
    #[serde(default = "two")]
    pub vars: usize,
    #[serde(default = "three")]
    pub degree: usize,
    /// Problem for the gbm suite.
    #[serde(default)]
    pub sde: Option<SdeConfig>,
}

fn gaussian() -> DistributionConfig {
    DistributionConfig::Gaussian
}

fn two() -> usize {
    2
}

fn three() -> usize {
    3
}

impl Default for McConfig {
    fn default() -> Self {
        Self { distribution: gaussian(), vars: two(), degree: three(), sde: None }
    }
}

/// G ≡ 1 on [0,1] with eight time modes, w = 1, N = 8.
pub fn default_gbm_problem() -> SdeConfig {
    SdeConfig {
        noise: NoiseConfig { horizon: 1.0, points: 1, time_modes: 8, cells: 1 },
        degree: 8,
        g: KernelConfig::Constant { value: 1.0, point: None },
        initial: vec![ScalarTerm { multiindex: Multiindex::zero(), coefficient: 1.0 }],
        forcing: Vec::new(),
        steps: None,
        output_every: None,
        method: SdeMethod::Propagate,
        picard_iterations: None,
        residual: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_discriminates() {
        let s: Scenario = serde_json::from_str(r#"{"kind":"basis","distribution":{"kind":"gaussian"},"degree":3}"#).unwrap();
        assert_eq!(s.kind(), "basis");
        assert!(serde_json::from_str::<Scenario>("{}").is_err());
        assert!(serde_json::from_str::<Scenario>(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn kernels_project() {
        let space = NoiseSpace::new(1.0, 1, 3).unwrap();
        let g = KernelConfig::Constant { value: 2.0, point: None }.project(&space).unwrap();
        assert!((g.coeffs()[0] - 2.0).abs() < 1e-14);
        assert!(g.coeffs()[1].abs() < 1e-14);
        assert!(KernelConfig::Mode { k: 4 }.project(&space).is_err());
        assert!(KernelConfig::Coefficients { values: vec![1.0] }.project(&space).is_err());
    }
}
