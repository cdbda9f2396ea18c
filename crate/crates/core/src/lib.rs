//! Distribution-free chaos expansions driven by arbitrary standardized
//! random variables.
//!
//! The crate builds orthogonal polynomial bases from moments, represents
//! random variables and fields as truncated expansions u = Σ u_α 𝔑_α with
//! E[𝔑_α²] = α!, and provides the Wick product, Skorokhod integral and
//! Malliavin derivative on coefficients. Linear Wick SDEs, parabolic SPDEs
//! on a periodic grid and stationary (elliptic) problems are solved by
//! triangular sweeps over the multiindex set; a Monte Carlo oracle checks
//! the algebra by sampling.

pub mod basis;
pub mod chaos;
pub mod dd;
pub mod distributions;
pub mod error;
pub mod io;
pub mod malliavin;
pub mod mc_oracle;
pub mod multiindex;
pub mod noise_space;
pub mod quadrature;
pub mod sde;
pub mod spde_parabolic;
pub mod spde_stationary;
pub mod suites;

pub use basis::{gram_check, orthogonalize, OrthogonalBasis1D, ProductBasis};
pub use chaos::{wick_exp, wick_mul, wick_pow, ChaosExpansion, Coefficient, Truncation, WeightSpec};
pub use distributions::{DistributionConfig, DistributionSpec};
pub use error::{Error, Result};
pub use malliavin::{skorokhod, malliavin, HValuedExpansion};
pub use multiindex::{enumerate, Multiindex};
pub use noise_space::{driving_field, multiple_integral, symmetrize, HElement, NoiseSpace, SymmetricTensor, TimeSpaceFn};
/// Matrix types of the stationary solver's public interface.
pub use nalgebra;
