//! Gaussian multiresolution analysis (GMRA) for probability densities.
//!
//! Densities are stored as sparse sums `Σ w φ_{jk}` of dilated and shifted
//! Gaussians `φ_{jk}(x) = 2^{j/2} √(α/π) exp(−α(2^j x − k)²)`. On top of that
//! representation the crate computes densities of products of independent
//! random variables, Gaussian mixture fits of common distributions, moments,
//! expectations and CDFs, plus the filter identities of the basis.
//!
//! The scalar math (special functions, quadrature, the basis itself, filters)
//! is generic over [`Real`]; the product and fitting pipelines work in `f64`.

pub mod error;
pub mod filters;
pub mod gmra_core;
pub mod io;
pub mod mixture;
pub mod product;
pub mod quadrature;
pub mod special_fn;
pub mod stats;

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

pub use error::{GmraError, Result};

/// Floating point type usable by the generic parts of the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Params = gmra_core::GmraParams<f64>;
pub type Expansion = gmra_core::GmraExpansion<f64>;
pub type Projected = gmra_core::ProjectedGaussian<f64>;
pub type Rule = special_fn::QuadratureRule<f64>;
pub type Mixture = mixture::GaussianMixture;
pub type Tilted = product::TiltedExpansion;
pub type FilterSample = filters::FilterSample<f64>;
