//! Landau damping laboratory for the continuum Kuramoto model.

pub mod dispersion;
pub mod error;
pub mod experiment;
pub mod finiten;
pub mod freqdist;
pub mod quad;
pub mod spectral;
pub mod volterra;

pub use error::{Error, Result};
pub use freqdist::{build_grid, Family, FrequencyDistribution, QuadratureGrid};
pub use num_complex::Complex64;
