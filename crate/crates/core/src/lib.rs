//! Spectral heat kernels, fractional Laplacians and fractional Sobolev
//! inequalities on the circle, flat tori and the round 2-sphere.

pub mod constants;
pub mod error;
pub mod fractional_op;
pub mod heat_kernel;
pub mod manifold;
pub mod sobolev;
pub mod special;

pub use error::{Error, Result};
pub use fractional_op::{FracParams, KernelEvaluator, SubordinationQuad};
pub use heat_kernel::HeatKernelEvaluator;
pub use manifold::{Layout, ManifoldSpec, Point, QuadratureRule, SpectralBasis, SpectralFunction, SpectralManifold};
pub use sobolev::{PairQuadrature, WspParams};

/// Library version reported by the command-line runner.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
