//! Anisotropic fractional Laplacians, their Pucci envelopes, and numerical
//! checks of the regularity theory built on them.

pub mod abp;
pub mod barriers;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod operator;
pub mod quadrature;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::Anisotropy;
