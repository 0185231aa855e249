//! Numerical machinery for determinantal ensembles of squared singular values of
//! products of complex Ginibre matrices (and the variants with inverse factors or
//! a truncated-unitary factor): finite-n correlation kernels via double-contour
//! quadrature, limiting densities and scaling constants, and desk-scale numerical
//! demonstrations of sine-kernel and Airy-kernel universality.

pub mod contour;
pub mod kernel;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod phase;
pub mod quad;
pub mod special;

pub use num_complex::Complex64;
