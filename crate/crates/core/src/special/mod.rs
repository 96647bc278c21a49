//! Scalar special functions: normal distribution and modified Bessel functions.

mod bessel;
mod normal;

pub use bessel::{bessel_k, bessel_k_half_integer};
pub use normal::{inv_normal_cdf, normal_cdf, normal_pdf};
