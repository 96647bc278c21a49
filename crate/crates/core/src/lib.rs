//! Multilevel quasi-Monte Carlo estimation of linear functionals of lognormal
//! diffusion problems.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmc_points`]: rank-1 lattice points, random shifts, Gaussian mapping;
//! * [`qmc_construct`]: weight schedules, CBC construction, totient and Fubini utilities;
//! * [`random_field`]: Matérn covariance, Nyström KL basis, field evaluation;
//! * [`fem1d`], [`fem2d`]: piecewise linear finite element solvers and functionals;
//! * [`estimators`]: MC / QMC / MLMC / MLQMC drivers, bias calibration, cost models;
//! * [`experiment`]: configuration, tolerance sweeps and CSV output.
//!
//! The finite element solvers and lattice machinery are generic over the
//! floating point type through [`Real`]; the aliases below fix it to `f64`,
//! which is what the estimator pipeline uses.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fem1d;
pub mod fem2d;
pub mod qmc_construct;
pub mod qmc_points;
pub mod quadrature;
pub mod random_field;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

/// Unit-cube lattice point in double precision.
pub type UnitPoint = qmc_points::UnitPoint<f64>;
/// Gaussian-space point in double precision.
pub type GaussPoint = qmc_points::GaussPoint<f64>;
/// One-dimensional finite element solution in double precision.
pub type FeSolution1D = fem1d::FeSolution1D<f64>;
/// Two-dimensional finite element solution in double precision.
pub type FeSolution2D = fem2d::FeSolution2D<f64>;
/// Assembled two-dimensional system in double precision.
pub type SparseSystem = fem2d::SparseSystem<f64>;
/// Compressed sparse row matrix in double precision.
pub type CsrMatrix = fem2d::CsrMatrix<f64>;
