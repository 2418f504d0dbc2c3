//! Stochastic method of moving asymptotes (sMMA) for chance-constrained,
//! density-based topology optimization.
//!
//! The crate is generic over the floating point type through [`Real`]. The
//! aliases at the bottom of this file fix the scalar to `f64`, which is what
//! the benchmarks and the command line tool use.
//!
//! Module map:
//! - [`mesh_fem`]: structured Q4 plane-stress meshes, skyline Cholesky, compliance.
//! - [`design_field`]: density filter, SIMP interpolation, volumes, chain rule.
//! - [`smoothing`]: smoothed and steepened indicator functions.
//! - [`csg_weights`]: sample store and nearest-neighbor integration weights.
//! - [`mma_core`]: moving asymptotes, separable approximations, dual solver.
//! - [`benchmarks`]: the wheel and plate problems.
//! - [`smma_driver`]: sMMA, limited-memory sMMA and the fixed-quadrature MMA loop.
//! - [`verify`]: dense-quadrature evaluation of designs.
//! - [`io`]: design files, iteration log CSV and PGM rendering.

pub mod benchmarks;
pub mod csg_weights;
pub mod design_field;
pub mod error;
pub mod io;
pub mod mesh_fem;
pub mod mma_core;
pub mod scalar;
pub mod smma_driver;
pub mod smoothing;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type StructuredMesh = mesh_fem::StructuredMesh<f64>;
pub type FemModel = mesh_fem::FemModel<f64>;
pub type FactorizedSystem = mesh_fem::FactorizedSystem<f64>;
pub type FilterMatrix = design_field::FilterMatrix<f64>;
pub type SimpParams = design_field::SimpParams<f64>;
pub type SmoothingParams = smoothing::SmoothingParams<f64>;
pub type SampleStore = csg_weights::SampleStore<f64>;
pub type SampleRecord = csg_weights::SampleRecord<f64>;
pub type JointMetric = csg_weights::JointMetric<f64>;
pub type WeightSet = csg_weights::WeightSet<f64>;
pub type MmaState = mma_core::MmaState<f64>;
pub type SeparableApprox = mma_core::SeparableApprox<f64>;
pub type Subproblem = mma_core::Subproblem<f64>;
pub type ProblemDef = benchmarks::ProblemDef<f64>;
pub type RunConfig = smma_driver::RunConfig<f64>;
pub type IterationLog = smma_driver::IterationLog<f64>;
