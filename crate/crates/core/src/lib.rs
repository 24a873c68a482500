//! Finite-volume approximations of the bulk diffusion matrix of
//! Poisson-reversible interacting particle systems.

pub mod cell_problems;
pub mod configuration;
pub mod dynamics;
pub mod error;
pub mod function_space;
pub mod geometry;
pub mod green_kubo;
pub mod homogenized;
pub mod linalg;
pub mod matrix;
pub mod model;
pub mod par;
pub mod report;
pub mod rng;
pub mod stats;

pub use configuration::{palm_sample, sample_poisson, translate_restrict, Configuration, Region};
pub use error::{Error, Result};
pub use geometry::{Domain, Geometry, Point};
pub use matrix::SymMatrix;
pub use model::{CoefficientModel, ModelKind};
pub use par::Exec;
pub use rng::RandomStream;
pub use stats::EstimatorResult;
