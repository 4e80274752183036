//! Multiplicative cascade metrics on `[0,1]` and numerical checks of the
//! dimension relation `ζ₀ = φ(ζ)`, `φ(s) = s − log₂ E[W^s]`.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the scalar. The [`harness`] module drives
//! experiments and the command line tool, and works in `f64`.

pub mod cascade;
pub mod dimension;
pub mod fractal_sets;
pub mod frostman;
pub mod harness;
pub mod kpz;
pub mod rng;
pub mod roots;
pub mod scalar;
pub mod stats;
pub mod weights;

pub use cascade::{CascadeError, CellMass, DyadicIndex, DyadicPoint, TailMode};
pub use fractal_sets::DigitRestrictionSet;
pub use rng::RandomStream;
pub use scalar::Real;
pub use weights::{ValidationReport, WeightError, WeightFamily};

pub type WeightModel64 = weights::WeightModel<f64>;
pub type WeightModel32 = weights::WeightModel<f32>;
pub type Cascade64 = cascade::CascadeRealization<f64>;
pub type Cascade32 = cascade::CascadeRealization<f32>;
pub type DimensionEstimate64 = dimension::DimensionEstimate<f64>;
pub type DimensionEstimate32 = dimension::DimensionEstimate<f32>;
pub type CellMeasure64 = frostman::CellMeasure<f64>;
pub type CellMeasure32 = frostman::CellMeasure<f32>;
pub type KpzSolution64 = kpz::KpzSolution<f64>;
pub type KpzSolution32 = kpz::KpzSolution<f32>;
