//! Spectral geometry of prequantized torus fibrations.
//!
//! The crate discretizes the Bochner and ∂̄-Laplacians of a prequantum line
//! bundle over `T^{2n}` equipped with a family of compatible complex
//! structures `A(s) = s·A⁰`, and compares the low spectrum with the Gaussian
//! limit model as `s → 0`.

pub mod error;
pub mod report;
pub mod grid;
pub mod model;
pub mod bundle;
pub mod sparse;
pub mod lattice;
pub mod eigen;
pub mod limit;
pub mod analysis;
pub mod curvature;
pub mod suite;

pub use error::{Error, Result};
pub use grid::Grid;
pub use model::{ComplexStructureFamily, MetricField, Preset, TorusModel};
pub use bundle::{bs_points, fiber_holonomy, BSPointSet, PrequantumBundle};
