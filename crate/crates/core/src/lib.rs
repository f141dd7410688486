//! Numerical toolkit for lattice gauge fields on the unit cube: curvature,
//! parallel transport, Morrey norms, averaged gauge construction, truncation
//! and Coulomb gauge fixing.

pub mod config;
pub mod coulomb;
pub mod error;
pub mod field;
pub mod gaugebuild;
pub mod generate;
pub mod geometry;
pub mod io;
pub mod lie;
pub mod mat;
pub mod morrey;
pub mod pipeline;
pub mod quad;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use lie::Group;
pub use mat::Mat;
