//! Numerical almost c-projective geometry: jets, curvature, tractors, BGG
//! splitting operators, determinants and the curved orbit stratification.

pub mod bgg;
pub mod chart;
pub mod determinants;
pub mod error;
pub mod field;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod strata;
pub mod tensor;
pub mod tractor;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
