//! Meshfree mimetic divergence operators and a virtual finite-volume scheme
//! on scattered point clouds in two dimensions.

pub mod cloud;
pub mod error;
pub mod fvm;
pub mod geometry;
pub mod gmls;
pub mod linalg;
pub mod metric;
pub mod mmd;

pub use error::{MmdError, Result};
pub use geometry::Point;
