//! High-order quadrature rules for volumes, surfaces and lines defined
//! implicitly by one or two level sets.
//!
//! The domain is cut into tiles on which each isocontour is the graph of a
//! height function. Every tile is the image of a nested mapping from a
//! reference hypercube, so tensor Gauss rules can be pushed onto it.

pub mod bernstein;
pub mod decompose;
pub mod error;
pub mod expr;
pub mod gauss;
pub mod levelset;
pub mod mapping;
pub mod quadrature;
pub mod topology;

pub use bernstein::{Sign, SignConfig};
pub use decompose::GraphConfig;
pub use error::{Error, Result};
pub use levelset::LevelSet;
pub use quadrature::{AdaptiveConfig, Problem, QuadratureRule, Target};
pub use topology::{Axis, Body, Point, Side};
