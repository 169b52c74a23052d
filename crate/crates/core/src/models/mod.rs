//! Built-in discrete Lagrangian systems.

pub mod billiard;
pub mod discretized;
pub mod potential;
pub mod standard_map;

pub use billiard::{Billiard, BoundaryPiece, Ellipse, Ellipsoid, Segment};
pub use discretized::DiscretizedCls;
pub use potential::{TrigPotential, TrigTerm};
pub use standard_map::StandardMap;
