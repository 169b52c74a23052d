//! Hill-type determinant formulas, Morse indices and stability verdicts for
//! periodic orbits of discrete Lagrangian systems and periodic Jacobi
//! operators.

pub mod chain;
pub mod continuous;
pub mod dls;
pub mod error;
pub mod hill;
pub mod linalg;
pub mod models;
pub mod reversible;
pub mod routh;

pub use chain::Chain;
pub use dls::{DiscreteLagrangian, PeriodicOrbit, Point, Step};
pub use error::{Error, Result};
