//! Continuous periodic Jacobi systems and their Hill determinants.

pub mod autonomous;
pub mod hill;
pub mod ode;
pub mod system;

pub use hill::{classic_hill_matrix, continuous_report, rho_index_continuous, ContinuousHillReport, FourierData, MonodromyData};
pub use system::{exponent, ContinuousSystem, MatrixFunction};
