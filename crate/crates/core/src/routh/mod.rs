//! Symmetries, Noether integrals and Routh reduction, nonlinear and linear.

pub mod linear;
pub mod symmetry;

pub use linear::{
    factorization_residuals, g_rho_determinant, generalized_unit_eigendata, index_relation_report, linear_routh, orthogonality_checks,
    periodic_solutions, rho_reduction_check, IndexRelations, LinearRouth, OrthogonalityChecks, RhoReduction, UnitEigendata,
};
pub use symmetry::{noether_integral, symmetry_defect, RouthReduced, SymmetrySpec};
