//! Serialized records: orbit files, analysis reports and CSV tables.

use crate::error::CliError;
use hillkit_core::continuous::hill::ContinuousCheck;
use hillkit_core::hill::{HillCheck, StabilityVerdicts};
use hillkit_core::linalg::{Inertia, LogDet};
use hillkit_core::reversible::ReversibleVerdicts;
use hillkit_core::routh::{IndexRelations, OrthogonalityChecks, RhoReduction};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A numeric value together with the tolerance it was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checked {
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Checked {
    pub fn new(value: f64, tolerance: f64) -> Self {
        Checked { value, tolerance, pass: value <= tolerance }
    }
}

/// Flat list entry used for the exit status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn record(name: &str, c: Checked) -> CheckRecord {
    CheckRecord { name: name.to_string(), value: c.value, tolerance: c.tolerance, pass: c.pass }
}

pub fn failures(checks: &[CheckRecord]) -> Result<(), CliError> {
    let failed: Vec<String> =
        checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:e} > {:e}", c.name, c.value, c.tolerance)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Checks(failed))
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversibleRecord {
    pub involution: String,
    pub orbit_type: usize,
    pub shift: usize,
    pub offset: usize,
    pub half: Vec<Vec<f64>>,
    pub half_charts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub schema_version: u32,
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    pub charts: Vec<usize>,
    pub action: f64,
    pub residual_norm: Checked,
    pub iterations: usize,
    /// Gradient norm after each Newton iteration, starting with the guess.
    pub log: Vec<f64>,
    pub reversible: Option<ReversibleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRecord {
    pub m: usize,
    pub multipliers: Vec<[f64; 2]>,
    pub twist_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouthSection {
    pub cyclic: Vec<usize>,
    pub k: usize,
    /// `ok`, or the condition that prevented the reduction.
    pub status: String,
    pub condition_c: Option<bool>,
    pub a_perp_smallest_singular: Option<f64>,
    pub kernel_dim: Option<usize>,
    pub generalized_dim: Option<usize>,
    pub reduced: Option<ReducedRecord>,
    pub relations: Option<IndexRelations>,
    pub factorization_residual: Option<Checked>,
    pub rho_reduction: Vec<RhoReduction>,
    pub rho_reduction_residual: Option<Checked>,
    pub orthogonality: Option<OrthogonalityChecks>,
    pub orthogonality_residual: Option<Checked>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSection {
    pub involution: String,
    pub orbit_type: usize,
    pub shift: usize,
    pub offset: usize,
    pub k: usize,
    pub half: Vec<Vec<f64>>,
    pub half_charts: Vec<usize>,
    pub det_full: LogDet,
    pub det_plus: LogDet,
    pub det_minus: LogDet,
    /// `det H = det H_+ det H_-`; only checked for nondegenerate orbits.
    pub det_residual: Option<Checked>,
    pub restriction_residual: Checked,
    pub cross_term: Checked,
    pub c_asymmetry: Checked,
    pub c_first: Option<Vec<Vec<f64>>>,
    pub c_last: Option<Vec<Vec<f64>>>,
    pub inertia_full: Inertia,
    pub inertia_plus: Inertia,
    pub inertia_minus: Inertia,
    pub verdicts: ReversibleVerdicts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillSection {
    pub grid_size: usize,
    pub max_residual: Checked,
    pub checks: Vec<HillCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub command: String,
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    pub charts: Vec<usize>,
    pub residual_norm: Checked,
    pub finite_difference: bool,
    pub monodromy: Vec<Vec<f64>>,
    pub trace: f64,
    pub multipliers: Vec<[f64; 2]>,
    /// `σ = sign ∏ det B_i`.
    pub twist_sign: f64,
    /// `β = |∏ det B_i|^{-1}`.
    pub beta: f64,
    pub log_beta: f64,
    /// `det(P - I)` from the Hessian side.
    pub characteristic_at_one: [f64; 2],
    pub verdicts: StabilityVerdicts,
    /// Verdicts that fired, in words.
    pub predictions: Vec<String>,
    pub billiard_sign: Option<f64>,
    pub hill: HillSection,
    pub routh: Option<RouthSection>,
    pub splitting: Option<SplitSection>,
    pub checks: Vec<CheckRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRow {
    #[serde(flatten)]
    pub check: ContinuousCheck,
    /// Normalized truncated determinant `det H_ρ^{(N)}`.
    pub det: [f64; 2],
    pub jointly_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousReport {
    pub schema_version: u32,
    pub command: String,
    pub tau: f64,
    pub m: usize,
    pub orientation_sign: f64,
    pub beta: f64,
    pub multipliers: Vec<[f64; 2]>,
    pub ladder: Vec<usize>,
    pub max_residual_by_order: Vec<Checked>,
    pub residual_monotone: bool,
    pub converged: bool,
    pub index: Option<usize>,
    pub nullity: Option<usize>,
    pub rows: Vec<ContinuousRow>,
    pub checks: Vec<CheckRecord>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Shortest round-trip representation, with an exponent for very small or
/// large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// One row per `ρ`: both sides of the identity, and the factorization
/// residual when a symmetry was reduced.
pub fn analysis_csv(report: &AnalysisReport, factorization: Option<&[f64]>) -> Result<String, CliError> {
    let mut w = csv_writer();
    let mut header = vec![
        "rho_re",
        "rho_im",
        "characteristic_re",
        "characteristic_im",
        "hessian_side_re",
        "hessian_side_im",
        "residual",
        "tolerance",
        "jointly_degenerate",
    ];
    if factorization.is_some() {
        header.extend(["factorization_residual", "factorization_tolerance"]);
    }
    w.write_record(&header).map_err(io)?;
    let ftol = report.routh.as_ref().and_then(|r| r.factorization_residual).map(|c| c.tolerance);
    for (i, c) in report.hill.checks.iter().enumerate() {
        let mut row = vec![
            num(c.rho[0]),
            num(c.rho[1]),
            num(c.characteristic[0]),
            num(c.characteristic[1]),
            num(c.hessian_side[0]),
            num(c.hessian_side[1]),
            num(c.residual),
            num(report.hill.max_residual.tolerance),
            c.jointly_degenerate.to_string(),
        ];
        if let Some(f) = factorization {
            row.push(num(f[i]));
            row.push(ftol.map(num).unwrap_or_default());
        }
        w.write_record(&row).map_err(io)?;
    }
    finish(w)
}

/// One row per `(N, ρ)`.
pub fn continuous_csv(report: &ContinuousReport, tolerance: f64) -> Result<String, CliError> {
    let mut w = csv_writer();
    w.write_record([
        "order",
        "rho_re",
        "rho_im",
        "det_re",
        "det_im",
        "characteristic_re",
        "characteristic_im",
        "truncated_side_re",
        "truncated_side_im",
        "extrapolated_side_re",
        "extrapolated_side_im",
        "truncated_residual",
        "residual",
        "tolerance",
        "jointly_degenerate",
    ])
    .map_err(io)?;
    for r in &report.rows {
        let c = &r.check;
        w.write_record([
            c.order.to_string(),
            num(c.rho[0]),
            num(c.rho[1]),
            num(r.det[0]),
            num(r.det[1]),
            num(c.characteristic[0]),
            num(c.characteristic[1]),
            num(c.truncated_side[0]),
            num(c.truncated_side[1]),
            num(c.extrapolated_side[0]),
            num(c.extrapolated_side[1]),
            num(c.truncated_residual),
            num(c.residual),
            num(tolerance),
            r.jointly_degenerate.to_string(),
        ])
        .map_err(io)?;
    }
    finish(w)
}
