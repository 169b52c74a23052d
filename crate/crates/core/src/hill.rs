//! The discrete Hill formula: monodromy, twisted Hessians, Morse indices and
//! the stability verdicts derived from them.

use crate::chain::Chain;
use crate::dls::{orbit_chain, DiscreteLagrangian, PeriodicOrbit};
use crate::error::{Error, Result};
use crate::linalg::{average_clusters, eigenvalues, hermitian_inertia, log_det, rounded, shifted_log_det, ExtMatrix, Inertia, LogDet, C64, NULL_TOL};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative distance below which multipliers are merged into their mean.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Relative size below which both sides of the identity count as zero.
pub const JOINT_DEGENERACY_TOL: f64 = 1e-10;

/// Multipliers of the monodromy, defective clusters replaced by their mean.
pub fn multipliers(chain: &Chain) -> Result<Vec<C64>> {
    let p = chain.monodromy()?;
    Ok(average_clusters(&eigenvalues(&p), CLUSTER_TOL))
}

/// Both sides of `det(P - ρI) = det H_ρ / det B_ρ` at one `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillCheck {
    pub rho: [f64; 2],
    /// `det(P - ρI)`.
    pub characteristic: [f64; 2],
    /// `det H_ρ / det B_ρ`.
    pub hessian_side: [f64; 2],
    /// `|lhs - rhs| / (1 + |lhs|)`.
    pub residual: f64,
    pub jointly_degenerate: bool,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// `p` is the monodromy from [`Chain::monodromy_extended`].
pub fn hill_check(chain: &Chain, p: &ExtMatrix, rho: C64) -> HillCheck {
    let lhs = shifted_log_det(p, rho);
    let rhs = chain.det_rho_hessian(rho).div(&chain.det_b_rho(rho));
    let (l, r) = (lhs.value(), rhs.value());
    let residual = (l - r).norm() / (1.0 + l.norm());
    let scale: f64 = eigenvalues(&rounded(p)).iter().map(|z| z.norm() + rho.norm()).product();
    let jointly = l.norm() < JOINT_DEGENERACY_TOL * scale && r.norm() < JOINT_DEGENERACY_TOL * scale;
    HillCheck { rho: pair(rho), characteristic: pair(l), hessian_side: pair(r), residual, jointly_degenerate: jointly }
}

/// `n` equally spaced points on the unit circle plus `±1/2, ±1, ±2`.
pub fn default_rho_grid(n: usize) -> Vec<C64> {
    let mut g: Vec<C64> = (0..n).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).collect();
    for r in [0.5, -0.5, 2.0, -2.0, 1.0, -1.0] {
        g.push(C64::new(r, 0.0));
    }
    g
}

pub fn hill_sweep(chain: &Chain, grid: &[C64]) -> Result<Vec<HillCheck>> {
    let p = chain.monodromy_extended()?;
    Ok(grid.par_iter().map(|&rho| hill_check(chain, &p, rho)).collect())
}

/// Morse index and nullity of the twisted Hessian at `ρ` on the unit circle.
pub fn rho_inertia(chain: &Chain, rho: C64) -> Inertia {
    hermitian_inertia(&chain.rho_hessian(rho), NULL_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Predicted,
    NotPredicted,
    /// A hypothesis of the criterion failed (typically a degenerate Hessian).
    Abstained,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b { Verdict::Predicted } else { Verdict::NotPredicted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdicts {
    pub m: usize,
    pub n: usize,
    /// `sign ∏ det B_i`.
    pub twist_sign: f64,
    pub index: usize,
    pub nullity: usize,
    pub index_at_minus_one: usize,
    pub nullity_at_minus_one: usize,
    pub index_doubled: usize,
    pub nullity_doubled: usize,
    /// Sign rule `σ (-1)^{m + ind} < 0`: a real multiplier above 1.
    pub multiplier_above_one: Verdict,
    /// `det(P - I) < 0`, evaluated through the Hessian side.
    pub negative_characteristic_at_one: Verdict,
    /// Sign rule at `ρ = -1`: a real multiplier below -1.
    pub multiplier_below_minus_one: Verdict,
    /// Sign rule on the index jump under doubling.
    pub doubling_instability: Verdict,
    /// One degree of freedom: hyperbolic iff the doubled index is even.
    pub hyperbolic_by_doubled_parity: Option<bool>,
    /// Any of the instability verdicts fired.
    pub exponentially_unstable: bool,
}

/// Evaluates all index-based criteria on a chain.
pub fn stability_verdicts(chain: &Chain) -> StabilityVerdicts {
    let (m, n) = (chain.m(), chain.n());
    let sigma = chain.twist_sign();
    let one = rho_inertia(chain, C64::new(1.0, 0.0));
    let minus = rho_inertia(chain, C64::new(-1.0, 0.0));
    let dbl = rho_inertia(&chain.doubled(), C64::new(1.0, 0.0));
    let parity = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };

    let above = if one.zero > 0 {
        Verdict::Abstained
    } else {
        Verdict::from_bool(sigma * parity(m + one.negative) < 0.0)
    };
    let det_h = log_det(&chain.rho_hessian(C64::new(1.0, 0.0)));
    let char_at_one = if one.zero > 0 {
        Verdict::Abstained
    } else {
        let s = det_h.div(&chain.det_b_rho(C64::new(1.0, 0.0))).sign();
        Verdict::from_bool(s < 0.0)
    };
    let below = if minus.zero > 0 {
        Verdict::Abstained
    } else {
        Verdict::from_bool(sigma * parity(minus.negative) < 0.0)
    };
    let doubling = if one.zero > 0 || dbl.zero > 0 {
        Verdict::Abstained
    } else {
        Verdict::from_bool(sigma * parity(dbl.negative + one.negative) < 0.0)
    };
    let hyperbolic = (m == 1 && dbl.zero == 0).then(|| dbl.negative % 2 == 0);
    let unstable = [above, char_at_one, below, doubling].iter().any(|v| *v == Verdict::Predicted);
    StabilityVerdicts {
        m,
        n,
        twist_sign: sigma,
        index: one.negative,
        nullity: one.zero,
        index_at_minus_one: minus.negative,
        nullity_at_minus_one: minus.zero,
        index_doubled: dbl.negative,
        nullity_doubled: dbl.zero,
        multiplier_above_one: above,
        negative_characteristic_at_one: char_at_one,
        multiplier_below_minus_one: below,
        doubling_instability: doubling,
        hyperbolic_by_doubled_parity: hyperbolic,
        exponentially_unstable: unstable,
    }
}

fn has_real_multiplier(mults: &[C64], pred: impl Fn(f64) -> bool) -> bool {
    mults.iter().any(|z| z.im.abs() <= 1e-8 * z.norm().max(1.0) && pred(z.re))
}

/// Cross-checks verdicts against the computed multipliers.
pub fn cross_check(v: &StabilityVerdicts, mults: &[C64], trace: f64) -> Result<()> {
    let margin = 1e-8;
    if (v.multiplier_above_one == Verdict::Predicted || v.negative_characteristic_at_one == Verdict::Predicted)
        && !has_real_multiplier(mults, |r| r > 1.0 - margin)
    {
        return Err(Error::TheoremViolation("predicted real multiplier above 1 is missing".into()));
    }
    if (v.multiplier_below_minus_one == Verdict::Predicted || v.doubling_instability == Verdict::Predicted)
        && !has_real_multiplier(mults, |r| r < -1.0 + margin)
    {
        return Err(Error::TheoremViolation("predicted real multiplier below -1 is missing".into()));
    }
    if let Some(h) = v.hyperbolic_by_doubled_parity {
        if (trace.abs() - 2.0).abs() > 1e-9 && h != (trace.abs() > 2.0) {
            return Err(Error::TheoremViolation("doubled-index parity disagrees with the trace".into()));
        }
    }
    Ok(())
}

/// Full discrete analysis of one periodic orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillReport {
    pub n: usize,
    pub m: usize,
    pub chain: Chain,
    pub monodromy: DMatrix<f64>,
    pub multipliers: Vec<[f64; 2]>,
    pub twist_sign: f64,
    /// `β = |∏ det B_i|^{-1}` as `ln β`.
    pub log_beta: f64,
    pub checks: Vec<HillCheck>,
    pub max_residual: f64,
    pub verdicts: StabilityVerdicts,
    pub finite_difference: bool,
    /// Sign law `σ (-1)^{m + n + ind}` for billiards; `None` otherwise.
    pub billiard_sign: Option<f64>,
}

pub fn analyze_chain(chain: &Chain, grid: &[C64], finite_difference: bool, billiard: bool) -> Result<HillReport> {
    let p = chain.monodromy()?;
    let mults = multipliers(chain)?;
    let checks = hill_sweep(chain, grid)?;
    let verdicts = stability_verdicts(chain);
    cross_check(&verdicts, &mults, p.trace())?;
    let max_residual = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let prod: LogDet = chain.twist_product();
    let (m, n) = (chain.m(), chain.n());
    let billiard_sign = billiard.then(|| if (m + n + verdicts.index) % 2 == 0 { 1.0 } else { -1.0 });
    Ok(HillReport {
        n,
        m,
        chain: chain.clone(),
        monodromy: p,
        multipliers: mults.iter().map(|z| pair(*z)).collect(),
        twist_sign: prod.sign(),
        log_beta: -prod.log_abs,
        checks,
        max_residual,
        verdicts,
        finite_difference,
        billiard_sign,
    })
}

pub fn analyze_orbit(l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit, grid: &[C64]) -> Result<HillReport> {
    let (chain, fd) = orbit_chain(l, orbit)?;
    for (i, b) in chain.b.iter().enumerate() {
        crate::dls::check_twist(b, i)?;
    }
    analyze_chain(&chain, grid, fd, l.is_billiard())
}
