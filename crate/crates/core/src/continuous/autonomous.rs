//! Stability criteria for periodic orbits of autonomous systems whose
//! potential is homogeneous of degree `k`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `sign dE/dτ = sign(2k / (k - 2)) · sign E` along the family of scaled
/// orbits of a homogeneous potential of degree `k`.
pub fn energy_period_slope_sign(k: f64, energy_sign: f64) -> Result<f64> {
    if k == 0.0 || k == 2.0 || !k.is_finite() {
        return Err(Error::InvalidDegree(k));
    }
    Ok((2.0 * k / (k - 2.0)).signum() * energy_sign.signum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutonomousVerdict {
    pub degree: f64,
    pub energy_sign: f64,
    pub slope_sign: f64,
    /// Parity of the index of the boundary form, `(-1)^{ind b} = -sign dE/dτ`.
    pub boundary_index_parity: f64,
    /// `σ (-1)^{m + ind} sign(dE/dτ) < 0`: a real multiplier above 1.
    pub unstable: bool,
}

/// Applies the energy-period sign rule for a periodic orbit with Morse
/// index `index` on an `m`-dimensional configuration space.
pub fn homogeneous_verdict(k: f64, energy_sign: f64, sigma: f64, m: usize, index: usize) -> Result<AutonomousVerdict> {
    let slope = energy_period_slope_sign(k, energy_sign)?;
    let parity = if (m + index) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(AutonomousVerdict {
        degree: k,
        energy_sign: energy_sign.signum(),
        slope_sign: slope,
        boundary_index_parity: -slope,
        unstable: sigma * parity * slope < 0.0,
    })
}
