use super::potential::TrigPotential;
use crate::dls::{DiscreteLagrangian, Point, SecondDerivatives, Step};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// `L(x, y) = ½ <B(x - y), x - y> - ½ (V(x) + V(y))` on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardMap {
    pub kinetic: DMatrix<f64>,
    pub potential: TrigPotential,
}

impl StandardMap {
    pub fn new(kinetic: DMatrix<f64>, potential: TrigPotential) -> Result<Self> {
        let m = kinetic.nrows();
        if !kinetic.is_square() || (&kinetic - kinetic.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidInput("kinetic matrix must be square and symmetric".into()));
        }
        if potential.terms.iter().any(|t| t.wave.len() != m) {
            return Err(Error::InvalidInput("potential wave vectors must have length m".into()));
        }
        Ok(StandardMap { kinetic, potential })
    }

    /// The classical map `L = ½(x - y)² - ½ K (cos x + cos y)`.
    pub fn classic(k: f64) -> Self {
        StandardMap { kinetic: DMatrix::identity(1, 1), potential: TrigPotential::cosine(1, 0, k) }
    }

    /// Two-dimensional map with `V = K cos x_1`, so `x_2` is cyclic.
    pub fn cyclic_2d(kinetic: DMatrix<f64>, k: f64) -> Self {
        StandardMap { kinetic, potential: TrigPotential::cosine(2, 0, k) }
    }
}

impl DiscreteLagrangian for StandardMap {
    fn dim(&self) -> usize {
        self.kinetic.nrows()
    }

    fn value(&self, _step: Step, x: &Point, y: &Point) -> Result<f64> {
        let d = x - y;
        Ok(0.5 * d.dot(&(&self.kinetic * &d)) - 0.5 * (self.potential.value(x) + self.potential.value(y)))
    }

    fn gradients(&self, _step: Step, x: &Point, y: &Point) -> Result<Option<(Point, Point)>> {
        let bd = &self.kinetic * (x - y);
        Ok(Some((&bd - 0.5 * self.potential.gradient(x), -bd - 0.5 * self.potential.gradient(y))))
    }

    fn second_derivatives(&self, _step: Step, x: &Point, y: &Point) -> Result<Option<SecondDerivatives>> {
        Ok(Some(SecondDerivatives {
            d11: &self.kinetic - 0.5 * self.potential.hessian(x),
            d12: -&self.kinetic,
            d22: &self.kinetic - 0.5 * self.potential.hessian(y),
        }))
    }
}
