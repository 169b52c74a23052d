//! Commuting symmetry fields of a discrete Lagrangian and the reduction of
//! cyclic coordinates at a fixed level of the Noether integral.

use crate::dls::{self, DiscreteLagrangian, Point, SecondDerivatives, Step};
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type FieldFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
pub type FlowFn = Arc<dyn Fn(&Point, f64) -> Point + Send + Sync>;

/// `k` commuting vector fields on an `m`-dimensional chart.
#[derive(Clone)]
pub struct SymmetrySpec {
    pub dim: usize,
    fields: Vec<FieldFn>,
    flows: Vec<Option<FlowFn>>,
    /// When set, field `α` is the coordinate field of chart coordinate
    /// `cyclic[α]`.
    pub cyclic: Option<Vec<usize>>,
}

impl std::fmt::Debug for SymmetrySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetrySpec").field("dim", &self.dim).field("k", &self.k()).field("cyclic", &self.cyclic).finish()
    }
}

impl SymmetrySpec {
    pub fn empty(dim: usize) -> Self {
        SymmetrySpec { dim, fields: Vec::new(), flows: Vec::new(), cyclic: Some(Vec::new()) }
    }

    /// Translations of the listed chart coordinates.
    pub fn cyclic(dim: usize, coords: &[usize]) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &c in coords {
            if c >= dim || seen[c] {
                return Err(Error::InvalidInput(format!("bad cyclic coordinate {c}")));
            }
            seen[c] = true;
        }
        let fields = coords
            .iter()
            .map(|&c| -> FieldFn {
                Arc::new(move |_x: &Point| {
                    let mut e = DVector::zeros(dim);
                    e[c] = 1.0;
                    e
                })
            })
            .collect();
        let flows = coords
            .iter()
            .map(|&c| -> Option<FlowFn> {
                Some(Arc::new(move |x: &Point, s: f64| {
                    let mut y = x.clone();
                    y[c] += s;
                    y
                }))
            })
            .collect();
        Ok(SymmetrySpec { dim, fields, flows, cyclic: Some(coords.to_vec()) })
    }

    /// General fields; flows without a closed form are integrated numerically.
    pub fn new(dim: usize, fields: Vec<FieldFn>, flows: Vec<Option<FlowFn>>) -> Result<Self> {
        if fields.len() != flows.len() || fields.len() > dim {
            return Err(Error::InvalidInput("need one flow slot per field and at most m fields".into()));
        }
        Ok(SymmetrySpec { dim, fields, flows, cyclic: None })
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, alpha: usize, x: &Point) -> DVector<f64> {
        (self.fields[alpha])(x)
    }

    /// Fields at `x` as the columns of an `m × k` matrix.
    pub fn frame(&self, x: &Point) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.dim, self.k());
        for a in 0..self.k() {
            f.set_column(a, &self.field(a, x));
        }
        f
    }

    /// `ψ_s` of field `alpha`.
    pub fn flow(&self, alpha: usize, x: &Point, s: f64) -> Point {
        if let Some(f) = &self.flows[alpha] {
            return f(x, s);
        }
        let steps = ((s.abs() / 1e-2).ceil() as usize).max(1);
        let h = s / steps as f64;
        let mut y = x.clone();
        for _ in 0..steps {
            let k1 = self.field(alpha, &y);
            let k2 = self.field(alpha, &(&y + &k1 * (h / 2.0)));
            let k3 = self.field(alpha, &(&y + &k2 * (h / 2.0)));
            let k4 = self.field(alpha, &(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    fn jacobian(&self, alpha: usize, x: &Point) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim, self.dim);
        for c in 0..self.dim {
            let h = dls::fd_step(x[c]);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            j.set_column(c, &((self.field(alpha, &xp) - self.field(alpha, &xm)) / (2.0 * h)));
        }
        j
    }

    /// Largest `|[w^α, w^β]|` at `x`, by finite differences.
    pub fn commutator_defect(&self, x: &Point) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.k() {
            for b in a + 1..self.k() {
                let c = self.jacobian(b, x) * self.field(a, x) - self.jacobian(a, x) * self.field(b, x);
                worst = worst.max(c.amax());
            }
        }
        worst
    }

    /// Checks commutation and invariance of `l` at sampled pairs.
    pub fn check(&self, l: &dyn DiscreteLagrangian, samples: &[(Step, Point, Point)]) -> Result<()> {
        for (step, x, y) in samples {
            let c = self.commutator_defect(x);
            if c > 1e-8 * (1.0 + self.frame(x).amax()) {
                return Err(Error::SymmetryViolation(format!("fields do not commute (defect {c:.3e})")));
            }
            symmetry_defect(l, self, *step, x, y)?;
        }
        Ok(())
    }
}

/// `D_{w̃} L(x, y) = <∂₁L, w(x)> + <∂₂L, w(y)>` per field; errors when it
/// is not zero within tolerance.
pub fn symmetry_defect(l: &dyn DiscreteLagrangian, spec: &SymmetrySpec, step: Step, x: &Point, y: &Point) -> Result<DVector<f64>> {
    let (gx, gy, fd) = dls::gradients(l, step, x, y)?;
    let (wx, wy) = (spec.frame(x), spec.frame(y));
    let d = wx.transpose() * &gx + wy.transpose() * &gy;
    let scale = 1.0 + gx.norm() * wx.norm() + gy.norm() * wy.norm();
    let tol = if fd { 1e-6 } else { 1e-9 };
    if d.amax() > tol * scale {
        return Err(Error::SymmetryViolation(format!("Lagrangian not invariant (defect {:.3e})", d.amax())));
    }
    Ok(d)
}

/// Noether integral `J^α(x, y) = <∂₁L(x, y), w^α(x)>`.
pub fn noether_integral(l: &dyn DiscreteLagrangian, spec: &SymmetrySpec, step: Step, x: &Point, y: &Point) -> Result<DVector<f64>> {
    symmetry_defect(l, spec, step, x, y)?;
    let (gx, _, _) = dls::gradients(l, step, x, y)?;
    Ok(spec.frame(x).transpose() * gx)
}

/// Reduced Lagrangian of a system with cyclic coordinates `z` at the level
/// `J = c`: `L̃(y, y') = L((y, 0), (y', u)) + <c, u>` with `u` the critical
/// increment of the cyclic coordinates.
pub struct RouthReduced {
    base: Arc<dyn DiscreteLagrangian>,
    cyclic: Vec<usize>,
    kept: Vec<usize>,
    pub level: DVector<f64>,
    /// Starting increment for the inner Newton solve.
    pub guess: DVector<f64>,
}

impl RouthReduced {
    pub fn new(base: Arc<dyn DiscreteLagrangian>, spec: &SymmetrySpec, level: DVector<f64>) -> Result<Self> {
        let cyclic = spec
            .cyclic
            .clone()
            .ok_or_else(|| Error::InvalidInput("nonlinear reduction needs cyclic coordinates".into()))?;
        let m = base.dim();
        if spec.dim != m || level.len() != cyclic.len() {
            return Err(Error::InvalidInput("symmetry and level do not match the Lagrangian".into()));
        }
        let kept = (0..m).filter(|c| !cyclic.contains(c)).collect();
        let k = cyclic.len();
        Ok(RouthReduced { base, cyclic, kept, level, guess: DVector::zeros(k) })
    }

    pub fn with_guess(mut self, guess: DVector<f64>) -> Self {
        self.guess = guess;
        self
    }

    /// Point with reduced coordinates `y` and cyclic coordinates `z`.
    pub fn embed(&self, y: &Point, z: &DVector<f64>) -> Point {
        let mut x = DVector::zeros(self.base.dim());
        for (i, &c) in self.kept.iter().enumerate() {
            x[c] = y[i];
        }
        for (i, &c) in self.cyclic.iter().enumerate() {
            x[c] = z[i];
        }
        x
    }

    fn pick(&self, v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
    }

    fn block(&self, m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
    }

    /// Critical increment `u` solving `∂_u L((y,0),(y',u)) = -c`.
    pub fn increment(&self, step: Step, y: &Point, y_next: &Point) -> Result<DVector<f64>> {
        let k = self.cyclic.len();
        if k == 0 {
            return Ok(DVector::zeros(0));
        }
        let x = self.embed(y, &DVector::zeros(k));
        let mut u = self.guess.clone();
        for _ in 0..60 {
            let xn = self.embed(y_next, &u);
            let (_, gy, _) = dls::gradients(self.base.as_ref(), step, &x, &xn)?;
            let f = self.pick(&gy, &self.cyclic) + &self.level;
            let (sd, _) = dls::second_derivatives(self.base.as_ref(), step, &x, &xn)?;
            let g = self.block(&sd.d22, &self.cyclic, &self.cyclic);
            let sv = singular_values(&g);
            if sv.last().copied().unwrap_or(1.0) <= 1e-12 * sv.first().copied().unwrap_or(1.0).max(1e-300) {
                return Err(Error::DegenerateG);
            }
            let du = g.lu().solve(&f).ok_or(Error::DegenerateG)?;
            u -= &du;
            if du.amax() <= 1e-14 * (1.0 + u.amax()) || f.amax() <= 1e-15 {
                return Ok(u);
            }
        }
        Err(Error::NoCriticalPoint)
    }
}

impl DiscreteLagrangian for RouthReduced {
    fn dim(&self) -> usize {
        self.kept.len()
    }

    fn value(&self, step: Step, x: &Point, y: &Point) -> Result<f64> {
        let u = self.increment(step, x, y)?;
        let v = self.base.value(step, &self.embed(x, &DVector::zeros(u.len())), &self.embed(y, &u))?;
        Ok(v + self.level.dot(&u))
    }

    fn gradients(&self, step: Step, x: &Point, y: &Point) -> Result<Option<(Point, Point)>> {
        let u = self.increment(step, x, y)?;
        let (gx, gy, _) = dls::gradients(self.base.as_ref(), step, &self.embed(x, &DVector::zeros(u.len())), &self.embed(y, &u))?;
        Ok(Some((self.pick(&gx, &self.kept), self.pick(&gy, &self.kept))))
    }

    fn second_derivatives(&self, step: Step, x: &Point, y: &Point) -> Result<Option<SecondDerivatives>> {
        let u = self.increment(step, x, y)?;
        let (sd, _) = dls::second_derivatives(self.base.as_ref(), step, &self.embed(x, &DVector::zeros(u.len())), &self.embed(y, &u))?;
        let (r, c) = (&self.kept, &self.cyclic);
        let g = self.block(&sd.d22, c, c);
        let g_inv = g.try_inverse().ok_or(Error::DegenerateG)?;
        // Eliminate u: Schur complement of the u-block in the Hessian of
        // (y, y', u) ↦ L((y,0),(y',u)).
        let n1 = self.block(&sd.d12, r, c);
        let n2 = self.block(&sd.d22, r, c);
        Ok(Some(SecondDerivatives {
            d11: self.block(&sd.d11, r, r) - &n1 * &g_inv * n1.transpose(),
            d12: self.block(&sd.d12, r, r) - &n1 * &g_inv * n2.transpose(),
            d22: self.block(&sd.d22, r, r) - &n2 * &g_inv * n2.transpose(),
        }))
    }
}
