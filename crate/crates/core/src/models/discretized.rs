//! Exact discretization of a continuous Jacobi system: the step law is the
//! action of the solution joining `x` at `t_i` to `y` at `t_{i+1}`.

use crate::continuous::{ode, ContinuousSystem};
use crate::dls::{DiscreteLagrangian, Point, Step};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Nodes and weights of 5-point Gauss–Legendre quadrature on `[0, 1]`.
const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668, 0.118_463_442_528_095),
    (0.230_765_344_947_158, 0.239_314_335_249_683),
    (0.5, 0.284_444_444_444_444),
    (0.769_234_655_052_842, 0.239_314_335_249_683),
    (0.953_089_922_969_332, 0.118_463_442_528_095),
];
const SUBINTERVALS: usize = 4;

#[derive(Debug)]
struct StepFlow {
    /// Fundamental matrix over the whole step.
    phi: DMatrix<f64>,
    /// `(time, weight, fundamental matrix)` at the quadrature nodes.
    nodes: Vec<(f64, f64, DMatrix<f64>)>,
}

/// Per-step Lagrangians of a continuous system on `n` equal time steps.
#[derive(Debug)]
pub struct DiscretizedCls {
    pub system: ContinuousSystem,
    pub steps: usize,
    pub tol: f64,
    cache: Mutex<HashMap<usize, Arc<StepFlow>>>,
}

impl DiscretizedCls {
    pub fn new(system: ContinuousSystem, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidInput("need at least one step".into()));
        }
        if (&system.gluing - DMatrix::identity(system.m, system.m)).amax() != 0.0 {
            return Err(Error::InvalidInput("discretization needs a trivial bundle".into()));
        }
        Ok(DiscretizedCls { system, steps, tol: 1e-10, cache: Mutex::new(HashMap::new()) })
    }

    pub fn dt(&self) -> f64 {
        self.system.tau / self.steps as f64
    }

    fn flow(&self, index: usize) -> Result<Arc<StepFlow>> {
        let i = index % self.steps;
        if let Some(f) = self.cache.lock().unwrap().get(&i) {
            return Ok(f.clone());
        }
        let (t0, h) = (i as f64 * self.dt(), self.dt());
        let rhs = |t: f64| self.system.first_order(t);
        let d = 2 * self.system.m;
        let mut times = Vec::new();
        let mut weights = Vec::new();
        for s in 0..SUBINTERVALS {
            let a = t0 + h * s as f64 / SUBINTERVALS as f64;
            for (x, w) in GL5 {
                times.push(a + h * x / SUBINTERVALS as f64);
                weights.push(h * w / SUBINTERVALS as f64);
            }
        }
        times.push(t0 + h);
        let mut mats = ode::integrate_dense(&rhs, t0, &times, &DMatrix::identity(d, d), self.tol)?;
        let phi = mats.pop().unwrap();
        times.pop();
        let nodes = times.into_iter().zip(weights).zip(mats).map(|((t, w), m)| (t, w, m)).collect();
        let f = Arc::new(StepFlow { phi, nodes });
        self.cache.lock().unwrap().insert(i, f.clone());
        Ok(f)
    }

    /// Initial and final momenta `Dξ` of the solution joining `x` to `y`.
    fn shoot(&self, index: usize, x: &Point, y: &Point) -> Result<(Point, Point, Arc<StepFlow>)> {
        let m = self.system.m;
        let f = self.flow(index)?;
        let p11 = f.phi.view((0, 0), (m, m));
        let p12 = f.phi.view((0, m), (m, m)).into_owned();
        let sv = crate::linalg::singular_values(&p12);
        // The flow is only accurate to the integrator tolerance.
        if sv.last().copied().unwrap_or(0.0) <= 1e2 * self.tol * f.phi.amax().max(1.0) {
            return Err(Error::ConjugatePoints(index));
        }
        let eta0 = p12.lu().solve(&(y - p11 * x)).ok_or(Error::ConjugatePoints(index))?;
        let eta1 = f.phi.view((m, 0), (m, m)) * x + f.phi.view((m, m), (m, m)) * &eta0;
        Ok((eta0, eta1, f))
    }
}

impl DiscreteLagrangian for DiscretizedCls {
    fn dim(&self) -> usize {
        self.system.m
    }

    fn value(&self, step: Step, x: &Point, y: &Point) -> Result<f64> {
        let m = self.system.m;
        let (eta0, _, f) = self.shoot(step.index, x, y)?;
        let s0 = crate::linalg::stack(&[x.clone(), eta0]);
        let mut total = 0.0;
        for (t, w, phi) in &f.nodes {
            let s = phi * &s0;
            let (xi, eta) = (s.rows(0, m), s.rows(m, m));
            total += w * 0.5 * (eta.dot(&eta) + xi.dot(&(self.system.u.eval(*t) * xi)));
        }
        Ok(total)
    }

    fn gradients(&self, step: Step, x: &Point, y: &Point) -> Result<Option<(Point, Point)>> {
        let (eta0, eta1, _) = self.shoot(step.index, x, y)?;
        Ok(Some((-eta0, eta1)))
    }
}
