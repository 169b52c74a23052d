//! Discrete Lagrangian systems: step laws, derivative blocks, the periodic
//! action and Newton refinement of periodic orbits.

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::linalg::{det_real, singular_values};
use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

pub type Point = DVector<f64>;

/// One step of a trajectory: the step index and the charts of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub from: usize,
    pub to: usize,
}

impl Step {
    pub fn new(index: usize, from: usize, to: usize) -> Self {
        Step { index, from, to }
    }
}

/// Second derivatives of a step law; `d12[(a, b)] = ∂²L/∂x_a∂y_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivatives {
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

/// A (possibly step-dependent) discrete Lagrangian `L_i(x, y)` on an
/// `m`-dimensional manifold given by one or more charts.
///
/// Only `value` is mandatory; missing derivatives are filled in by central
/// finite differences and the results are flagged.
pub trait DiscreteLagrangian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, step: Step, x: &Point, y: &Point) -> Result<f64>;

    fn gradients(&self, _step: Step, _x: &Point, _y: &Point) -> Result<Option<(Point, Point)>> {
        Ok(None)
    }

    fn second_derivatives(&self, _step: Step, _x: &Point, _y: &Point) -> Result<Option<SecondDerivatives>> {
        Ok(None)
    }

    /// Distance between two configuration points given in charts.
    fn point_distance(&self, cx: usize, x: &Point, cy: usize, y: &Point) -> f64 {
        if cx == cy {
            (x - y).norm()
        } else {
            f64::INFINITY
        }
    }

    /// True for billiard generating functions, whose twist sign is fixed.
    fn is_billiard(&self) -> bool {
        false
    }
}

/// Finite-difference step `1e-5 (1 + |x|)`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

/// All first and second derivative data of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBlocks {
    pub value: f64,
    pub d1: Point,
    pub d2: Point,
    pub d11: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    /// `B = -∂12 L` arranged so that `<B u, v> = v^T twist u`.
    pub twist: DMatrix<f64>,
    pub finite_difference: bool,
}

pub fn gradients(l: &dyn DiscreteLagrangian, step: Step, x: &Point, y: &Point) -> Result<(Point, Point, bool)> {
    if let Some((g1, g2)) = l.gradients(step, x, y)? {
        return Ok((g1, g2, false));
    }
    let m = l.dim();
    let mut g1 = Point::zeros(m);
    let mut g2 = Point::zeros(m);
    for k in 0..m {
        let h = fd_step(x[k]);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += h;
        xm[k] -= h;
        g1[k] = (l.value(step, &xp, y)? - l.value(step, &xm, y)?) / (2.0 * h);
        let h = fd_step(y[k]);
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[k] += h;
        ym[k] -= h;
        g2[k] = (l.value(step, x, &yp)? - l.value(step, x, &ym)?) / (2.0 * h);
    }
    Ok((g1, g2, true))
}

pub fn second_derivatives(l: &dyn DiscreteLagrangian, step: Step, x: &Point, y: &Point) -> Result<(SecondDerivatives, bool)> {
    if let Some(s) = l.second_derivatives(step, x, y)? {
        return Ok((s, false));
    }
    let m = l.dim();
    let mut d11 = DMatrix::zeros(m, m);
    let mut d12 = DMatrix::zeros(m, m);
    let mut d22 = DMatrix::zeros(m, m);
    for k in 0..m {
        let h = fd_step(x[k]);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += h;
        xm[k] -= h;
        let (a1, a2, _) = gradients(l, step, &xp, y)?;
        let (b1, b2, _) = gradients(l, step, &xm, y)?;
        d11.set_column(k, &((a1 - b1) / (2.0 * h)));
        // Row k of d12 is ∂/∂x_k of ∂2 L.
        d12.set_row(k, &((a2 - b2) / (2.0 * h)).transpose());
        let h = fd_step(y[k]);
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[k] += h;
        ym[k] -= h;
        let (_, a2, _) = gradients(l, step, x, &yp)?;
        let (_, b2, _) = gradients(l, step, x, &ym)?;
        d22.set_column(k, &((a2 - b2) / (2.0 * h)));
    }
    let d11 = (&d11 + d11.transpose()) * 0.5;
    let d22 = (&d22 + d22.transpose()) * 0.5;
    Ok((SecondDerivatives { d11, d12, d22 }, true))
}

pub fn step_blocks(l: &dyn DiscreteLagrangian, step: Step, x: &Point, y: &Point) -> Result<StepBlocks> {
    let value = l.value(step, x, y)?;
    let (d1, d2, fd1) = gradients(l, step, x, y)?;
    let (s, fd2) = second_derivatives(l, step, x, y)?;
    Ok(StepBlocks {
        value,
        d1,
        d2,
        d11: s.d11,
        d22: s.d22,
        twist: -s.d12.transpose(),
        finite_difference: fd1 || fd2,
    })
}

/// Rejects twists with `|det B| < 1e-12 σ_max^m`.
pub fn check_twist(b: &DMatrix<f64>, step: usize) -> Result<()> {
    let s = singular_values(b);
    let smax = s.first().copied().unwrap_or(0.0);
    let scale = smax.powi(b.nrows() as i32);
    let det = det_real(b);
    if smax == 0.0 || det.abs() < 1e-12 * scale {
        return Err(Error::SingularTwist { step, det, scale });
    }
    Ok(())
}

/// A periodic sequence of configuration points with chart tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<Point>,
    pub charts: Vec<usize>,
}

impl PeriodicOrbit {
    pub fn new(points: Vec<Point>) -> Self {
        let charts = vec![0; points.len()];
        PeriodicOrbit { points, charts }
    }

    pub fn with_charts(points: Vec<Point>, charts: Vec<usize>) -> Self {
        assert_eq!(points.len(), charts.len());
        PeriodicOrbit { points, charts }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn step(&self, i: usize) -> Step {
        let n = self.n();
        Step::new(i % n, self.charts[i % n], self.charts[(i + 1) % n])
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i % self.n()]
    }

    /// The orbit traversed twice.
    pub fn doubled(&self) -> Self {
        let mut p = self.points.clone();
        p.extend(self.points.iter().cloned());
        let mut c = self.charts.clone();
        c.extend(self.charts.iter().cloned());
        PeriodicOrbit { points: p, charts: c }
    }

    /// Cyclic shift: point `i` of the result is point `i + k` of `self`.
    pub fn shifted(&self, k: usize) -> Self {
        let n = self.n();
        PeriodicOrbit {
            points: (0..n).map(|i| self.points[(i + k) % n].clone()).collect(),
            charts: (0..n).map(|i| self.charts[(i + k) % n]).collect(),
        }
    }

    fn flat(&self) -> DVector<f64> {
        crate::linalg::stack(&self.points)
    }

    fn with_flat(&self, v: &DVector<f64>) -> Self {
        let m = self.points[0].len();
        PeriodicOrbit {
            points: (0..self.n()).map(|i| v.rows(i * m, m).into_owned()).collect(),
            charts: self.charts.clone(),
        }
    }
}

pub fn action(l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..orbit.n() {
        s += l.value(orbit.step(i), orbit.point(i), orbit.point(i + 1))?;
    }
    Ok(s)
}

/// Gradient of the periodic action: `∂2 L(x_{i-1}, x_i) + ∂1 L(x_i, x_{i+1})`.
pub fn action_gradient(l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit) -> Result<DVector<f64>> {
    let (n, m) = (orbit.n(), l.dim());
    let mut g = DVector::zeros(n * m);
    for i in 0..n {
        let (g1, g2, _) = gradients(l, orbit.step(i), orbit.point(i), orbit.point(i + 1))?;
        let mut r = g.rows_mut(i * m, m);
        r += g1;
        let j = (i + 1) % n;
        let mut r = g.rows_mut(j * m, m);
        r += g2;
    }
    Ok(g)
}

/// Chain blocks along an orbit, with a flag for finite-difference use.
pub fn orbit_chain(l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit) -> Result<(Chain, bool)> {
    let (n, m) = (orbit.n(), l.dim());
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let (x, y) = (orbit.point(i), orbit.point(i + 1));
        if l.point_distance(orbit.charts[i], x, orbit.charts[(i + 1) % n], y) == 0.0 && l.is_billiard() {
            return Err(Error::CoincidentPoints(i));
        }
        blocks.push(step_blocks(l, orbit.step(i), x, y)?);
    }
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut fd = false;
    for i in 0..n {
        let prev = &blocks[(i + n - 1) % n];
        let a_i = &prev.d22 + &blocks[i].d11;
        a.push((&a_i + a_i.transpose()) * 0.5);
        b.push(blocks[i].twist.clone());
        fd |= blocks[i].finite_difference;
    }
    debug_assert!(a.iter().all(|x| x.nrows() == m));
    Ok((Chain { a, b }, fd))
}

/// Solves `∂2 L(x, y) + ∂1 L(y, z) = 0` for `z` by damped Newton.
pub fn advance(
    l: &dyn DiscreteLagrangian,
    prev: Step,
    x: &Point,
    y: &Point,
    next: Step,
    z_guess: Option<&Point>,
) -> Result<Point> {
    let (_, p, _) = gradients(l, prev, x, y)?;
    let mut z = match z_guess {
        Some(z) => z.clone(),
        None if prev.from == next.to => 2.0 * y - x,
        None => y.clone(),
    };
    let residual = |z: &Point| -> Result<Point> { Ok(&p + gradients(l, next, y, z)?.0) };
    let mut r = residual(&z)?;
    let scale = 1.0 + p.norm();
    for it in 0..100 {
        if r.norm() <= 1e-14 * scale {
            return Ok(z);
        }
        let (s, _) = second_derivatives(l, next, y, &z)?;
        let dz = s
            .d12
            .clone()
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularTwist { step: next.index, det: 0.0, scale: s.d12.amax() })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let zt = &z + t * &dz;
            if let Ok(rt) = residual(&zt) {
                if rt.norm() < r.norm() {
                    z = zt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if r.norm() <= 1e-10 * scale {
                return Ok(z);
            }
            return Err(Error::NoConvergence { iterations: it, residual: r.norm() });
        }
    }
    Err(Error::NoConvergence { iterations: 100, residual: r.norm() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Threshold `σ_min / σ_max` below which least squares is used.
    pub degenerate_ratio: f64,
    /// Fall back to minimum-norm steps instead of failing on a singular Hessian.
    pub allow_degenerate: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-12,
            max_iterations: 60,
            max_halvings: 30,
            degenerate_ratio: 1e-10,
            allow_degenerate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedOrbit {
    pub orbit: PeriodicOrbit,
    pub residual: f64,
    pub iterations: usize,
    /// Gradient norm after each iteration, starting with the guess.
    pub log: Vec<f64>,
    pub degenerate_suspect: bool,
    pub finite_difference: bool,
}

/// Damped Newton iteration on the gradient of the periodic action.
pub fn refine_orbit(l: &dyn DiscreteLagrangian, guess: &PeriodicOrbit, opts: &NewtonOptions) -> Result<RefinedOrbit> {
    let mut orbit = guess.clone();
    let mut g = action_gradient(l, &orbit)?;
    let mut log = vec![g.norm()];
    let mut degenerate = false;
    let mut fd = false;
    for it in 0..opts.max_iterations {
        if g.norm() <= opts.tolerance {
            return Ok(RefinedOrbit { orbit, residual: g.norm(), iterations: it, log, degenerate_suspect: degenerate, finite_difference: fd });
        }
        let (chain, fdc) = orbit_chain(l, &orbit)?;
        fd |= fdc;
        let h = chain.hessian();
        let svd = SVD::new(h, true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if ratio < opts.degenerate_ratio {
            if !opts.allow_degenerate {
                return Err(Error::SingularJacobian { smallest: smin });
            }
            degenerate = true;
        }
        let step = svd
            .solve(&(-&g), opts.degenerate_ratio * smax)
            .map_err(|_| Error::SingularJacobian { smallest: smin })?;
        let x = orbit.flat();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = orbit.with_flat(&(&x + t * &step));
            if let Ok(gt) = action_gradient(l, &trial) {
                if gt.norm() < g.norm() {
                    orbit = trial;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        log.push(g.norm());
        if !accepted {
            // Stagnation at round-off level counts as convergence.
            if g.norm() <= 1e3 * opts.tolerance {
                return Ok(RefinedOrbit { orbit, residual: g.norm(), iterations: it + 1, log, degenerate_suspect: degenerate, finite_difference: fd });
            }
            return Err(Error::NoConvergence { iterations: it + 1, residual: g.norm() });
        }
    }
    if g.norm() <= opts.tolerance {
        return Ok(RefinedOrbit { orbit, residual: g.norm(), iterations: opts.max_iterations, log, degenerate_suspect: degenerate, finite_difference: fd });
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual: g.norm() })
}
