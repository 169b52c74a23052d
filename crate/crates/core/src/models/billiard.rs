//! Billiards in `R^{m+1}`: the generating function is the chord length
//! between points of (pieces of) the boundary.

use crate::dls::{DiscreteLagrangian, Point, SecondDerivatives, Step};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

/// A local parametrization `u -> r(u)` of a boundary hypersurface.
pub trait BoundaryPiece: Send + Sync {
    /// Dimension `m` of the parameter space.
    fn dim(&self) -> usize;
    fn point(&self, u: &Point) -> Result<DVector<f64>>;
    /// `(m+1) x m` matrix of tangent vectors `∂r/∂u_a`.
    fn jacobian(&self, u: &Point) -> Result<DMatrix<f64>>;
    /// `Σ_k e_k ∂²r_k/∂u_a∂u_b` for an ambient covector `e`.
    fn second_contracted(&self, u: &Point, e: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Parameter of the piece point closest to the ambient point `p` (exact
    /// when `p` lies on the piece), with angles taken nearest to `near`.
    /// `None` if the piece cannot be inverted.
    fn locate(&self, _p: &DVector<f64>, _near: &Point) -> Option<Point> {
        None
    }
}

/// The representative of the angle `t + 2πk` closest to `near`.
fn unwrap_near(t: f64, near: f64) -> f64 {
    t + 2.0 * PI * ((near - t) / (2.0 * PI)).round()
}

/// Ellipse `c + (a cos θ, b sin θ)`, counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
}

impl BoundaryPiece for Ellipse {
    fn dim(&self) -> usize {
        1
    }
    fn point(&self, u: &Point) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![self.center[0] + self.a * u[0].cos(), self.center[1] + self.b * u[0].sin()]))
    }
    fn jacobian(&self, u: &Point) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_vec(2, 1, vec![-self.a * u[0].sin(), self.b * u[0].cos()]))
    }
    fn second_contracted(&self, u: &Point, e: &DVector<f64>) -> Result<DMatrix<f64>> {
        let v = -self.a * u[0].cos() * e[0] - self.b * u[0].sin() * e[1];
        Ok(DMatrix::from_element(1, 1, v))
    }
    fn locate(&self, p: &DVector<f64>, near: &Point) -> Option<Point> {
        let t = ((p[1] - self.center[1]) / self.b).atan2((p[0] - self.center[0]) / self.a);
        Some(Point::from_element(1, unwrap_near(t, near[0])))
    }
}

/// Straight line through `start` towards `end`, unit speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: DVector<f64>,
    pub direction: DVector<f64>,
    pub length: f64,
}

impl Segment {
    pub fn new(start: &[f64], end: &[f64]) -> Result<Self> {
        let s = DVector::from_column_slice(start);
        let d = DVector::from_column_slice(end) - &s;
        let length = d.norm();
        if length == 0.0 || start.len() != 2 || end.len() != 2 {
            return Err(Error::InvalidInput("segment needs two distinct planar points".into()));
        }
        Ok(Segment { start: s, direction: d / length, length })
    }
}

impl BoundaryPiece for Segment {
    fn dim(&self) -> usize {
        1
    }
    fn point(&self, u: &Point) -> Result<DVector<f64>> {
        Ok(&self.start + u[0] * &self.direction)
    }
    fn jacobian(&self, _u: &Point) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_column_slice(2, 1, self.direction.as_slice()))
    }
    fn second_contracted(&self, _u: &Point, _e: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(1, 1))
    }
    fn locate(&self, p: &DVector<f64>, _near: &Point) -> Option<Point> {
        let t = (p - &self.start).dot(&self.direction);
        let tol = 1e-9 * self.length.max(1.0);
        (-tol..=self.length + tol).contains(&t).then(|| Point::from_element(1, t))
    }
}

/// Ellipsoid `(a sinθ cosφ, b sinθ sinφ, c cosθ)` in the chart `(θ, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Ellipsoid {
    fn check(&self, u: &Point) -> Result<()> {
        if u[0].sin().abs() < 1e-8 {
            return Err(Error::DomainError(format!("polar angle {} at a chart pole", u[0])));
        }
        Ok(())
    }
}

impl BoundaryPiece for Ellipsoid {
    fn dim(&self) -> usize {
        2
    }
    fn point(&self, u: &Point) -> Result<DVector<f64>> {
        self.check(u)?;
        let (st, ct, sp, cp) = (u[0].sin(), u[0].cos(), u[1].sin(), u[1].cos());
        Ok(DVector::from_vec(vec![self.a * st * cp, self.b * st * sp, self.c * ct]))
    }
    fn jacobian(&self, u: &Point) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let (st, ct, sp, cp) = (u[0].sin(), u[0].cos(), u[1].sin(), u[1].cos());
        Ok(DMatrix::from_row_slice(3, 2, &[
            self.a * ct * cp, -self.a * st * sp,
            self.b * ct * sp, self.b * st * cp,
            -self.c * st, 0.0,
        ]))
    }
    fn second_contracted(&self, u: &Point, e: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let (st, ct, sp, cp) = (u[0].sin(), u[0].cos(), u[1].sin(), u[1].cos());
        let tt = -(self.a * st * cp * e[0] + self.b * st * sp * e[1] + self.c * ct * e[2]);
        let tp = -self.a * ct * sp * e[0] + self.b * ct * cp * e[1];
        let pp = -self.a * st * cp * e[0] - self.b * st * sp * e[1];
        Ok(DMatrix::from_row_slice(2, 2, &[tt, tp, tp, pp]))
    }
    fn locate(&self, p: &DVector<f64>, near: &Point) -> Option<Point> {
        let theta = (p[2] / self.c).clamp(-1.0, 1.0).acos();
        let phi = (p[1] / self.b).atan2(p[0] / self.a);
        Some(Point::from_vec(vec![theta, unwrap_near(phi, near[1])]))
    }
}

/// Billiard generating function `L(x, y) = |r(x) - r(y)|` on a boundary made
/// of parametrized pieces; chart `k` is piece `k`.
#[derive(Clone)]
pub struct Billiard {
    pub pieces: Vec<Arc<dyn BoundaryPiece>>,
}

impl std::fmt::Debug for Billiard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Billiard({} pieces)", self.pieces.len())
    }
}

impl Billiard {
    pub fn new(pieces: Vec<Arc<dyn BoundaryPiece>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput("billiard needs at least one boundary piece".into()));
        }
        let m = pieces[0].dim();
        if pieces.iter().any(|p| p.dim() != m) {
            return Err(Error::InvalidInput("boundary pieces differ in dimension".into()));
        }
        Ok(Billiard { pieces })
    }

    pub fn circle(radius: f64) -> Self {
        Self::ellipse(radius, radius)
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Billiard { pieces: vec![Arc::new(Ellipse { center: [0.0, 0.0], a, b })] }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Self {
        Billiard { pieces: vec![Arc::new(Ellipsoid { a, b, c })] }
    }

    /// Polygon with counterclockwise vertices; side `k` joins vertex `k` to `k+1`.
    pub fn polygon(vertices: &[[f64; 2]]) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidInput("polygon needs at least three vertices".into()));
        }
        let mut pieces: Vec<Arc<dyn BoundaryPiece>> = Vec::new();
        for k in 0..n {
            pieces.push(Arc::new(Segment::new(&vertices[k], &vertices[(k + 1) % n])?));
        }
        Ok(Billiard { pieces })
    }

    /// Two disks of equal radius with centers `(∓separation/2, 0)`.
    pub fn two_disks(radius: f64, separation: f64) -> Result<Self> {
        if separation <= 2.0 * radius {
            return Err(Error::InvalidInput("disks overlap".into()));
        }
        let h = separation / 2.0;
        Ok(Billiard {
            pieces: vec![
                Arc::new(Ellipse { center: [-h, 0.0], a: radius, b: radius }),
                Arc::new(Ellipse { center: [h, 0.0], a: radius, b: radius }),
            ],
        })
    }

    pub fn ambient_point(&self, chart: usize, u: &Point) -> Result<DVector<f64>> {
        self.piece(chart)?.point(u)
    }

    fn piece(&self, chart: usize) -> Result<&Arc<dyn BoundaryPiece>> {
        self.pieces.get(chart).ok_or_else(|| Error::DomainError(format!("no boundary piece {chart}")))
    }

    fn geometry(&self, step: Step, x: &Point, y: &Point) -> Result<(f64, DVector<f64>)> {
        let d = self.piece(step.from)?.point(x)? - self.piece(step.to)?.point(y)?;
        let len = d.norm();
        if len < 1e-14 {
            return Err(Error::CoincidentPoints(step.index));
        }
        Ok((len, d / len))
    }
}

impl DiscreteLagrangian for Billiard {
    fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    fn value(&self, step: Step, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.geometry(step, x, y)?.0)
    }

    fn gradients(&self, step: Step, x: &Point, y: &Point) -> Result<Option<(Point, Point)>> {
        let (_, e) = self.geometry(step, x, y)?;
        let jx = self.piece(step.from)?.jacobian(x)?;
        let jy = self.piece(step.to)?.jacobian(y)?;
        Ok(Some((jx.transpose() * &e, -(jy.transpose() * &e))))
    }

    fn second_derivatives(&self, step: Step, x: &Point, y: &Point) -> Result<Option<SecondDerivatives>> {
        let (len, e) = self.geometry(step, x, y)?;
        let (px, py) = (self.piece(step.from)?, self.piece(step.to)?);
        let (jx, jy) = (px.jacobian(x)?, py.jacobian(y)?);
        let k = DMatrix::identity(e.len(), e.len()) - &e * e.transpose();
        Ok(Some(SecondDerivatives {
            d11: jx.transpose() * &k * &jx / len + px.second_contracted(x, &e)?,
            d12: -(jx.transpose() * &k * &jy) / len,
            d22: jy.transpose() * &k * &jy / len - py.second_contracted(y, &e)?,
        }))
    }

    fn point_distance(&self, cx: usize, x: &Point, cy: usize, y: &Point) -> f64 {
        match (self.ambient_point(cx, x), self.ambient_point(cy, y)) {
            (Ok(a), Ok(b)) => (a - b).norm(),
            _ => f64::INFINITY,
        }
    }

    fn is_billiard(&self) -> bool {
        true
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(t: f64) -> f64 {
    t.rem_euclid(2.0 * PI)
}
