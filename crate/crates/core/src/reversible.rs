//! Reversible systems: time-reversing involutions, reversible orbit types,
//! half actions and the splitting of the Hessian into even and odd parts.

use crate::dls::{self, action_gradient, orbit_chain, DiscreteLagrangian, NewtonOptions, PeriodicOrbit, Point, Step};
use crate::error::{Error, Result};
use crate::hill::{HillReport, Verdict};
use crate::linalg::{
    block_diag, hermitian_eigenvalues, log_det_real, lstsq, null_space, symmetric_eigenvalues, symmetric_inertia, Inertia, LogDet,
    C64, NULL_TOL,
};
use crate::models::Billiard;
use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type ChartMap = Arc<dyn Fn(usize, &Point) -> Result<(usize, Point)> + Send + Sync>;
pub type ChartJacobian = Arc<dyn Fn(usize, &Point) -> Result<DMatrix<f64>> + Send + Sync>;

/// Tolerance for matching orbit points with their mirror images.
pub const ALIGN_TOL: f64 = 1e-9;
/// Relative eigenvalue threshold for definiteness decisions.
pub const DEFINITE_TOL: f64 = 1e-9;

/// A time-reversing involution `S` with `L(Sx, Sy) = L(y, x)`, acting on
/// chart points. `jacobian(c, x)` maps tangent vectors at `x` to tangent
/// vectors at `S x` in the chart of the image.
#[derive(Clone)]
pub struct InvolutionSpec {
    pub dim: usize,
    map: ChartMap,
    jacobian: Option<ChartJacobian>,
    pub identity: bool,
    /// Unit normal `e` of a billiard mirror `x - 2e<x, e>`.
    pub reflection: Option<DVector<f64>>,
}

impl std::fmt::Debug for InvolutionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InvolutionSpec")
            .field("dim", &self.dim)
            .field("identity", &self.identity)
            .field("reflection", &self.reflection)
            .finish()
    }
}

impl InvolutionSpec {
    pub fn identity(dim: usize) -> Self {
        InvolutionSpec {
            dim,
            map: Arc::new(|c, x| Ok((c, x.clone()))),
            jacobian: Some(Arc::new(move |_, _| Ok(DMatrix::identity(dim, dim)))),
            identity: true,
            reflection: None,
        }
    }

    /// `S x = M x` in every chart.
    pub fn linear(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if !m.is_square() || (&m * &m - DMatrix::identity(dim, dim)).amax() > 1e-12 {
            return Err(Error::InvalidInput("linear involution must square to the identity".into()));
        }
        let identity = (&m - DMatrix::identity(dim, dim)).amax() == 0.0;
        let mj = m.clone();
        Ok(InvolutionSpec {
            dim,
            map: Arc::new(move |c, x| Ok((c, &m * x))),
            jacobian: Some(Arc::new(move |_, _| Ok(mj.clone()))),
            identity,
            reflection: None,
        })
    }

    /// `S x = -x`, a reversing symmetry when the potential is even.
    pub fn negation(dim: usize) -> Self {
        Self::linear(-DMatrix::identity(dim, dim)).expect("-I is an involution")
    }

    /// A general involution; the Jacobian falls back to central differences.
    pub fn new(dim: usize, map: ChartMap, jacobian: Option<ChartJacobian>) -> Self {
        InvolutionSpec { dim, map, jacobian, identity: false, reflection: None }
    }

    /// The mirror `x - 2e<x, e>` restricted to the boundary of a billiard
    /// table that it preserves.
    pub fn billiard_reflection(billiard: &Billiard, normal: &[f64]) -> Result<Self> {
        let dim = billiard.dim();
        let e = DVector::from_column_slice(normal);
        if e.len() != dim + 1 || e.norm() == 0.0 {
            return Err(Error::InvalidInput(format!("mirror normal must be a nonzero vector of length {}", dim + 1)));
        }
        let e = e.normalize();
        let mirror = DMatrix::identity(dim + 1, dim + 1) - 2.0 * &e * e.transpose();
        let (b1, m1) = (billiard.clone(), mirror.clone());
        let (b2, m2) = (billiard.clone(), mirror);
        Ok(InvolutionSpec {
            dim,
            map: Arc::new(move |c, u| reflect_on_boundary(&b1, &m1, c, u)),
            jacobian: Some(Arc::new(move |c, u| {
                let (c2, v) = reflect_on_boundary(&b2, &m2, c, u)?;
                let tangent = b2.pieces[c].jacobian(u)?;
                let image = b2.pieces[c2].jacobian(&v)?;
                Ok(lstsq(&image, &(&m2 * tangent), 1e-12))
            })),
            identity: false,
            reflection: Some(e),
        })
    }

    pub fn apply(&self, chart: usize, x: &Point) -> Result<(usize, Point)> {
        (self.map)(chart, x)
    }

    pub fn jacobian(&self, chart: usize, x: &Point) -> Result<DMatrix<f64>> {
        if let Some(j) = &self.jacobian {
            return j(chart, x);
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for a in 0..self.dim {
            let h = dls::fd_step(x[a]);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[a] += h;
            xm[a] -= h;
            let col = (self.apply(chart, &xp)?.1 - self.apply(chart, &xm)?.1) / (2.0 * h);
            out.set_column(a, &col);
        }
        Ok(out)
    }

    /// The Euclidean chart metric averaged with its pullback, `½(I + JᵀJ)`.
    /// It is invariant because `S` is an involution.
    pub fn metric(&self, chart: usize, x: &Point) -> Result<DMatrix<f64>> {
        let j = self.jacobian(chart, x)?;
        Ok((DMatrix::identity(self.dim, self.dim) + j.transpose() * j) * 0.5)
    }

    /// Largest relative defect of `S∘S = id` and `L(Sx, Sy) = L(y, x)` over
    /// sample pairs; fails above `1e-10`.
    pub fn check(&self, l: &dyn DiscreteLagrangian, samples: &[((usize, Point), (usize, Point))]) -> Result<f64> {
        let mut worst = 0.0f64;
        for ((cx, x), (cy, y)) in samples {
            let (sx_c, sx) = self.apply(*cx, x)?;
            let (sy_c, sy) = self.apply(*cy, y)?;
            let (back_c, back) = self.apply(sx_c, &sx)?;
            worst = worst.max(l.point_distance(back_c, &back, *cx, x) / x.norm().max(1.0));
            let lhs = l.value(Step::new(0, sx_c, sy_c), &sx, &sy)?;
            let rhs = l.value(Step::new(0, *cy, *cx), y, x)?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
        if worst > 1e-10 {
            return Err(Error::SymmetryViolation(format!("involution defect {worst:.3e}")));
        }
        Ok(worst)
    }
}

fn reflect_on_boundary(b: &Billiard, mirror: &DMatrix<f64>, chart: usize, u: &Point) -> Result<(usize, Point)> {
    let q = mirror * b.ambient_point(chart, u)?;
    let tol = 1e-9 * q.norm().max(1.0);
    let order = std::iter::once(chart).chain((0..b.pieces.len()).filter(|&k| k != chart));
    for k in order {
        if let Some(v) = b.pieces[k].locate(&q, u) {
            if let Ok(p) = b.pieces[k].point(&v) {
                if (p - &q).norm() <= tol {
                    return Ok((k, v));
                }
            }
        }
    }
    Err(Error::DomainError("mirror image is not on the boundary".into()))
}

/// Period of a reversible orbit of the given type with `k` half points.
pub fn reversible_period(orbit_type: usize, k: usize) -> Result<usize> {
    match (orbit_type, k) {
        (0, k) if k >= 1 => Ok(2 * k),
        (1, k) if k >= 1 => Ok(2 * k - 1),
        (2, k) if k >= 2 => Ok(2 * k - 2),
        _ => Err(Error::InvalidInput(format!("no reversible orbit of type {orbit_type} with {k} half points"))),
    }
}

fn half_length(orbit_type: usize, n: usize) -> usize {
    match orbit_type {
        0 => n / 2,
        1 => (n + 1) / 2,
        _ => n / 2 + 1,
    }
}

/// Slot of the canonical orbit that carries `S y_a`.
fn mirror_slot(orbit_type: usize, n: usize, a: usize) -> usize {
    if orbit_type == 0 {
        n - 1 - a
    } else {
        (n - a) % n
    }
}

fn is_fixed_slot(orbit_type: usize, k: usize, a: usize) -> bool {
    (orbit_type >= 1 && a == 0) || (orbit_type == 2 && a == k - 1)
}

/// A periodic orbit with `S x_{j-i} = x_i` for a fixed shift `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversibleOrbit {
    pub orbit: PeriodicOrbit,
    /// Number of `S`-fixed points on the orbit: 0, 1 or 2.
    pub orbit_type: usize,
    pub shift: usize,
    /// Indices of the `S`-fixed points.
    pub anchors: Vec<usize>,
    /// The orbit started at `offset` is `(y_0, .., y_{k-1}, S y_.., ..)`.
    pub offset: usize,
    pub half: Vec<Point>,
    pub half_charts: Vec<usize>,
}

impl ReversibleOrbit {
    pub fn k(&self) -> usize {
        self.half.len()
    }

    /// The orbit in reconstruction order.
    pub fn canonical(&self) -> PeriodicOrbit {
        self.orbit.shifted(self.offset)
    }

    pub fn mirror(&self, a: usize) -> usize {
        mirror_slot(self.orbit_type, self.orbit.n(), a)
    }
}

/// The orbit `y_0, .., y_{k-1}` followed by the mirror images `S y_a` in
/// reverse order, skipping `S`-fixed end points.
pub fn reconstruct(s: &InvolutionSpec, orbit_type: usize, half: &[Point], charts: &[usize]) -> Result<PeriodicOrbit> {
    let k = half.len();
    let n = reversible_period(orbit_type, k)?;
    if charts.len() != k {
        return Err(Error::InvalidInput("one chart per half point required".into()));
    }
    let mut points = vec![Point::zeros(0); n];
    let mut out_charts = vec![0; n];
    for a in 0..k {
        points[a] = half[a].clone();
        out_charts[a] = charts[a];
        let slot = mirror_slot(orbit_type, n, a);
        if slot >= k {
            let (c, p) = s.apply(charts[a], &half[a])?;
            points[slot] = p;
            out_charts[slot] = c;
        }
    }
    Ok(PeriodicOrbit::with_charts(points, out_charts))
}

fn close(l: &dyn DiscreteLagrangian, c1: usize, x: &Point, c2: usize, y: &Point) -> bool {
    l.point_distance(c1, x, c2, y) <= ALIGN_TOL * y.norm().max(1.0)
}

/// Finds the smallest shift `j` with `S x_{j-i} = x_i` and derives the
/// orbit type from the number of `S`-fixed points.
pub fn classify_reversible(l: &dyn DiscreteLagrangian, orbit: &PeriodicOrbit, s: &InvolutionSpec) -> Result<ReversibleOrbit> {
    let n = orbit.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty orbit".into()));
    }
    let images: Vec<(usize, Point)> = (0..n).map(|i| s.apply(orbit.charts[i], &orbit.points[i])).collect::<Result<_>>()?;
    let shift = (0..n)
        .find(|&j| {
            (0..n).all(|i| {
                let (c, p) = &images[(j + n - i) % n];
                close(l, *c, p, orbit.charts[i], &orbit.points[i])
            })
        })
        .ok_or(Error::NotReversible)?;
    let anchors: Vec<usize> = (0..n).filter(|&i| (2 * i) % n == shift).collect();
    let orbit_type = anchors.len();
    let offset = if orbit_type == 0 { (shift + 1) / 2 } else { anchors[0] };
    let canonical = orbit.shifted(offset);
    let k = half_length(orbit_type, n);
    let half: Vec<Point> = canonical.points[..k].to_vec();
    let half_charts: Vec<usize> = canonical.charts[..k].to_vec();
    let rebuilt = reconstruct(s, orbit_type, &half, &half_charts)?;
    for i in 0..n {
        if !close(l, rebuilt.charts[i], &rebuilt.points[i], canonical.charts[i], &canonical.points[i]) {
            return Err(Error::NotReversible);
        }
    }
    Ok(ReversibleOrbit { orbit: orbit.clone(), orbit_type, shift, anchors, offset, half, half_charts })
}

fn check_fixed(l: &dyn DiscreteLagrangian, s: &InvolutionSpec, chart: usize, y: &Point) -> Result<()> {
    let (c, sy) = s.apply(chart, y)?;
    if !close(l, c, &sy, chart, y) {
        return Err(Error::DomainError("end point of the half orbit is not fixed by the involution".into()));
    }
    Ok(())
}

/// Value and gradient of the half action
/// `2 Σ_{a<k-1} L(y_a, y_{a+1})` plus `L(S y_0, y_0)` (type 0) and
/// `L(y_{k-1}, S y_{k-1})` (types 0 and 1). It equals the action of the
/// reconstructed orbit.
pub fn half_action_gradient(
    l: &dyn DiscreteLagrangian,
    s: &InvolutionSpec,
    orbit_type: usize,
    half: &[Point],
    charts: &[usize],
) -> Result<(f64, DVector<f64>)> {
    let k = half.len();
    let n = reversible_period(orbit_type, k)?;
    let m = l.dim();
    for a in (0..k).filter(|&a| is_fixed_slot(orbit_type, k, a)) {
        check_fixed(l, s, charts[a], &half[a])?;
    }
    let mut value = 0.0;
    let mut grad = DVector::zeros(k * m);
    for a in 0..k.saturating_sub(1) {
        let step = Step::new(a, charts[a], charts[a + 1]);
        value += 2.0 * l.value(step, &half[a], &half[a + 1])?;
        let (g1, g2, _) = dls::gradients(l, step, &half[a], &half[a + 1])?;
        let mut r = grad.rows_mut(a * m, m);
        r += 2.0 * g1;
        let mut r = grad.rows_mut((a + 1) * m, m);
        r += 2.0 * g2;
    }
    if orbit_type == 0 {
        let (c, sy) = s.apply(charts[0], &half[0])?;
        let step = Step::new(n - 1, c, charts[0]);
        value += l.value(step, &sy, &half[0])?;
        let (g1, g2, _) = dls::gradients(l, step, &sy, &half[0])?;
        let j = s.jacobian(charts[0], &half[0])?;
        let mut r = grad.rows_mut(0, m);
        r += j.transpose() * g1 + g2;
    }
    if orbit_type <= 1 {
        let last = k - 1;
        let (c, sy) = s.apply(charts[last], &half[last])?;
        let step = Step::new(last, charts[last], c);
        value += l.value(step, &half[last], &sy)?;
        let (g1, g2, _) = dls::gradients(l, step, &half[last], &sy)?;
        let j = s.jacobian(charts[last], &half[last])?;
        let mut r = grad.rows_mut(last * m, m);
        r += g1 + j.transpose() * g2;
    }
    Ok((value, grad))
}

/// Basis of `{v : J v = sign v}`. Singular values below `1e-8 max(1, |J|)`
/// count as zero, so a Jacobian equal to `±I` up to rounding is recognized.
fn eigen_domain(j: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let m = j.nrows();
    let shifted = j - DMatrix::identity(m, m) * sign;
    let thr = 1e-8 * j.amax().max(1.0);
    let smax = shifted.amax() * m as f64;
    if smax <= thr {
        return DMatrix::identity(m, m);
    }
    let largest = crate::linalg::singular_values(&shifted)[0];
    null_space(&shifted, thr / largest)
}

/// Half-coordinate basis of the domain of `h_±`: all of `T_y M^k` except
/// at `S`-fixed slots, where `J v = ±v`.
fn half_domain(orbit_type: usize, jacobians: &[DMatrix<f64>], sign: f64) -> DMatrix<f64> {
    let k = jacobians.len();
    let m = jacobians[0].nrows();
    let blocks: Vec<DMatrix<f64>> = (0..k)
        .map(|a| if is_fixed_slot(orbit_type, k, a) { eigen_domain(&jacobians[a], sign) } else { DMatrix::identity(m, m) })
        .collect();
    let rows = k * m;
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for (a, b) in blocks.iter().enumerate() {
        out.view_mut((a * m, c), (m, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Linear map from half variations `v` to the full variation `u` with
/// `u_a = v_a` and `u_{mirror(a)} = ±J_a v_a`.
fn mirror_embedding(orbit_type: usize, n: usize, jacobians: &[DMatrix<f64>], sign: f64) -> DMatrix<f64> {
    let k = jacobians.len();
    let m = jacobians[0].nrows();
    let mut out = DMatrix::zeros(n * m, k * m);
    for a in 0..k {
        out.view_mut((a * m, a * m), (m, m)).copy_from(&DMatrix::identity(m, m));
        let slot = mirror_slot(orbit_type, n, a);
        if slot != a {
            out.view_mut((slot * m, a * m), (m, m)).copy_from(&(&jacobians[a] * sign));
        }
    }
    out
}

fn half_jacobians(s: &InvolutionSpec, half: &[Point], charts: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    half.iter().zip(charts).map(|(y, c)| s.jacobian(*c, y)).collect()
}

/// The Hessian of a reversible orbit split into its even and odd parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSplit {
    pub orbit_type: usize,
    /// Matrix of the even form on a basis of its domain.
    pub h_plus: DMatrix<f64>,
    /// Matrix of the odd form on a basis of its domain.
    pub h_minus: DMatrix<f64>,
    /// Domain bases in half coordinates (`km` rows).
    pub domain_plus: DMatrix<f64>,
    pub domain_minus: DMatrix<f64>,
    /// Even and odd subspaces of the full variation space (`nm` rows).
    pub embed_plus: DMatrix<f64>,
    pub embed_minus: DMatrix<f64>,
    /// Boundary operator at the first half point (type 0).
    pub c_first: Option<DMatrix<f64>>,
    /// Boundary operator at the last half point (types 0 and 1).
    pub c_last: Option<DMatrix<f64>>,
    pub c_asymmetry: f64,
    /// Largest relative difference between the half forms and the full
    /// Hessian restricted to the even and odd subspaces.
    pub restriction_residual: f64,
    /// Largest relative `|h(ξ_-, ξ_+)|` over the subspace bases.
    pub cross_term: f64,
    /// Operator determinants for the invariant metric.
    pub det_full: LogDet,
    pub det_plus: LogDet,
    pub det_minus: LogDet,
    /// `|det H - det H_+ det H_-| / max(|det H|, |det H_+ det H_-|)`.
    pub det_residual: f64,
    pub inertia_full: Inertia,
    pub inertia_plus: Inertia,
    pub inertia_minus: Inertia,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn rel_residual(a: &LogDet, b: &LogDet) -> f64 {
    let (x, y) = (a.value(), b.value());
    let scale = x.norm().max(y.norm());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).norm() / scale
    }
}

/// Splits the Hessian of a reversible orbit into even and odd forms in half
/// coordinates: twice the Hessian of the half chain plus or minus twice the
/// boundary operators. Both are checked against the full Hessian.
pub fn split_hessian(l: &dyn DiscreteLagrangian, s: &InvolutionSpec, rev: &ReversibleOrbit) -> Result<HessianSplit> {
    let x = rev.canonical();
    let (n, m, k, t) = (x.n(), l.dim(), rev.k(), rev.orbit_type);
    let (chain, _) = orbit_chain(l, &x)?;
    let jac = half_jacobians(s, &rev.half, &rev.half_charts)?;

    let mut kform = DMatrix::zeros(k * m, k * m);
    for a in 0..k {
        let w = if is_fixed_slot(t, k, a) { 0.5 } else { 1.0 };
        kform.view_mut((a * m, a * m), (m, m)).copy_from(&(&chain.a[a] * w));
    }
    for a in 0..k.saturating_sub(1) {
        kform.view_mut((a * m, (a + 1) * m), (m, m)).copy_from(&(-chain.b[a].transpose()));
        kform.view_mut(((a + 1) * m, a * m), (m, m)).copy_from(&(-&chain.b[a]));
    }
    let raw_first = (t == 0).then(|| -&chain.b[n - 1] * &jac[0]);
    let raw_last = (t <= 1).then(|| -chain.b[k - 1].transpose() * &jac[k - 1]);
    let asym = |c: &Option<DMatrix<f64>>| {
        c.as_ref().map_or(0.0, |c| (c - c.transpose()).amax() / c.amax().max(1e-300))
    };
    let c_asymmetry = asym(&raw_first).max(asym(&raw_last));
    let c_first = raw_first.map(|c| sym(&c));
    let c_last = raw_last.map(|c| sym(&c));

    let form = |sign: f64| {
        let mut f = &kform * 2.0;
        if let Some(c) = &c_first {
            let mut v = f.view_mut((0, 0), (m, m));
            v += c * (2.0 * sign);
        }
        if let Some(c) = &c_last {
            let mut v = f.view_mut(((k - 1) * m, (k - 1) * m), (m, m));
            v += c * (2.0 * sign);
        }
        f
    };
    let domain_plus = half_domain(t, &jac, 1.0);
    let domain_minus = half_domain(t, &jac, -1.0);
    let h_plus = sym(&(domain_plus.transpose() * form(1.0) * &domain_plus));
    let h_minus = sym(&(domain_minus.transpose() * form(-1.0) * &domain_minus));

    let embed_plus = mirror_embedding(t, n, &jac, 1.0) * &domain_plus;
    let embed_minus = mirror_embedding(t, n, &jac, -1.0) * &domain_minus;
    let h = chain.hessian();
    let scale = h.amax().max(1.0) * embed_plus.amax().max(embed_minus.amax()).max(1.0).powi(2);
    let restricted_plus = embed_plus.transpose() * &h * &embed_plus;
    let restricted_minus = embed_minus.transpose() * &h * &embed_minus;
    let diff = |a: &DMatrix<f64>, b: &DMatrix<f64>| if a.is_empty() { 0.0 } else { (a - b).amax() };
    let restriction_residual = diff(&restricted_plus, &h_plus).max(diff(&restricted_minus, &h_minus)) / scale;
    let cross = embed_minus.transpose() * &h * &embed_plus;
    let cross_term = if cross.is_empty() { 0.0 } else { cross.amax() / scale };

    let metrics: Vec<DMatrix<f64>> = (0..n).map(|i| s.metric(x.charts[i], &x.points[i])).collect::<Result<_>>()?;
    let g = block_diag(&metrics);
    let gram_plus = embed_plus.transpose() * &g * &embed_plus;
    let gram_minus = embed_minus.transpose() * &g * &embed_minus;
    let det_full = log_det_real(&h).div(&log_det_real(&g));
    let det_plus = log_det_real(&h_plus).div(&log_det_real(&gram_plus));
    let det_minus = log_det_real(&h_minus).div(&log_det_real(&gram_minus));
    let det_residual = rel_residual(&det_full, &det_plus.mul(&det_minus));

    Ok(HessianSplit {
        orbit_type: t,
        inertia_full: symmetric_inertia(&h, NULL_TOL),
        inertia_plus: symmetric_inertia(&h_plus, NULL_TOL),
        inertia_minus: symmetric_inertia(&h_minus, NULL_TOL),
        h_plus,
        h_minus,
        domain_plus,
        domain_minus,
        embed_plus,
        embed_minus,
        c_first,
        c_last,
        c_asymmetry,
        restriction_residual,
        cross_term,
        det_full,
        det_plus,
        det_minus,
        det_residual,
    })
}

/// Smallest and largest eigenvalue relative to the largest modulus; `None`
/// for an empty matrix.
fn relative_spectrum(m: &DMatrix<f64>) -> Option<(f64, f64)> {
    let e = symmetric_eigenvalues(m);
    let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    Some((*e.first()? / scale, *e.last()? / scale))
}

fn positive_definite(m: &DMatrix<f64>) -> bool {
    relative_spectrum(m).is_none_or(|(lo, _)| lo > DEFINITE_TOL)
}

fn negative_definite(m: &DMatrix<f64>) -> bool {
    relative_spectrum(m).is_none_or(|(_, hi)| hi < -DEFINITE_TOL)
}

fn degenerate(m: &DMatrix<f64>) -> bool {
    let e = symmetric_eigenvalues(m);
    let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    e.iter().any(|x| x.abs() <= DEFINITE_TOL * scale.max(f64::MIN_POSITIVE))
}

fn non_positive(m: &DMatrix<f64>) -> bool {
    relative_spectrum(m).is_none_or(|(_, hi)| hi <= DEFINITE_TOL)
}

fn non_negative(m: &DMatrix<f64>) -> bool {
    relative_spectrum(m).is_none_or(|(lo, _)| lo >= -DEFINITE_TOL)
}

/// Stability statements for a reversible orbit, cross-checked against the
/// Hessian and the multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversibleVerdicts {
    pub orbit_type: usize,
    pub identity_involution: bool,
    /// Type 1 with `S = id`: the odd domain condition at the fixed point
    /// degenerates, results are reported but flagged.
    pub identity_type_one: bool,
    /// The half orbit is a nondegenerate minimum of the half action.
    pub plus_minimum: bool,
    pub plus_maximum: bool,
    pub plus_degenerate: bool,
    pub minus_positive: bool,
    pub c_first_nonpositive: Option<bool>,
    pub c_last_nonpositive: Option<bool>,
    /// The orbit is a nondegenerate minimum of the full action.
    pub full_minimum: Verdict,
    pub full_maximum: Verdict,
    /// Minimum and `σ (-1)^m < 0`: a real multiplier above 1.
    pub multiplier_above_one: Verdict,
    /// Billiards: minimum and `m + type` odd.
    pub billiard_parity_rule: Verdict,
    /// Identity involution, type 2 minimum: `h_ρ > 0` on the unit circle
    /// and no multiplier on it.
    pub hyperbolic: Verdict,
    /// Smallest relative eigenvalue of `h_ρ` over the unit-circle grid
    /// points, when the hyperbolicity criterion applies.
    pub min_rho_eigenvalue: Option<f64>,
    /// A degenerate even form forces the multiplier 1.
    pub unit_multiplier: Verdict,
}

fn has_real_above_one(mults: &[[f64; 2]]) -> bool {
    mults.iter().any(|z| z[1].abs() <= 1e-8 * z[0].abs().max(1.0) && z[0] > 1.0 - 1e-8)
}

/// Evaluates the reversible minimality and instability criteria. Any
/// prediction that the Hessian or the multipliers contradict raises
/// `TheoremViolation`.
pub fn reversible_verdicts(rev: &ReversibleOrbit, s: &InvolutionSpec, split: &HessianSplit, report: &HillReport) -> Result<ReversibleVerdicts> {
    let t = rev.orbit_type;
    let id = s.identity;
    let (m, n) = (report.m, report.n);
    let plus_minimum = positive_definite(&split.h_plus);
    let plus_maximum = negative_definite(&split.h_plus);
    let minus_positive = positive_definite(&split.h_minus);
    let minus_negative = negative_definite(&split.h_minus);
    let c_first_nonpositive = split.c_first.as_ref().map(non_positive);
    let c_last_nonpositive = split.c_last.as_ref().map(non_positive);
    let c_first_nonnegative = split.c_first.as_ref().map(non_negative);
    let c_last_nonnegative = split.c_last.as_ref().map(non_negative);
    let all = |o: Option<bool>| o.unwrap_or(true);

    // Hypotheses under which the even form alone decides minimality; for
    // other types the odd form is checked directly.
    let min_hyp = match (t, id) {
        (0, _) => plus_minimum && all(c_first_nonpositive) && all(c_last_nonpositive),
        (1, true) => plus_minimum && all(c_last_nonpositive),
        (2, true) => plus_minimum,
        _ => plus_minimum && minus_positive,
    };
    let max_hyp = match (t, id) {
        (0, _) => plus_maximum && all(c_first_nonnegative) && all(c_last_nonnegative),
        (1, true) => plus_maximum && all(c_last_nonnegative),
        (2, true) => plus_maximum,
        _ => plus_maximum && minus_negative,
    };
    let v = &report.verdicts;
    if min_hyp && (v.index != 0 || v.nullity != 0) {
        return Err(Error::TheoremViolation(format!(
            "reversible minimum predicted but the Hessian has index {} and nullity {}",
            v.index, v.nullity
        )));
    }
    if max_hyp && (v.index != n * m || v.nullity != 0) {
        return Err(Error::TheoremViolation(format!(
            "reversible maximum predicted but the Hessian has index {} of {}",
            v.index,
            n * m
        )));
    }
    let full_minimum = if min_hyp { Verdict::Predicted } else { Verdict::Abstained };
    let full_maximum = if max_hyp { Verdict::Predicted } else { Verdict::Abstained };

    let sign_rule = report.twist_sign * if m % 2 == 0 { 1.0 } else { -1.0 } < 0.0;
    let multiplier_above_one = match (min_hyp, sign_rule) {
        (false, _) => Verdict::Abstained,
        (true, true) => Verdict::Predicted,
        (true, false) => Verdict::NotPredicted,
    };
    let billiard = report.billiard_sign.is_some();
    let billiard_parity_rule = match (billiard && min_hyp, (m + t) % 2 == 1) {
        (false, _) => Verdict::Abstained,
        (true, true) => Verdict::Predicted,
        (true, false) => Verdict::NotPredicted,
    };
    if (multiplier_above_one == Verdict::Predicted || billiard_parity_rule == Verdict::Predicted)
        && !has_real_above_one(&report.multipliers)
    {
        return Err(Error::TheoremViolation("reversible minimum predicts a real multiplier above 1, none found".into()));
    }

    let (hyperbolic, min_rho_eigenvalue) = if id && t == 2 && plus_minimum {
        let mut lowest = f64::INFINITY;
        for c in report.checks.iter().filter(|c| ((c.rho[0].hypot(c.rho[1])) - 1.0).abs() < 1e-12) {
            let e = hermitian_eigenvalues(&report.chain.rho_hessian(C64::new(c.rho[0], c.rho[1])));
            let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
            lowest = lowest.min(e[0] / scale);
        }
        if lowest <= DEFINITE_TOL {
            return Err(Error::TheoremViolation(format!("h_rho is not positive definite (relative eigenvalue {lowest:.3e})")));
        }
        if let Some(z) = report.multipliers.iter().find(|z| (z[0].hypot(z[1]) - 1.0).abs() <= 1e-6) {
            return Err(Error::TheoremViolation(format!("hyperbolicity predicted but {:?} lies on the unit circle", z)));
        }
        (Verdict::Predicted, Some(lowest))
    } else {
        (Verdict::Abstained, None)
    };

    let plus_degenerate = degenerate(&split.h_plus);
    let unit_multiplier = if plus_degenerate {
        let near_one = report.multipliers.iter().any(|z| ((z[0] - 1.0).powi(2) + z[1].powi(2)).sqrt() <= 1e-6);
        if v.nullity == 0 && !near_one {
            return Err(Error::TheoremViolation("degenerate even form without a unit multiplier".into()));
        }
        Verdict::Predicted
    } else {
        Verdict::NotPredicted
    };

    Ok(ReversibleVerdicts {
        orbit_type: t,
        identity_involution: id,
        identity_type_one: id && t == 1,
        plus_minimum,
        plus_maximum,
        plus_degenerate,
        minus_positive,
        c_first_nonpositive,
        c_last_nonpositive,
        full_minimum,
        full_maximum,
        multiplier_above_one,
        billiard_parity_rule,
        hyperbolic,
        min_rho_eigenvalue,
        unit_multiplier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversibleRefinement {
    pub orbit: ReversibleOrbit,
    /// Norm of the full action gradient at the result.
    pub residual: f64,
    pub iterations: usize,
    pub log: Vec<f64>,
}

/// Damped Newton iteration on the half action over the even domain.
/// End points of types 1 and 2 are first averaged with their images, which
/// puts them on the fixed set when `S` is affine in the chart.
pub fn refine_reversible(
    l: &dyn DiscreteLagrangian,
    s: &InvolutionSpec,
    orbit_type: usize,
    half: &[Point],
    charts: &[usize],
    opts: &NewtonOptions,
) -> Result<ReversibleRefinement> {
    let k = half.len();
    let n = reversible_period(orbit_type, k)?;
    let m = l.dim();
    let mut y: Vec<Point> = half.to_vec();
    for a in (0..k).filter(|&a| is_fixed_slot(orbit_type, k, a)) {
        let (c, sy) = s.apply(charts[a], &y[a])?;
        if c != charts[a] {
            return Err(Error::DomainError("end point chart is not preserved by the involution".into()));
        }
        y[a] = (&y[a] + sy) * 0.5;
    }
    let residual = |y: &[Point]| -> Result<f64> { Ok(action_gradient(l, &reconstruct(s, orbit_type, y, charts)?)?.norm()) };
    let mut r = residual(&y)?;
    let mut log = vec![r];
    let mut iterations = 0;
    while r > opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::NoConvergence { iterations, residual: r });
        }
        iterations += 1;
        let x = reconstruct(s, orbit_type, &y, charts)?;
        let (chain, _) = orbit_chain(l, &x)?;
        let jac = half_jacobians(s, &y, charts)?;
        let domain = half_domain(orbit_type, &jac, 1.0);
        let embed = mirror_embedding(orbit_type, n, &jac, 1.0) * &domain;
        let g = embed.transpose() * action_gradient(l, &x)?;
        let hess = embed.transpose() * chain.hessian() * &embed;
        let svd = SVD::new(hess, true, true);
        let smax = svd.singular_values.max();
        let dz = svd
            .solve(&(-&g), opts.degenerate_ratio * smax)
            .map_err(|_| Error::SingularJacobian { smallest: svd.singular_values.min() })?;
        let dy = &domain * dz;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<Point> = (0..k).map(|a| &y[a] + dy.rows(a * m, m) * step).collect();
            if let Ok(rt) = residual(&trial) {
                if rt < r {
                    y = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        log.push(r);
        if !accepted {
            if r <= 1e3 * opts.tolerance {
                break;
            }
            return Err(Error::NoConvergence { iterations, residual: r });
        }
    }
    let x = reconstruct(s, orbit_type, &y, charts)?;
    let orbit = classify_reversible(l, &x, s)?;
    Ok(ReversibleRefinement { orbit, residual: r, iterations, log })
}

/// Defect of `T(S z, S y) = (S y, S x)` for `T(x, y) = (y, z)`, which makes
/// the twist map conjugate to its inverse. Points are taken in one chart.
pub fn conjugacy_defect(l: &dyn DiscreteLagrangian, s: &InvolutionSpec, x: &Point, y: &Point) -> Result<f64> {
    let st = Step::new(0, 0, 0);
    let z = dls::advance(l, st, x, y, st, None)?;
    let (_, sx) = s.apply(0, x)?;
    let (_, sy) = s.apply(0, y)?;
    let (_, sz) = s.apply(0, &z)?;
    let w = dls::advance(l, st, &sz, &sy, st, Some(&sx))?;
    Ok(l.point_distance(0, &w, 0, &sx) / sx.norm().max(1.0))
}
