//! Periodic Jacobi systems `D²ξ = Uξ` with `D = d/dt + W(t)`, `W` skew and
//! `U` symmetric, on a (possibly twisted) vector bundle over a circle.

use super::ode;
use crate::error::{Error, Result};
use crate::linalg::{log_det_real, C64};
use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::sync::Arc;

/// A matrix-valued function of time.
#[derive(Clone)]
pub enum MatrixFunction {
    Constant(DMatrix<f64>),
    /// `Σ_k cos[k] cos(kωt) + sin[k] sin(kωt)`, `k = 0, 1, ...`.
    Trig { omega: f64, cos: Vec<DMatrix<f64>>, sin: Vec<DMatrix<f64>> },
    Custom(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

impl std::fmt::Debug for MatrixFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatrixFunction::Constant(m) => write!(f, "Constant({m:?})"),
            MatrixFunction::Trig { omega, cos, .. } => write!(f, "Trig(omega={omega}, degree={})", cos.len()),
            MatrixFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl MatrixFunction {
    pub fn zeros(m: usize) -> Self {
        MatrixFunction::Constant(DMatrix::zeros(m, m))
    }

    pub fn scalar(v: f64) -> Self {
        MatrixFunction::Constant(DMatrix::from_element(1, 1, v))
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixFunction::Constant(m) => m.clone(),
            MatrixFunction::Trig { omega, cos, sin } => {
                let mut out = cos[0].clone();
                for k in 1..cos.len() {
                    let p = k as f64 * omega * t;
                    out += &cos[k] * p.cos();
                    if let Some(s) = sin.get(k) {
                        out += s * p.sin();
                    }
                }
                out
            }
            MatrixFunction::Custom(f) => f(t),
        }
    }

    /// Time derivative, exact for trigonometric data.
    pub fn derivative(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixFunction::Constant(m) => DMatrix::zeros(m.nrows(), m.ncols()),
            MatrixFunction::Trig { omega, cos, sin } => {
                let mut out = DMatrix::zeros(cos[0].nrows(), cos[0].ncols());
                for k in 1..cos.len() {
                    let w = k as f64 * omega;
                    out -= &cos[k] * (w * (w * t).sin());
                    if let Some(s) = sin.get(k) {
                        out += s * (w * (w * t).cos());
                    }
                }
                out
            }
            MatrixFunction::Custom(f) => {
                let h = 1e-5 * (1.0 + t.abs());
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MatrixFunction::Constant(m) => m.iter().all(|v| *v == 0.0),
            MatrixFunction::Trig { cos, sin, .. } => cos.iter().chain(sin.iter()).all(|m| m.iter().all(|v| *v == 0.0)),
            MatrixFunction::Custom(_) => false,
        }
    }

    /// Exact coefficient of `e^{i f t}` when the data are trigonometric.
    pub fn exact_coefficient(&self, freq: f64) -> Option<DMatrix<C64>> {
        let c = |m: &DMatrix<f64>, s: f64| m.map(|v| C64::new(v * s, 0.0));
        match self {
            MatrixFunction::Constant(m) => {
                Some(if freq.abs() < 1e-12 { c(m, 1.0) } else { c(m, 0.0) })
            }
            MatrixFunction::Trig { omega, cos, sin } => {
                let d = cos[0].nrows();
                let r = freq.abs() / omega;
                let k = r.round();
                if (r - k).abs() > 1e-9 || k as usize >= cos.len() {
                    return Some(DMatrix::zeros(d, d));
                }
                let k = k as usize;
                if k == 0 {
                    return Some(c(&cos[0], 1.0));
                }
                let zero = DMatrix::zeros(d, d);
                let s = sin.get(k).unwrap_or(&zero);
                let sign = if freq > 0.0 { -1.0 } else { 1.0 };
                Some(cos[k].map(|v| C64::new(0.5 * v, 0.0)) + s.map(|v| C64::new(0.0, 0.5 * sign * v)))
            }
            MatrixFunction::Custom(_) => None,
        }
    }
}

/// A linear periodic Jacobi system of period `tau` on an `m`-dimensional
/// bundle. Sections satisfy `ξ(t + τ) = gluing · ξ(t)` in the trivialization
/// over `[0, τ]`; the identity gluing gives the trivial bundle.
#[derive(Debug, Clone)]
pub struct ContinuousSystem {
    pub tau: f64,
    pub m: usize,
    pub w: MatrixFunction,
    pub u: MatrixFunction,
    pub gluing: DMatrix<f64>,
}

pub const ODE_TOL: f64 = 1e-12;

impl ContinuousSystem {
    pub fn new(tau: f64, w: MatrixFunction, u: MatrixFunction) -> Result<Self> {
        let m = u.eval(0.0).nrows();
        Self::with_gluing(tau, w, u, DMatrix::identity(m, m))
    }

    pub fn with_gluing(tau: f64, w: MatrixFunction, u: MatrixFunction, gluing: DMatrix<f64>) -> Result<Self> {
        let m = u.eval(0.0).nrows();
        let s = ContinuousSystem { tau, m, w, u, gluing };
        s.validate()?;
        Ok(s)
    }

    /// Scalar Hill equation `ξ'' = a(t) ξ` of period `tau`.
    pub fn scalar(tau: f64, a: MatrixFunction) -> Result<Self> {
        Self::new(tau, MatrixFunction::zeros(1), a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidInput("period must be positive".into()));
        }
        let m = self.m;
        if self.gluing.shape() != (m, m) || (self.gluing.transpose() * &self.gluing - DMatrix::identity(m, m)).amax() > 1e-10 {
            return Err(Error::InvalidInput("gluing must be an orthogonal m x m matrix".into()));
        }
        for j in 0..8 {
            let t = self.tau * j as f64 / 8.0;
            let (w, u) = (self.w.eval(t), self.u.eval(t));
            if w.shape() != (m, m) || u.shape() != (m, m) {
                return Err(Error::InvalidInput("W and U must be m x m".into()));
            }
            if (&w + w.transpose()).amax() > 1e-10 * (1.0 + w.amax()) {
                return Err(Error::InvalidInput("W must be skew-symmetric".into()));
            }
            if (&u - u.transpose()).amax() > 1e-10 * (1.0 + u.amax()) {
                return Err(Error::InvalidInput("U must be symmetric".into()));
            }
        }
        let r = &self.gluing;
        let u_end = self.u.eval(self.tau);
        let u_start = r * self.u.eval(0.0) * r.transpose();
        let w_end = self.w.eval(self.tau);
        let w_start = r * self.w.eval(0.0) * r.transpose();
        if (u_end - u_start).amax() > 1e-8 * (1.0 + self.u.eval(0.0).amax())
            || (w_end - w_start).amax() > 1e-8 * (1.0 + self.w.eval(0.0).amax())
        {
            return Err(Error::InvalidInput("coefficients are not periodic sections of the bundle".into()));
        }
        Ok(())
    }

    /// The same system over two periods.
    pub fn doubled(&self) -> Self {
        ContinuousSystem {
            tau: 2.0 * self.tau,
            m: self.m,
            w: self.w.clone(),
            u: self.u.clone(),
            gluing: &self.gluing * &self.gluing,
        }
    }

    /// `d/dt (ξ, Dξ) = [[-W, I], [U, -W]] (ξ, Dξ)`.
    pub fn first_order(&self, t: f64) -> DMatrix<f64> {
        let m = self.m;
        let w = self.w.eval(t);
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        a.view_mut((0, 0), (m, m)).copy_from(&(-&w));
        a.view_mut((0, m), (m, m)).copy_from(&DMatrix::identity(m, m));
        a.view_mut((m, 0), (m, m)).copy_from(&self.u.eval(t));
        a.view_mut((m, m), (m, m)).copy_from(&(-&w));
        a
    }

    /// Fundamental matrix of `(ξ, Dξ)` from `0` to `t` in the trivialization.
    pub fn flow(&self, t: f64, tol: f64) -> Result<DMatrix<f64>> {
        ode::integrate(&|s| self.first_order(s), 0.0, t, &DMatrix::identity(2 * self.m, 2 * self.m), tol)
    }

    /// Monodromy of the variational equation on `(ξ(0), Dξ(0))`.
    pub fn monodromy(&self, tol: f64) -> Result<DMatrix<f64>> {
        let m = self.m;
        let phi = self.flow(self.tau, tol)?;
        let mut r = DMatrix::zeros(2 * m, 2 * m);
        r.view_mut((0, 0), (m, m)).copy_from(&self.gluing.transpose());
        r.view_mut((m, m), (m, m)).copy_from(&self.gluing.transpose());
        Ok(r * phi)
    }

    /// Parallel transport `Φ_W(t)`, solving `Φ' = -W Φ`.
    pub fn transport_to(&self, t: f64, tol: f64) -> Result<DMatrix<f64>> {
        if self.w.is_zero() {
            return Ok(DMatrix::identity(self.m, self.m));
        }
        ode::integrate(&|s| -self.w.eval(s), 0.0, t, &DMatrix::identity(self.m, self.m), tol)
    }

    /// Parallel-transport monodromy `Q`.
    pub fn transport_monodromy(&self, tol: f64) -> Result<DMatrix<f64>> {
        Ok(self.gluing.transpose() * self.transport_to(self.tau, tol)?)
    }

    /// `σ = det Q = ±1`.
    pub fn orientation_sign(&self, tol: f64) -> Result<f64> {
        Ok(log_det_real(&self.transport_monodromy(tol)?).sign())
    }

    /// `β = e^{-mτ} det²(e^τ I - Q)`.
    pub fn beta(&self, q: &DMatrix<f64>) -> f64 {
        let m = self.m;
        let d = log_det_real(&(DMatrix::identity(m, m) * self.tau.exp() - q));
        (2.0 * d.log_abs - m as f64 * self.tau).exp()
    }

    /// Builds `(D, U)` from a second variation written in mixed form
    /// `∫ |ξ'|² + <Mξ, ξ'> + <Vξ, ξ>`.
    ///
    /// The skew part of `M` becomes the connection `W = skew(M)/2`, and
    /// `U = V - ½ d/dt sym(M) + W²`.
    pub fn from_mixed_form(tau: f64, mixed: MatrixFunction, potential: MatrixFunction) -> Result<Self> {
        let (mx, mx_d, v) = (mixed.clone(), mixed, potential);
        let w = MatrixFunction::Custom(Arc::new(move |t| {
            let a = mx.eval(t);
            (&a - a.transpose()) * 0.25
        }));
        let w2 = w.clone();
        let u = MatrixFunction::Custom(Arc::new(move |t| {
            let d = mx_d.derivative(t);
            let ws = w2.eval(t);
            let u = v.eval(t) - (&d + d.transpose()) * 0.25 + &ws * &ws;
            (&u + u.transpose()) * 0.5
        }));
        ContinuousSystem::new(tau, w, u)
    }
}

/// `μ = ln ρ / τ` with `0 <= Im ln ρ < 2π`.
pub fn exponent(rho: C64, tau: f64) -> C64 {
    let mut arg = rho.arg();
    if arg < 0.0 {
        arg += 2.0 * PI;
    }
    C64::new(rho.norm().ln(), arg) / tau
}
