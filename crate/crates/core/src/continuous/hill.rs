//! Fourier truncations of the normalized Jacobi operator
//! `H_ρ = (-D² + I)^{-1} (-(D + μ)² + U)` and the continuous Hill identity.

use super::system::{exponent, ContinuousSystem, ODE_TOL};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_inertia, log_det, Inertia, LogDet, C64, NULL_TOL};
use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fourier data of `U` in a unitary frame that turns `D` into
/// `d/dt - i diag(θ_j / τ)`.
#[derive(Debug, Clone)]
pub struct FourierData {
    pub tau: f64,
    pub omega: f64,
    pub m: usize,
    /// Rotation angles of the transport monodromy, in `(-π, π]`.
    pub angles: Vec<f64>,
    qmax: i64,
    coeffs: Vec<DMatrix<C64>>,
}

fn cplx(x: f64) -> C64 {
    C64::new(x, 0.0)
}

impl FourierData {
    /// Precomputes coefficients for truncation orders up to `max_order`.
    pub fn new(sys: &ContinuousSystem, max_order: usize) -> Result<Self> {
        let (tau, m) = (sys.tau, sys.m);
        let omega = 2.0 * PI / tau;
        let qmax = 2 * max_order as i64 + 2;
        let trivial = sys.w.is_zero() && (&sys.gluing - DMatrix::identity(m, m)).amax() == 0.0;
        if trivial {
            if let Some(c0) = sys.u.exact_coefficient(0.0) {
                let coeffs: Vec<DMatrix<C64>> = (-qmax..=qmax)
                    .map(|q| sys.u.exact_coefficient(q as f64 * omega).unwrap())
                    .collect();
                debug_assert_eq!(coeffs[qmax as usize], c0);
                return Ok(FourierData { tau, omega, m, angles: vec![0.0; m], qmax, coeffs });
            }
        }
        let q = sys.transport_monodromy(ODE_TOL)?;
        let (z, t) = Schur::new(q.map(cplx)).unpack();
        let angles: Vec<f64> = (0..m)
            .map(|j| {
                let a = t[(j, j)].arg();
                if a <= -PI + 1e-12 { PI } else { a }
            })
            .collect();
        let samples = (4 * qmax as usize + 64).max(256);
        let times: Vec<f64> = (0..samples).map(|s| tau * s as f64 / samples as f64).collect();
        let transports: Vec<DMatrix<f64>> = if sys.w.is_zero() {
            vec![DMatrix::identity(m, m); samples]
        } else {
            let mut v = vec![DMatrix::identity(m, m)];
            v.extend(super::ode::integrate_dense(&|s| -sys.w.eval(s), 0.0, &times[1..], &DMatrix::identity(m, m), ODE_TOL)?);
            v
        };
        let frame_u: Vec<DMatrix<C64>> = times
            .iter()
            .zip(&transports)
            .map(|(&t, phi)| {
                let rot = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    m,
                    angles.iter().map(|th| C64::from_polar(1.0, -t * th / tau)),
                ));
                let f = phi.map(cplx) * &z * rot;
                f.adjoint() * sys.u.eval(t).map(cplx) * f
            })
            .collect();
        let coeffs = (-qmax..=qmax)
            .map(|q| {
                let mut acc = DMatrix::<C64>::zeros(m, m);
                for (t, uf) in times.iter().zip(&frame_u) {
                    acc += uf * C64::from_polar(1.0, -(q as f64) * omega * t);
                }
                acc / cplx(samples as f64)
            })
            .collect();
        Ok(FourierData { tau, omega, m, angles, qmax, coeffs })
    }

    /// `Û(q)`, the coefficient of `e^{iqωt}` in frame coordinates.
    pub fn coefficient(&self, q: i64) -> &DMatrix<C64> {
        assert!(q.abs() <= self.qmax, "Fourier coefficient {q} outside precomputed range");
        &self.coeffs[(q + self.qmax) as usize]
    }

    pub fn max_order(&self) -> usize {
        ((self.qmax - 2) / 2) as usize
    }

    /// Eigenvalue `i(kω - θ_j/τ)` of `D` on the mode `(j, k)`.
    pub fn nu(&self, j: usize, k: i64) -> C64 {
        C64::new(0.0, k as f64 * self.omega - self.angles[j] / self.tau)
    }

    /// Modes with `|ν| <= N ω`.
    pub fn modes(&self, n: usize) -> Vec<(usize, i64)> {
        let mut out = Vec::new();
        for j in 0..self.m {
            let shift = self.angles[j] / (2.0 * PI);
            for k in -(n as i64) - 1..=n as i64 + 1 {
                if (k as f64 - shift).abs() <= n as f64 + 1e-9 {
                    out.push((j, k));
                }
            }
        }
        out
    }

    /// Unweighted matrix of `-(D + μ)² + U` on the truncated modes.
    pub fn form_matrix(&self, n: usize, mu: C64) -> DMatrix<C64> {
        let modes = self.modes(n);
        let d = modes.len();
        let mut h = DMatrix::<C64>::zeros(d, d);
        for (r, &(j, k)) in modes.iter().enumerate() {
            for (c, &(l, p)) in modes.iter().enumerate() {
                h[(r, c)] = self.coefficient(k - p)[(j, l)];
            }
            let s = self.nu(j, k) + mu;
            h[(r, r)] -= s * s;
        }
        h
    }

    fn weights(&self, n: usize) -> Vec<f64> {
        self.modes(n).iter().map(|&(j, k)| 1.0 + self.nu(j, k).norm_sqr()).collect()
    }

    /// Matrix of the normalized operator `H_ρ^{(N)}`.
    pub fn hill_matrix(&self, n: usize, mu: C64) -> DMatrix<C64> {
        let mut h = self.form_matrix(n, mu);
        for (r, w) in self.weights(n).iter().enumerate() {
            h.row_mut(r).unscale_mut(*w);
        }
        h
    }

    pub fn truncated_det(&self, n: usize, mu: C64) -> LogDet {
        log_det(&self.hill_matrix(n, mu))
    }

    /// Product of the diagonal factors of the modes outside the truncation,
    /// from the closed form of the constant-coefficient determinant.
    pub fn tail_factor(&self, n: usize, mu: C64) -> LogDet {
        let modes = self.modes(n);
        let mut total = LogDet::ONE;
        for j in 0..self.m {
            let c = self.coefficient(0)[(j, j)].re;
            let ks: Vec<i64> = modes.iter().filter(|(jj, _)| *jj == j).map(|(_, k)| *k).collect();
            let min_factor = ks
                .iter()
                .map(|&k| {
                    let s = self.nu(j, k) + mu;
                    (s * s - cplx(c)).norm()
                })
                .fold(f64::INFINITY, f64::min);
            let t = if min_factor < 1e-6 * (1.0 + c.abs()) {
                // Both closed form and partial product vanish; the tail is
                // analytic in c, so average two nearby evaluations.
                let dc = 1e-4 * (1.0 + c.abs());
                let a = self.scalar_tail(j, &ks, c + dc, mu).value();
                let b = self.scalar_tail(j, &ks, c - dc, mu).value();
                LogDet::from_value((a + b) * 0.5)
            } else {
                self.scalar_tail(j, &ks, c, mu)
            };
            total = total.mul(&t);
        }
        total
    }

    fn scalar_tail(&self, j: usize, ks: &[i64], c: f64, mu: C64) -> LogDet {
        let half = cplx(self.tau / 2.0);
        let alpha = C64::new(0.0, -self.angles[j] / self.tau);
        let s = cplx(c).sqrt();
        let full = LogDet::from_value(((alpha + mu - s) * half).sinh())
            .mul(&LogDet::from_value(((alpha + mu + s) * half).sinh()))
            .div(&LogDet::from_value(((alpha - 1.0) * half).sinh()))
            .div(&LogDet::from_value(((alpha + 1.0) * half).sinh()));
        let mut partial = LogDet::ONE;
        for &k in ks {
            let nu = self.nu(j, k);
            let f = ((nu + mu) * (nu + mu) - cplx(c)) / (nu * nu - 1.0);
            partial = partial.mul(&LogDet::from_value(f));
        }
        full.div(&partial)
    }

    /// Truncated determinant times the diagonal tail correction.
    pub fn corrected_det(&self, n: usize, mu: C64) -> LogDet {
        self.truncated_det(n, mu).mul(&self.tail_factor(n, mu))
    }

    /// `det(I - (D + μ)^{-2} U)` on the truncated modes.
    pub fn regular_factor(&self, n: usize, mu: C64) -> Result<LogDet> {
        let modes = self.modes(n);
        let d = modes.len();
        let mut a = DMatrix::<C64>::identity(d, d);
        for (r, &(j, k)) in modes.iter().enumerate() {
            let s = self.nu(j, k) + mu;
            if s.norm() < 1e-10 {
                return Err(Error::SpectralClash { distance: s.norm() });
            }
            let inv = (s * s).inv();
            for (c, &(l, p)) in modes.iter().enumerate() {
                a[(r, c)] -= self.coefficient(k - p)[(j, l)] * inv;
            }
        }
        Ok(log_det(&a))
    }

    /// Inertia of the form `-(D + μ)² + U` for `|ρ| = 1`.
    pub fn inertia(&self, n: usize, mu: C64) -> Inertia {
        let mut h = self.form_matrix(n, mu);
        let w: Vec<f64> = self.weights(n).iter().map(|w| w.sqrt()).collect();
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                h[(r, c)] /= w[r] * w[c];
            }
        }
        hermitian_inertia(&h, NULL_TOL)
    }
}

/// The classical normalized Hill matrix `(k² δ_jk + a_{k-j}) / (k² + 1)`
/// for `|j|, |k| <= n`, with `a(q)` the Fourier coefficients of `a(t)`.
pub fn classic_hill_matrix(a: &dyn Fn(i64) -> C64, n: usize) -> DMatrix<C64> {
    let n = n as i64;
    let d = (2 * n + 1) as usize;
    let mut h = DMatrix::<C64>::zeros(d, d);
    for j in -n..=n {
        for k in -n..=n {
            let diag = if j == k { (k * k) as f64 } else { 0.0 };
            h[((j + n) as usize, (k + n) as usize)] = (cplx(diag) + a(k - j)) / ((k * k) as f64 + 1.0);
        }
    }
    h
}

/// Default truncation ladder.
pub const LADDER: [usize; 5] = [8, 16, 32, 64, 128];

/// Both sides of `ρ^{-m} det(P - ρI) = σ (-1)^m β det H_ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousCheck {
    pub rho: [f64; 2],
    pub order: usize,
    pub characteristic: [f64; 2],
    /// Right-hand side using the raw truncated determinant.
    pub truncated_side: [f64; 2],
    /// Right-hand side using the tail-corrected, extrapolated determinant.
    pub extrapolated_side: [f64; 2],
    pub truncated_residual: f64,
    pub residual: f64,
}

/// Monodromy data shared by all checks of one system.
#[derive(Debug, Clone)]
pub struct MonodromyData {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub sigma: f64,
    pub beta: f64,
}

impl MonodromyData {
    pub fn new(sys: &ContinuousSystem) -> Result<Self> {
        let p = sys.monodromy(ODE_TOL)?;
        let q = sys.transport_monodromy(ODE_TOL)?;
        let sigma = crate::linalg::log_det_real(&q).sign();
        let beta = sys.beta(&q);
        Ok(MonodromyData { p, q, sigma, beta })
    }

    /// `ρ^{-m} det(P - ρI)`.
    pub fn characteristic(&self, rho: C64) -> C64 {
        let d = self.p.nrows();
        let m = (d / 2) as i32;
        let a = self.p.map(cplx) - DMatrix::<C64>::identity(d, d) * rho;
        log_det(&a).value() * rho.powi(-m)
    }

    /// `σ (-1)^m β`.
    pub fn factor(&self) -> f64 {
        let m = self.p.nrows() / 2;
        self.sigma * if m % 2 == 0 { 1.0 } else { -1.0 } * self.beta
    }
}

/// Richardson extrapolation of tail-corrected determinants at orders
/// `n/2` and `n`, whose leading error decays like `N^{-3}`.
pub fn extrapolated_det(data: &FourierData, n: usize, mu: C64) -> C64 {
    let fine = data.corrected_det(n, mu).value();
    if n < 2 {
        return fine;
    }
    let coarse = data.corrected_det(n / 2, mu).value();
    (fine * 8.0 - coarse) / 7.0
}

pub fn continuous_check(data: &FourierData, mono: &MonodromyData, rho: C64, n: usize) -> ContinuousCheck {
    let mu = exponent(rho, data.tau);
    let lhs = mono.characteristic(rho);
    let raw = data.truncated_det(n, mu).value() * mono.factor();
    let ext = extrapolated_det(data, n, mu) * mono.factor();
    ContinuousCheck {
        rho: [rho.re, rho.im],
        order: n,
        characteristic: [lhs.re, lhs.im],
        truncated_side: [raw.re, raw.im],
        extrapolated_side: [ext.re, ext.im],
        truncated_residual: (lhs - raw).norm() / (1.0 + lhs.norm()),
        residual: (lhs - ext).norm() / (1.0 + lhs.norm()),
    }
}

/// Index and nullity of the Jacobi form at `ρ` on the unit circle, once
/// they agree at two successive ladder orders.
pub fn rho_index_continuous(sys: &ContinuousSystem, rho: C64, ladder: &[usize]) -> Result<(Inertia, usize)> {
    if (rho.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("index requires |rho| = 1".into()));
    }
    let nmax = *ladder.iter().max().unwrap_or(&0);
    let data = FourierData::new(sys, nmax)?;
    let mu = exponent(rho, sys.tau);
    let mut prev: Option<Inertia> = None;
    for &n in ladder {
        let i = data.inertia(n, mu);
        if let Some(p) = prev {
            if p.negative == i.negative && p.zero == i.zero {
                return Ok((i, n));
            }
        }
        prev = Some(i);
    }
    Err(Error::NotStabilized(nmax))
}

/// Report of the continuous Hill identity over a `ρ` grid and a ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousHillReport {
    pub tau: f64,
    pub m: usize,
    pub orientation_sign: f64,
    pub beta: f64,
    pub multipliers: Vec<[f64; 2]>,
    pub ladder: Vec<usize>,
    pub checks: Vec<ContinuousCheck>,
    /// Largest extrapolated residual at each ladder order.
    pub max_residual_by_order: Vec<f64>,
    pub converged: bool,
    pub index: Option<usize>,
    pub nullity: Option<usize>,
}

pub fn continuous_report(sys: &ContinuousSystem, grid: &[C64], ladder: &[usize]) -> Result<ContinuousHillReport> {
    use rayon::prelude::*;
    let nmax = *ladder.iter().max().ok_or_else(|| Error::InvalidInput("empty ladder".into()))?;
    let data = FourierData::new(sys, nmax)?;
    let mono = MonodromyData::new(sys)?;
    let mut checks = Vec::new();
    let mut max_by_order = Vec::new();
    for &n in ladder {
        let c: Vec<ContinuousCheck> = grid.par_iter().map(|&r| continuous_check(&data, &mono, r, n)).collect();
        max_by_order.push(c.iter().map(|x| x.residual).fold(0.0, f64::max));
        checks.extend(c);
    }
    // Convergence: the extrapolated determinants at the two largest orders
    // agree to 1e-8 relative on every grid point.
    let converged = if ladder.len() >= 2 {
        let (a, b) = (ladder[ladder.len() - 2], ladder[ladder.len() - 1]);
        grid.iter().all(|&r| {
            let mu = exponent(r, sys.tau);
            let (x, y) = (extrapolated_det(&data, a, mu), extrapolated_det(&data, b, mu));
            (x - y).norm() <= 1e-8 * y.norm().max(1e-300) || (x - y).norm() <= 1e-12
        })
    } else {
        false
    };
    let idx = rho_index_continuous(sys, C64::new(1.0, 0.0), ladder).ok();
    let mut mults = crate::linalg::average_clusters(&crate::linalg::eigenvalues(&mono.p), crate::hill::CLUSTER_TOL);
    crate::linalg::sort_complex(&mut mults);
    Ok(ContinuousHillReport {
        tau: sys.tau,
        m: sys.m,
        orientation_sign: mono.sigma,
        beta: mono.beta,
        multipliers: mults.iter().map(|z| [z.re, z.im]).collect(),
        ladder: ladder.to_vec(),
        checks,
        max_residual_by_order: max_by_order,
        converged,
        index: idx.map(|(i, _)| i.negative),
        nullity: idx.map(|(i, _)| i.zero),
    })
}
