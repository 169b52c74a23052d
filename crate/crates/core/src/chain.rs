//! Periodic block-tridiagonal chains `(A_i, B_i)`: the Jacobi data of a
//! periodic orbit of a discrete Lagrangian system.
//!
//! Indices are zero based: `a[i]` lives at orbit point `i` and `b[i]` is the
//! twist of step `i -> i+1`, stored so that `<B u, v> = v^T b[i] u` for
//! `u` at point `i` and `v` at point `i+1`.

use crate::error::{Error, Result};
use crate::linalg::{extended, log_det, log_det_real, rounded, ExtMatrix, LogDet, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl Chain {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        let c = Chain { a, b };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::InvalidInput("chain needs n >= 1 matching A and B blocks".into()));
        }
        let m = self.a[0].nrows();
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            if a.shape() != (m, m) || b.shape() != (m, m) {
                return Err(Error::InvalidInput(format!("block {i} has the wrong shape")));
            }
            if (a - a.transpose()).amax() > 1e-9 * (1.0 + a.amax()) {
                return Err(Error::InvalidInput(format!("A_{i} is not symmetric")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.a[0].nrows()
    }

    fn prev(&self, i: usize) -> usize {
        (i + self.n() - 1) % self.n()
    }

    /// Hessian of the action on periodic variations.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.rho_hessian(C64::new(1.0, 0.0)).map(|z| z.re)
    }

    /// Matrix of the twisted Hessian on sequences with `u_{i+n} = ρ u_i`.
    pub fn rho_hessian(&self, rho: C64) -> DMatrix<C64> {
        let (n, m) = (self.n(), self.m());
        let mut h = DMatrix::<C64>::zeros(n * m, n * m);
        let cplx = |x: f64| C64::new(x, 0.0);
        for i in 0..n {
            for r in 0..m {
                for c in 0..m {
                    h[(i * m + r, i * m + c)] += cplx(self.a[i][(r, c)]);
                }
            }
            let p = self.prev(i);
            let fp = if i == 0 { rho.inv() } else { C64::new(1.0, 0.0) };
            for r in 0..m {
                for c in 0..m {
                    h[(i * m + r, p * m + c)] -= fp * self.b[p][(r, c)];
                }
            }
            let nx = (i + 1) % n;
            let fnx = if i == n - 1 { rho } else { C64::new(1.0, 0.0) };
            for r in 0..m {
                for c in 0..m {
                    h[(i * m + r, nx * m + c)] -= fnx * self.b[i][(c, r)];
                }
            }
        }
        h
    }

    /// Transfer matrix `(u_{i-1}, u_i) -> (u_i, u_{i+1})`.
    pub fn transfer(&self, i: usize) -> Result<DMatrix<f64>> {
        let m = self.m();
        let bt_inv = self.b[i]
            .transpose()
            .try_inverse()
            .ok_or(Error::SingularTwist { step: i, det: 0.0, scale: self.b[i].amax() })?;
        let mut t = DMatrix::zeros(2 * m, 2 * m);
        t.view_mut((0, m), (m, m)).copy_from(&DMatrix::identity(m, m));
        t.view_mut((m, 0), (m, m)).copy_from(&(-&bt_inv * &self.b[self.prev(i)]));
        t.view_mut((m, m), (m, m)).copy_from(&(&bt_inv * &self.a[i]));
        Ok(t)
    }

    /// Transfer matrix with its blocks refined to double-double precision.
    pub fn transfer_extended(&self, i: usize) -> Result<ExtMatrix> {
        let m = self.m();
        let bt = self.b[i].transpose();
        let singular = || Error::SingularTwist { step: i, det: 0.0, scale: self.b[i].amax() };
        let lu = bt.clone().lu();
        let mut rhs = DMatrix::zeros(m, 2 * m);
        rhs.columns_mut(0, m).copy_from(&(-&self.b[self.prev(i)]));
        rhs.columns_mut(m, m).copy_from(&self.a[i]);
        let (rhs, bt) = (extended(&rhs), extended(&bt));
        let mut x = extended(&lu.solve(&rounded(&rhs)).ok_or_else(singular)?);
        for _ in 0..2 {
            let r = &rhs - &bt * &x;
            x += extended(&lu.solve(&rounded(&r)).ok_or_else(singular)?);
        }
        let mut t = extended(&DMatrix::zeros(2 * m, 2 * m));
        t.view_mut((0, m), (m, m)).copy_from(&extended(&DMatrix::identity(m, m)));
        t.view_mut((m, 0), (m, 2 * m)).copy_from(&x);
        Ok(t)
    }

    /// Monodromy on `(u_{-1}, u_0) = (u_{n-1}, u_0)`, with the product
    /// accumulated in double-double precision.
    pub fn monodromy_extended(&self) -> Result<ExtMatrix> {
        let mut p = extended(&DMatrix::identity(2 * self.m(), 2 * self.m()));
        for i in 0..self.n() {
            p = self.transfer_extended(i)? * p;
        }
        Ok(p)
    }

    pub fn monodromy(&self) -> Result<DMatrix<f64>> {
        Ok(rounded(&self.monodromy_extended()?))
    }

    pub fn twist_log_dets(&self) -> Vec<LogDet> {
        self.b.iter().map(log_det_real).collect()
    }

    /// Product of the twist determinants.
    pub fn twist_product(&self) -> LogDet {
        self.twist_log_dets().iter().fold(LogDet::ONE, |a, b| a.mul(b))
    }

    /// `sign ∏ det B_i`.
    pub fn twist_sign(&self) -> f64 {
        self.twist_product().sign()
    }

    /// `det B_ρ = ρ^{-m} (-1)^m ∏ det B_i`.
    pub fn det_b_rho(&self, rho: C64) -> LogDet {
        let m = self.m() as i32;
        let f = LogDet::from_value(rho).powi(-m);
        let s = if m % 2 == 0 { LogDet::ONE } else { LogDet::ONE.neg() };
        self.twist_product().mul(&f).mul(&s)
    }

    pub fn det_rho_hessian(&self, rho: C64) -> LogDet {
        log_det(&self.rho_hessian(rho))
    }

    /// The chain traversed twice.
    pub fn doubled(&self) -> Chain {
        let mut a = self.a.clone();
        a.extend(self.a.iter().cloned());
        let mut b = self.b.clone();
        b.extend(self.b.iter().cloned());
        Chain { a, b }
    }

    /// Symplectic form on `(u_{-1}, u_0)` pairs preserved by the monodromy:
    /// `ω((a0,a1),(b0,b1)) = <B a0, b1> - <B b0, a1>` with `B = B_{n-1}`.
    pub fn symplectic_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let b = &self.b[self.n() - 1];
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        j.view_mut((0, m), (m, m)).copy_from(&b.transpose());
        j.view_mut((m, 0), (m, m)).copy_from(&(-b));
        j
    }
}
