//! Adaptive three-stage Gauss–Legendre integration of linear matrix ODEs
//! `Y' = M(t) Y`, with step-doubling error control.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

const SQRT15: f64 = 3.872_983_346_207_417;

fn tableau() -> ([f64; 3], [[f64; 3]; 3], [f64; 3]) {
    let c = [0.5 - SQRT15 / 10.0, 0.5, 0.5 + SQRT15 / 10.0];
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - SQRT15 / 15.0, 5.0 / 36.0 - SQRT15 / 30.0],
        [5.0 / 36.0 + SQRT15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - SQRT15 / 24.0],
        [5.0 / 36.0 + SQRT15 / 30.0, 2.0 / 9.0 + SQRT15 / 15.0, 5.0 / 36.0],
    ];
    let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    (c, a, b)
}

/// One implicit Gauss step; for a linear right-hand side the stage
/// equations form a single linear system.
fn gauss_step(m: &dyn Fn(f64) -> DMatrix<f64>, t: f64, h: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (c, a, b) = tableau();
    let d = y.nrows();
    let ms: Vec<DMatrix<f64>> = c.iter().map(|ci| m(t + ci * h)).collect();
    let mut s = DMatrix::zeros(3 * d, 3 * d);
    let mut rhs = DMatrix::zeros(3 * d, y.ncols());
    for j in 0..3 {
        for l in 0..3 {
            let mut blk = -h * a[j][l] * &ms[j];
            if j == l {
                blk += DMatrix::identity(d, d);
            }
            s.view_mut((j * d, l * d), (d, d)).copy_from(&blk);
        }
        rhs.view_mut((j * d, 0), (d, y.ncols())).copy_from(&(&ms[j] * y));
    }
    let k = s.lu().solve(&rhs).ok_or_else(|| Error::IntegratorFailure("singular stage system".into()))?;
    let mut out = y.clone();
    for j in 0..3 {
        out += h * b[j] * k.view((j * d, 0), (d, y.ncols()));
    }
    Ok(out)
}

/// Integrates `Y' = M(t) Y` from `t0` to `t1` with relative tolerance `tol`.
pub fn integrate(m: &dyn Fn(f64) -> DMatrix<f64>, t0: f64, t1: f64, y0: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.clone());
    }
    let mut t = t0;
    let mut y = y0.clone();
    let mut h = span / 16.0;
    let mut steps = 0usize;
    while (t1 - t) * span.signum() > 0.0 {
        if (t + h - t1) * span.signum() > 0.0 {
            h = t1 - t;
        }
        let big = gauss_step(m, t, h, &y)?;
        let half = gauss_step(m, t, h / 2.0, &y)?;
        let fine = gauss_step(m, t + h / 2.0, h / 2.0, &half)?;
        let diff = &fine - &big;
        let err = diff.amax() / 63.0;
        let scale = tol * fine.amax().max(1.0);
        if !err.is_finite() {
            return Err(Error::IntegratorFailure(format!("non-finite state at t = {t}")));
        }
        if err <= scale {
            // Local extrapolation of the two half steps.
            y = &fine + diff / 63.0;
            t += h;
            if (t1 - t).abs() <= 1e-14 * span.abs() {
                t = t1;
            }
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (scale / err).powf(1.0 / 7.0)).clamp(0.2, 4.0) };
        h *= factor;
        steps += 1;
        if steps > 1_000_000 || h.abs() < 1e-14 * span.abs() {
            return Err(Error::IntegratorFailure(format!("step size underflow at t = {t}")));
        }
    }
    Ok(y)
}

/// Solution values at each of the increasing `times`, starting at `t0`.
pub fn integrate_dense(
    m: &dyn Fn(f64) -> DMatrix<f64>,
    t0: f64,
    times: &[f64],
    y0: &DMatrix<f64>,
    tol: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut y) = (t0, y0.clone());
    for &tn in times {
        y = integrate(m, t, tn, &y, tol)?;
        t = tn;
        out.push(y.clone());
    }
    Ok(out)
}
