//! Dense linear algebra helpers: log-magnitude determinants, Hermitian
//! inertia, null spaces and eigenvalue clustering.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

pub type C64 = Complex64;

/// Real matrix in double-double precision.
pub type ExtMatrix = DMatrix<TwoFloat>;

/// Determinant stored as `exp(log_abs) * phase`, so products of many
/// blocks neither overflow nor underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: [f64; 2],
}

impl LogDet {
    pub const ONE: LogDet = LogDet { log_abs: 0.0, phase: [1.0, 0.0] };
    pub const ZERO: LogDet = LogDet { log_abs: f64::NEG_INFINITY, phase: [1.0, 0.0] };

    pub fn from_value(z: C64) -> Self {
        if z == C64::new(0.0, 0.0) {
            return Self::ZERO;
        }
        let n = z.norm();
        let p = z / n;
        LogDet { log_abs: n.ln(), phase: [p.re, p.im] }
    }

    pub fn from_real(x: f64) -> Self {
        Self::from_value(C64::new(x, 0.0))
    }

    pub fn phase(&self) -> C64 {
        C64::new(self.phase[0], self.phase[1])
    }

    pub fn is_zero(&self) -> bool {
        self.log_abs == f64::NEG_INFINITY
    }

    pub fn value(&self) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        self.phase() * self.log_abs.exp()
    }

    /// Real part of the value, meaningful when the phase is (close to) real.
    pub fn real(&self) -> f64 {
        self.value().re
    }

    /// Sign of the real part of the phase; 0 for a zero determinant.
    pub fn sign(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else if self.phase[0] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn mul(&self, other: &LogDet) -> LogDet {
        let p = self.phase() * other.phase();
        let p = p / p.norm();
        LogDet { log_abs: self.log_abs + other.log_abs, phase: [p.re, p.im] }
    }

    pub fn div(&self, other: &LogDet) -> LogDet {
        let p = self.phase() / other.phase();
        let p = p / p.norm();
        LogDet { log_abs: self.log_abs - other.log_abs, phase: [p.re, p.im] }
    }

    pub fn powi(&self, k: i32) -> LogDet {
        if self.is_zero() {
            return if k == 0 { Self::ONE } else { *self };
        }
        let p = self.phase().powi(k);
        let p = p / p.norm();
        LogDet { log_abs: self.log_abs * k as f64, phase: [p.re, p.im] }
    }

    pub fn neg(&self) -> LogDet {
        LogDet { log_abs: self.log_abs, phase: [-self.phase[0], -self.phase[1]] }
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// LU with partial pivoting accumulating log|pivot| and the phase.
pub fn log_det(m: &DMatrix<C64>) -> LogDet {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let n = m.nrows();
    let mut a = m.clone();
    let mut log_abs = 0.0;
    let mut phase = C64::new(1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = a[(k, k)].norm();
        for r in k + 1..n {
            let v = a[(r, k)].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return LogDet::ZERO;
        }
        if piv != k {
            a.swap_rows(k, piv);
            phase = -phase;
        }
        let p = a[(k, k)];
        log_abs += best.ln();
        phase *= p / best;
        for r in k + 1..n {
            let f = a[(r, k)] / p;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in k + 1..n {
                let v = a[(k, c)];
                a[(r, c)] -= f * v;
            }
        }
    }
    let phase = phase / phase.norm();
    LogDet { log_abs, phase: [phase.re, phase.im] }
}

pub fn extended(m: &DMatrix<f64>) -> ExtMatrix {
    m.map(TwoFloat::from)
}

pub fn rounded(m: &ExtMatrix) -> DMatrix<f64> {
    m.map(|x| x.hi())
}

/// Reciprocal refined by one Newton step; `TwoFloat` division alone is only
/// accurate to double precision.
fn recip(x: TwoFloat) -> TwoFloat {
    let r = TwoFloat::from(1.0 / x.hi());
    r + r * (TwoFloat::from(1.0) - x * r)
}

fn cdiv(a: Complex<TwoFloat>, b: Complex<TwoFloat>) -> Complex<TwoFloat> {
    let inv = recip(b.re * b.re + b.im * b.im);
    Complex::new((a.re * b.re + a.im * b.im) * inv, (a.im * b.re - a.re * b.im) * inv)
}

/// `det(M - ρI)` with the elimination carried out in double-double
/// precision. The determinant of a large monodromy loses its small
/// eigenvalues to rounding in plain double precision.
pub fn shifted_log_det(m: &ExtMatrix, rho: C64) -> LogDet {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let n = m.nrows();
    let zero = TwoFloat::from(0.0);
    let mut a: DMatrix<Complex<TwoFloat>> = m.map(|x| Complex::new(x, zero));
    for k in 0..n {
        a[(k, k)].re -= rho.re;
        a[(k, k)].im -= rho.im;
    }
    let approx = |z: &Complex<TwoFloat>| C64::new(z.re.hi(), z.im.hi());
    let mut log_abs = 0.0;
    let mut phase = C64::new(1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = approx(&a[(k, k)]).norm();
        for r in k + 1..n {
            let v = approx(&a[(r, k)]).norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return LogDet::ZERO;
        }
        if piv != k {
            a.swap_rows(k, piv);
            phase = -phase;
        }
        let p = a[(k, k)];
        let pa = approx(&p);
        log_abs += pa.norm().ln();
        phase *= pa / pa.norm();
        for r in k + 1..n {
            let f = cdiv(a[(r, k)], p);
            for c in k + 1..n {
                let v = a[(k, c)];
                a[(r, c)] = a[(r, c)] - f * v;
            }
        }
    }
    let phase = phase / phase.norm();
    LogDet { log_abs, phase: [phase.re, phase.im] }
}

pub fn log_det_real(m: &DMatrix<f64>) -> LogDet {
    log_det(&to_complex(m))
}

pub fn det_real(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    log_det_real(m).real()
}

/// Counts of negative, null and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl Inertia {
    /// Eigenvalues with |λ| < rel_tol * max|λ| count as null.
    pub fn from_eigenvalues(eigs: &[f64], rel_tol: f64) -> Self {
        let scale = eigs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let thr = rel_tol * scale.max(f64::MIN_POSITIVE);
        let mut out = Inertia { negative: 0, zero: 0, positive: 0 };
        for &e in eigs {
            if e.abs() < thr || scale == 0.0 {
                out.zero += 1;
            } else if e < 0.0 {
                out.negative += 1;
            } else {
                out.positive += 1;
            }
        }
        out
    }
}

/// Default relative threshold below which an eigenvalue counts as null.
pub const NULL_TOL: f64 = 1e-9;

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

pub fn hermitian_inertia(m: &DMatrix<C64>, rel_tol: f64) -> Inertia {
    Inertia::from_eigenvalues(&hermitian_eigenvalues(m), rel_tol)
}

pub fn symmetric_inertia(m: &DMatrix<f64>, rel_tol: f64) -> Inertia {
    Inertia::from_eigenvalues(&symmetric_eigenvalues(m), rel_tol)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Orthonormal basis (as columns) of the null space of `m`; singular values
/// below `rel_tol * σ_max` count as zero.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to at least square so the SVD returns a full right basis.
    let rows = r.max(c);
    let mut a = DMatrix::zeros(rows, c);
    a.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
    let thr = rel_tol * smax;
    let idx: Vec<usize> = (0..c).filter(|&i| svd.singular_values[i] <= thr || smax == 0.0).collect();
    let mut out = DMatrix::zeros(c, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

/// Orthonormal basis of the Euclidean orthogonal complement of the column
/// span of `cols`.
pub fn orthogonal_complement(cols: &DMatrix<f64>) -> DMatrix<f64> {
    null_space(&cols.transpose(), 1e-12)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
    svd.solve(b, rel_tol * smax).expect("SVD with U and V")
}

/// Replaces each cluster of eigenvalues closer than `tol * max(1, |λ|)` by
/// the cluster mean. The mean of a cluster is well conditioned even when the
/// individual members of a defective cluster are not.
pub fn average_clusters(eigs: &[C64], tol: f64) -> Vec<C64> {
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        l[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = tol * eigs[i].norm().max(eigs[j].norm()).max(1.0);
            if (eigs[i] - eigs[j]).norm() < s {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b] = a;
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut label, i)).collect();
    let mut out = eigs.to_vec();
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| roots[j] == roots[i]).collect();
        let sum = members.iter().fold(C64::new(0.0, 0.0), |a, &j| a + eigs[j]);
        out[i] = sum / members.len() as f64;
    }
    out
}

/// Eigenvalues of a real square matrix, sorted by modulus then argument.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut e: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut e);
    e
}

pub fn sort_complex(e: &mut [C64]) {
    e.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then(a.arg().partial_cmp(&b.arg()).unwrap())
    });
}

/// Block diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

pub fn stack(vs: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = vs.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(n);
    let mut i = 0;
    for v in vs {
        out.rows_mut(i, v.len()).copy_from(v);
        i += v.len();
    }
    out
}
