//! Routh reduction of a periodic chain along an isotropic space `Γ` of
//! periodic solutions, and the index bookkeeping between the full and the
//! reduced Hessians.

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::hill::{hill_check, HillCheck};
use crate::linalg::{
    log_det, log_det_real, lstsq, null_space, orthogonal_complement, singular_values, shifted_log_det, symmetric_inertia, Inertia, LogDet, C64,
    NULL_TOL,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const KERNEL_TOL: f64 = 1e-9;

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn is_singular(m: &DMatrix<f64>, rel: f64) -> Option<f64> {
    let sv = singular_values(m);
    let (big, small) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    (small <= rel * big.max(1.0)).then_some(small)
}

/// Flips columns so that each one's largest entry is positive.
fn canonical_signs(mut e: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in e.column_iter_mut() {
        let big = col.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() + 1e-12 { x } else { a });
        if big < 0.0 {
            col.neg_mut();
        }
    }
    e
}

/// Orthonormal basis of the periodic solutions of the chain, as columns of
/// an `nm × k` matrix.
pub fn periodic_solutions(chain: &Chain) -> DMatrix<f64> {
    null_space(&chain.hessian(), KERNEL_TOL)
}

/// Reduced chain together with the reduction data. `reduced` is `None` when
/// `k = m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRouth {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// `W_i`: the basis solutions at point `i`, as `m × k` columns.
    pub gamma: Vec<DMatrix<f64>>,
    /// `G_i = (<B_i w_i^α, w_{i+1}^β>)`.
    pub g: Vec<DMatrix<f64>>,
    pub g_bar: DMatrix<f64>,
    /// Orthonormal bases of `{u : <B_{i-1} w_{i-1}^α, u> = 0}`.
    pub complements: Vec<DMatrix<f64>>,
    /// Correction forms `C_i`.
    pub corrections: Vec<DMatrix<f64>>,
    pub reduced: Option<Chain>,
    pub kernel_residual: f64,
    pub isotropy_defect: f64,
}

/// Reduces `chain` along the periodic solutions in the columns of `gamma`.
pub fn linear_routh(chain: &Chain, gamma: &DMatrix<f64>) -> Result<LinearRouth> {
    let (n, m) = (chain.n(), chain.m());
    let k = gamma.ncols();
    if gamma.nrows() != n * m || k > m {
        return Err(Error::InvalidInput(format!("symmetry basis must be {} x k with k <= {m}", n * m)));
    }
    let h = chain.hessian();
    let kernel_residual = (&h * gamma).amax() / (h.amax().max(1.0) * gamma.amax().max(1e-300));
    if kernel_residual > KERNEL_TOL {
        return Err(Error::InvalidInput(format!("basis is not a periodic solution (residual {kernel_residual:.3e})")));
    }
    let w: Vec<DMatrix<f64>> = (0..n).map(|i| gamma.rows(i * m, m).into_owned()).collect();
    let nx = |i: usize| (i + 1) % n;
    let pv = |i: usize| (i + n - 1) % n;
    let raw: Vec<DMatrix<f64>> = (0..n).map(|i| w[i].transpose() * chain.b[i].transpose() * &w[nx(i)]).collect();
    let scale = raw.iter().map(|g| g.amax()).fold(0.0, f64::max).max(1e-300);
    let isotropy_defect = raw.iter().map(|g| (g - g.transpose()).amax()).fold(0.0, f64::max) / scale;
    if isotropy_defect > KERNEL_TOL {
        return Err(Error::NonIsotropic(isotropy_defect));
    }
    let g: Vec<DMatrix<f64>> = raw.iter().map(sym).collect();
    let mut g_inv = Vec::with_capacity(n);
    for (i, gi) in g.iter().enumerate() {
        if k > 0 && is_singular(gi, 1e-10).is_some() {
            return Err(Error::ConditionAFailed(i));
        }
        g_inv.push(gi.clone().try_inverse().ok_or(Error::ConditionAFailed(i))?);
    }
    let g_bar = g_inv.iter().fold(DMatrix::zeros(k, k), |acc, x| acc + x);
    if k > 0 && is_singular(&g_bar, 1e-10).is_some() {
        return Err(Error::ConditionBFailed);
    }
    let complements: Vec<DMatrix<f64>> = (0..n)
        .map(|i| if k == 0 { DMatrix::identity(m, m) } else { canonical_signs(orthogonal_complement(&(&chain.b[pv(i)] * &w[pv(i)]))) })
        .collect();
    let corrections: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let bw = chain.b[i].transpose() * &w[nx(i)];
            sym(&(&bw * &g_inv[i] * bw.transpose()))
        })
        .collect();
    let reduced = if k == m {
        None
    } else {
        let a = (0..n).map(|i| sym(&(complements[i].transpose() * (&chain.a[i] - &corrections[i]) * &complements[i]))).collect();
        let b = (0..n).map(|i| complements[nx(i)].transpose() * &chain.b[i] * &complements[i]).collect();
        Some(Chain::new(a, b)?)
    };
    Ok(LinearRouth { n, m, k, gamma: w, g, g_bar, complements, corrections, reduced, kernel_residual, isotropy_defect })
}

impl LinearRouth {
    fn g_inv(&self, i: usize) -> DMatrix<f64> {
        self.g[i].clone().try_inverse().expect("checked at construction")
    }

    /// `Π_i u`: the component of `u` in the reduced space at point `i`.
    pub fn project(&self, chain: &Chain, i: usize, u: &DVector<f64>) -> DVector<f64> {
        if self.k == 0 {
            return u.clone();
        }
        let p = (i + self.n - 1) % self.n;
        let c = (&chain.b[p] * &self.gamma[p]).transpose() * u;
        let lambda = self.g_inv(p) * c;
        u - &self.gamma[i] * lambda
    }

    /// Reduced coordinates of `Π u` for a sequence stacked as an `nm` vector.
    pub fn reduce_sequence(&self, chain: &Chain, u: &DVector<f64>) -> DVector<f64> {
        let (n, m, r) = (self.n, self.m, self.m - self.k);
        let mut out = DVector::zeros(n * r);
        for i in 0..n {
            let v = self.project(chain, i, &u.rows(i * m, m).into_owned());
            out.rows_mut(i * r, r).copy_from(&(self.complements[i].transpose() * v));
        }
        out
    }

    /// Sequence `v_i = E_i a_i` in the full space from reduced coordinates.
    pub fn embed_reduced(&self, a: &DVector<f64>) -> DVector<f64> {
        let (n, m, r) = (self.n, self.m, self.m - self.k);
        let mut out = DVector::zeros(n * m);
        for i in 0..n {
            out.rows_mut(i * m, m).copy_from(&(&self.complements[i] * a.rows(i * r, r)));
        }
        out
    }

    /// Linear integrals `I_i(u_i, u_{i+1})` of the variational system.
    pub fn integrals(&self, chain: &Chain, i: usize, ui: &DVector<f64>, unext: &DVector<f64>) -> DVector<f64> {
        let nx = (i + 1) % self.n;
        self.gamma[i].transpose() * chain.b[i].transpose() * unext - self.gamma[nx].transpose() * &chain.b[i] * ui
    }

    /// `k × nm` matrix of the functionals `u ↦ Σ_i G_i^{-1} I_i(u_i, u_{i+1})`.
    pub fn level_functionals(&self, chain: &Chain) -> DMatrix<f64> {
        let (n, m, k) = (self.n, self.m, self.k);
        let mut d = DMatrix::zeros(k, n * m);
        for i in 0..n {
            let nx = (i + 1) % n;
            let gi = self.g_inv(i);
            let on_next = &gi * self.gamma[i].transpose() * chain.b[i].transpose();
            let on_this = -(&gi * self.gamma[nx].transpose() * &chain.b[i]);
            let mut view = d.columns_mut(nx * m, m);
            view += on_next;
            let mut view = d.columns_mut(i * m, m);
            view += on_this;
        }
        d
    }

    /// Matrix whose columns span `Z = {(λ_i · w_i)}`.
    pub fn z_basis(&self) -> DMatrix<f64> {
        let (n, m, k) = (self.n, self.m, self.k);
        let mut z = DMatrix::zeros(n * m, n * k);
        for i in 0..n {
            z.view_mut((i * m, i * k), (m, k)).copy_from(&self.gamma[i]);
        }
        z
    }

    /// Lifts `v` to a sequence `u = v + (λ_i w_i)` with all integrals equal
    /// to a common value `c`; returns `(u, c)`.
    pub fn lift_to_level(&self, chain: &Chain, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (n, m, k) = (self.n, self.m, self.k);
        let seq = |i: usize| v.rows((i % n) * m, m).into_owned();
        let ints: Vec<DVector<f64>> = (0..n).map(|i| self.integrals(chain, i, &seq(i), &seq(i + 1))).collect();
        let kappa = self.g_bar.clone().try_inverse().expect("checked at construction");
        let weighted = (0..n).fold(DVector::zeros(k), |acc, i| acc + self.g_inv(i) * &ints[i]);
        let c = kappa * weighted;
        let mut u = v.clone();
        let mut lambda = DVector::zeros(k);
        for i in 0..n {
            let mut block = u.rows_mut(i * m, m);
            block += &self.gamma[i] * &lambda;
            lambda += self.g_inv(i) * (&c - &ints[i]);
        }
        (u, c)
    }

    /// Projects `v` onto the space where all integrals vanish.
    pub fn project_to_zero_level(&self, chain: &Chain, v: &DVector<f64>) -> DVector<f64> {
        let d = self.level_functionals(chain);
        let dv = DMatrix::from_column_slice(d.nrows(), 1, (&d * v).as_slice());
        // Least squares, since the functionals may be dependent (they vanish
        // identically when k = m).
        let coeffs = lstsq(&(&d * d.transpose()), &dv, 1e-12);
        let corr = d.transpose() * coeffs.column(0);
        self.lift_to_level(chain, &(v - corr)).0
    }

    /// Basis-change factor `∏ det[E_i | W_i]²`.
    pub fn frame_factor(&self) -> LogDet {
        let mut f = LogDet::ONE;
        for i in 0..self.n {
            let mut t = DMatrix::zeros(self.m, self.m);
            t.columns_mut(0, self.m - self.k).copy_from(&self.complements[i]);
            t.columns_mut(self.m - self.k, self.k).copy_from(&self.gamma[i]);
            let d = log_det_real(&t);
            f = f.mul(&d).mul(&d);
        }
        f
    }
}

/// `det` of the twisted form `Σ <G_i Δλ_i, Δλ_i>` on `λ_{i+n} = ρ λ_i`:
/// `(2 - ρ - ρ^{-1})^k ∏ det G_i`.
pub fn g_rho_determinant(g: &[DMatrix<f64>], rho: C64) -> LogDet {
    let k = g.first().map(|x| x.nrows()).unwrap_or(0) as i32;
    let base = LogDet::from_value(C64::new(2.0, 0.0) - rho - rho.inv()).powi(k);
    g.iter().fold(base, |acc, gi| acc.mul(&log_det_real(gi)))
}

/// Generalized unit eigendata of the monodromy relative to `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEigendata {
    pub k: usize,
    pub kernel_dim: usize,
    pub generalized_dim: usize,
    /// Basis solutions as `(u_{-1}, u_0)` pairs.
    pub w: DMatrix<f64>,
    /// Conjugate vectors with `ω(w^α, q_β) = δ`, `ω(q_α, q_β) = 0`.
    pub q: DMatrix<f64>,
    /// `P q_α = q_α + s_{αβ} w^β`.
    pub s: DMatrix<f64>,
    pub s_asymmetry: f64,
    pub a: DMatrix<f64>,
    pub a_perp: DMatrix<f64>,
    pub condition_c: bool,
    pub a_perp_smallest_singular: f64,
}

/// Null space with singular values below `KERNEL_TOL * scale` counted as zero.
fn scaled_null_space(m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let smax = singular_values(m).first().copied().unwrap_or(0.0);
    if smax <= KERNEL_TOL * scale {
        return DMatrix::identity(m.ncols(), m.ncols());
    }
    null_space(m, KERNEL_TOL * scale / smax)
}

pub fn generalized_unit_eigendata(chain: &Chain, routh: &LinearRouth) -> Result<UnitEigendata> {
    let (n, m, k) = (routh.n, routh.m, routh.k);
    let p = chain.monodromy()?;
    let d = 2 * m;
    let pm = &p - DMatrix::<f64>::identity(d, d);
    let scale = p.amax().max(1.0);
    let kernel = scaled_null_space(&pm, scale).ncols();
    let mut power = pm.clone();
    let mut dims = vec![kernel];
    for j in 1..d {
        power = &power * &pm;
        let dj = scaled_null_space(&power, scale.powi(j as i32 + 1)).ncols();
        let done = dj == *dims.last().unwrap();
        dims.push(dj);
        if done {
            break;
        }
    }
    let generalized = *dims.last().unwrap();
    if kernel != k || generalized != 2 * k || dims.get(1).copied().unwrap_or(kernel) != 2 * k {
        return Err(Error::ExcessDegeneracy { expected: 2 * k, found: generalized.max(kernel) });
    }
    let mut w = DMatrix::zeros(d, k);
    w.rows_mut(0, m).copy_from(&routh.gamma[n - 1]);
    w.rows_mut(m, m).copy_from(&routh.gamma[0]);
    let j = chain.symplectic_matrix();
    let iso = (w.transpose() * &j * &w).amax();
    if iso > KERNEL_TOL * (1.0 + j.amax() * w.amax() * w.amax()) {
        return Err(Error::NonIsotropic(iso));
    }
    let nbasis = scaled_null_space(&(&pm * &pm), scale * scale);
    let within = null_space(&(w.transpose() * &nbasis), 1e-12);
    let comp = &nbasis * within;
    let pairing = (w.transpose() * &j * &comp).try_inverse().ok_or(Error::ExcessDegeneracy { expected: 2 * k, found: 2 * k + 1 })?;
    let mut q = &comp * pairing;
    let skew = q.transpose() * &j * &q;
    q += &w * (skew * 0.5);
    let x = crate::linalg::lstsq(&w, &(&pm * &q), 1e-12);
    let s_raw = x.transpose();
    let s_asymmetry = (&s_raw - s_raw.transpose()).amax() / s_raw.amax().max(1.0);
    let s = sym(&s_raw);
    let kappa = routh.g_bar.clone().try_inverse().ok_or(Error::ConditionBFailed)?;
    let a = sym(&(&s * &kappa * &s - &s));
    let a_perp = &s - &routh.g_bar;
    let sv = singular_values(&a_perp);
    let smallest = sv.last().copied().unwrap_or(f64::INFINITY);
    let scale = s.amax().max(routh.g_bar.amax()).max(1.0);
    Ok(UnitEigendata {
        k,
        kernel_dim: kernel,
        generalized_dim: generalized,
        w,
        q,
        s,
        s_asymmetry,
        a,
        a_perp,
        condition_c: k == 0 || smallest > 1e-9 * scale,
        a_perp_smallest_singular: smallest,
    })
}

/// Solutions `q_α` of the variational system as sequences `q_0, ..., q_n`.
fn conjugate_sequences(chain: &Chain, eig: &UnitEigendata) -> Result<Vec<Vec<DVector<f64>>>> {
    let (n, m) = (chain.n(), chain.m());
    let mut out = Vec::new();
    for a in 0..eig.k {
        let col = eig.q.column(a);
        let mut prev = col.rows(0, m).into_owned();
        let mut cur = col.rows(m, m).into_owned();
        let mut seq = vec![cur.clone()];
        for i in 0..n {
            let p = (i + n - 1) % n;
            let rhs = &chain.a[i] * &cur - &chain.b[p] * &prev;
            let next = chain.b[i].transpose().lu().solve(&rhs).ok_or(Error::SingularTwist { step: i, det: 0.0, scale: 0.0 })?;
            prev = cur;
            cur = next;
            seq.push(cur.clone());
        }
        out.push(seq);
    }
    Ok(out)
}

/// Periodic corrections `q̂_α = q_α - ν_α · w` with constant integrals.
fn hat_q(routh: &LinearRouth, eig: &UnitEigendata, qs: &[Vec<DVector<f64>>]) -> Vec<DVector<f64>> {
    let (n, m, k) = (routh.n, routh.m, routh.k);
    let kappa = routh.g_bar.clone().try_inverse().expect("condition B");
    qs.iter()
        .enumerate()
        .map(|(a, seq)| {
            let mut nu = DVector::<f64>::zeros(k);
            let mut out = DVector::zeros(n * m);
            for i in 0..n {
                out.rows_mut(i * m, m).copy_from(&(&seq[i] - &routh.gamma[i] * &nu));
                let step = (&eig.s * &kappa * routh.g_inv(i)).row(a).transpose();
                nu += step;
            }
            out
        })
        .collect()
}

/// Residuals of the orthogonality relations between the conjugate vectors
/// and the zero-level space, in the full and the reduced system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityChecks {
    /// `max |h(q̂_α, u)|` over `u` in the zero-level space, relative.
    pub hat_q_orthogonal: f64,
    /// `max |h(q̂_α, q̂_β) - a_{αβ}|`, relative.
    pub hat_q_gram: f64,
    pub perp_q_orthogonal: f64,
    pub perp_q_gram: f64,
    /// Periodicity defect of `q̂`.
    pub hat_q_periodicity: f64,
}

/// Evaluates the orthogonality relations on zero-level sequences obtained by
/// projecting each of `samples` (arbitrary `nm` vectors).
pub fn orthogonality_checks(chain: &Chain, routh: &LinearRouth, eig: &UnitEigendata, samples: &[DVector<f64>]) -> Result<OrthogonalityChecks> {
    let (n, m) = (routh.n, routh.m);
    let qs = conjugate_sequences(chain, eig)?;
    let hat = hat_q(routh, eig, &qs);
    let kappa = routh.g_bar.clone().try_inverse().ok_or(Error::ConditionBFailed)?;
    let mut periodicity = 0.0f64;
    for (a, seq) in qs.iter().enumerate() {
        let nu_total = (&eig.s * &kappa * &routh.g_bar).row(a).transpose();
        let end = &seq[n] - &routh.gamma[0] * nu_total;
        periodicity = periodicity.max((end - hat[a].rows(0, m)).amax() / (1.0 + seq[n].amax()));
    }
    let h = chain.hessian();
    let hs = h.amax().max(1.0);
    let us: Vec<DVector<f64>> = samples.iter().map(|v| routh.project_to_zero_level(chain, v)).collect();
    let mut out = OrthogonalityChecks { hat_q_orthogonal: 0.0, hat_q_gram: 0.0, perp_q_orthogonal: 0.0, perp_q_gram: 0.0, hat_q_periodicity: periodicity };
    for (a, qa) in hat.iter().enumerate() {
        for u in &us {
            let r = qa.dot(&(&h * u)).abs() / (hs * qa.norm() * u.norm()).max(1e-300);
            out.hat_q_orthogonal = out.hat_q_orthogonal.max(r);
        }
        for (b, qb) in hat.iter().enumerate() {
            let r = (qa.dot(&(&h * qb)) - eig.a[(a, b)]).abs() / (hs * qa.norm() * qb.norm()).max(1.0);
            out.hat_q_gram = out.hat_q_gram.max(r);
        }
    }
    if let Some(red) = &routh.reduced {
        let hr = red.hessian();
        let hrs = hr.amax().max(1.0);
        // Normalized by the unreduced vectors, since q⊥ may vanish.
        let (perp, perp_scale): (Vec<DVector<f64>>, Vec<f64>) = qs
            .iter()
            .map(|seq| {
                let mut full = DVector::zeros(n * m);
                for i in 0..n {
                    full.rows_mut(i * m, m).copy_from(&seq[i]);
                }
                (routh.reduce_sequence(chain, &full), full.norm())
            })
            .unzip();
        let ups: Vec<DVector<f64>> = us.iter().map(|u| routh.reduce_sequence(chain, u)).collect();
        for (a, qa) in perp.iter().enumerate() {
            for u in &ups {
                let r = qa.dot(&(&hr * u)).abs() / (hrs * perp_scale[a] * u.norm()).max(1e-300);
                out.perp_q_orthogonal = out.perp_q_orthogonal.max(r);
            }
            for (b, qb) in perp.iter().enumerate() {
                let r = (qa.dot(&(&hr * qb)) - eig.a_perp[(a, b)]).abs() / (hrs * perp_scale[a] * perp_scale[b]).max(1.0);
                out.perp_q_gram = out.perp_q_gram.max(r);
            }
        }
    } else {
        // No reduced space: q⊥ = 0 and the reduced form vanishes, so the
        // relation reads a⊥ = 0.
        out.perp_q_gram = eig.a_perp.amax() / eig.s.amax().max(1.0);
    }
    Ok(out)
}

/// Integer index identities between the full and reduced Hessians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRelations {
    pub index: usize,
    pub nullity: usize,
    /// Index of `h` restricted to `Z`.
    pub index_on_z: usize,
    pub sum_index_g: usize,
    pub index_g_bar: usize,
    pub index_reduced: usize,
    pub nullity_reduced: usize,
    pub index_a: usize,
    pub index_a_perp: usize,
    /// Index of the form `b(v, w) = ω((P - I)v, w)`, equal to `ind s`.
    pub index_b: usize,
    pub sigma: f64,
    pub sigma_reduced: f64,
    /// Whether `A⊥` is nonsingular. The identities below marked optional
    /// are only evaluated when it is.
    pub condition_c: bool,
    /// `ind h - ind h|_Z - ind h⊥ = ind A - ind A⊥`.
    pub index_difference: Option<bool>,
    /// `ind h|_Z = Σ ind G_i - ind Ḡ`.
    pub z_index: bool,
    /// `ind h ≡ ind h⊥ + ind h|_Z + ind b + ind Ḡ (mod 2)`.
    pub parity_with_g_bar: Option<bool>,
    /// `ind h ≡ ind h⊥ + Σ ind G_i + ind b (mod 2)`.
    pub parity_with_g: Option<bool>,
    /// `σ (-1)^{ind h} = σ⊥ (-1)^{ind h⊥ + ind b}`.
    pub sign_identity: Option<bool>,
    /// `σ⊥ = σ (-1)^{Σ ind G_i}`.
    pub reduced_sign: bool,
    /// Hill identity of the reduced chain at `ρ = 1`.
    pub reduced_hill: Option<HillCheck>,
    /// Largest residual of `det(P - ρI) = (1 - ρ)^{2k} det(P̃ - ρI)` on the grid.
    pub factorization_residual: f64,
}

fn inertia(m: &DMatrix<f64>) -> Inertia {
    if m.nrows() == 0 {
        return Inertia { negative: 0, zero: 0, positive: 0 };
    }
    symmetric_inertia(&sym(m), NULL_TOL)
}

fn parity(x: usize) -> i32 {
    if x % 2 == 0 { 1 } else { -1 }
}

/// Residuals of `det(P - ρI) = (1 - ρ)^{2k} det(P̃ - ρI)` at each grid point,
/// relative to `1 + |det(P - ρI)|`.
pub fn factorization_residuals(chain: &Chain, routh: &LinearRouth, grid: &[C64]) -> Result<Vec<f64>> {
    let p = chain.monodromy_extended()?;
    let p_red = routh.reduced.as_ref().map(|r| r.monodromy_extended()).transpose()?;
    Ok(grid
        .iter()
        .map(|&rho| {
            let lhs = shifted_log_det(&p, rho).value();
            let red = match &p_red {
                Some(pr) => shifted_log_det(pr, rho).value(),
                None => C64::new(1.0, 0.0),
            };
            let rhs = (C64::new(1.0, 0.0) - rho).powi(2 * routh.k as i32) * red;
            (lhs - rhs).norm() / (1.0 + lhs.norm())
        })
        .collect())
}

pub fn index_relation_report(chain: &Chain, routh: &LinearRouth, eig: &UnitEigendata, grid: &[C64]) -> Result<IndexRelations> {
    let h = chain.hessian();
    let full = inertia(&h);
    let z = routh.z_basis();
    let on_z = inertia(&(z.transpose() * &h * &z));
    let sum_g: usize = routh.g.iter().map(|g| inertia(g).negative).sum();
    let g_bar = inertia(&routh.g_bar).negative;
    let (red_inertia, sigma_reduced, reduced_hill) = match &routh.reduced {
        Some(r) => {
            let p = r.monodromy_extended()?;
            (inertia(&r.hessian()), r.twist_sign(), Some(hill_check(r, &p, C64::new(1.0, 0.0))))
        }
        None => (Inertia { negative: 0, zero: 0, positive: 0 }, 1.0, None),
    };
    let (ia, iap, ib) = (inertia(&eig.a).negative, inertia(&eig.a_perp).negative, inertia(&eig.s).negative);
    let sigma = chain.twist_sign();
    let when_c = |x: bool| eig.condition_c.then_some(x);
    let index_difference = full.negative as i64 - on_z.negative as i64 - red_inertia.negative as i64 == ia as i64 - iap as i64;
    let z_index = on_z.negative as i64 == sum_g as i64 - g_bar as i64;
    let parity_with_g_bar = (full.negative + red_inertia.negative + on_z.negative + ib + g_bar) % 2 == 0;
    let parity_with_g = (full.negative + red_inertia.negative + sum_g + ib) % 2 == 0;
    let sign_identity = sigma * parity(full.negative) as f64 == sigma_reduced * parity(red_inertia.negative + ib) as f64;
    let reduced_sign = sigma_reduced == sigma * parity(sum_g) as f64;

    let factorization_residual = factorization_residuals(chain, routh, grid)?.into_iter().fold(0.0, f64::max);
    let out = IndexRelations {
        index: full.negative,
        nullity: full.zero,
        index_on_z: on_z.negative,
        sum_index_g: sum_g,
        index_g_bar: g_bar,
        index_reduced: red_inertia.negative,
        nullity_reduced: red_inertia.zero,
        index_a: ia,
        index_a_perp: iap,
        index_b: ib,
        sigma,
        sigma_reduced,
        condition_c: eig.condition_c,
        index_difference: when_c(index_difference),
        z_index,
        parity_with_g_bar: when_c(parity_with_g_bar),
        parity_with_g: when_c(parity_with_g),
        sign_identity: when_c(sign_identity),
        reduced_sign,
        reduced_hill,
        factorization_residual,
    };
    let failed: Vec<&str> = [
        ("index difference", out.index_difference.unwrap_or(true)),
        ("index on Z", out.z_index),
        ("parity with G-bar", out.parity_with_g_bar.unwrap_or(true)),
        ("parity with G", out.parity_with_g.unwrap_or(true)),
        ("sign identity", out.sign_identity.unwrap_or(true)),
        ("reduced sign", out.reduced_sign),
    ]
    .iter()
    .filter(|(_, ok)| !ok)
    .map(|(name, _)| *name)
    .collect();
    if !failed.is_empty() {
        return Err(Error::TheoremViolation(format!("index relations failed: {}", failed.join(", "))));
    }
    Ok(out)
}

/// Comparison of the twisted Hessians of the full and reduced chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoReduction {
    pub rho: [f64; 2],
    /// `det H_ρ · ∏ det[E_i | W_i]²`.
    pub full_side: [f64; 2],
    /// `det H⊥_ρ · (2 - ρ - ρ^{-1})^k ∏ det G_i`.
    pub reduced_side: [f64; 2],
    pub residual: f64,
    pub index: usize,
    pub index_reduced: usize,
    pub nullity: usize,
    pub nullity_reduced: usize,
    pub sum_index_g: usize,
}

pub fn rho_reduction_check(chain: &Chain, routh: &LinearRouth, rho: C64) -> Result<RhoReduction> {
    if (rho.norm() - 1.0).abs() > 1e-12 || (rho - C64::new(1.0, 0.0)).norm() < 1e-12 {
        return Err(Error::InvalidInput("rho must lie on the unit circle and differ from 1".into()));
    }
    let hr = chain.rho_hessian(rho);
    let full = log_det(&hr).mul(&routh.frame_factor()).value();
    let (red_det, red_inertia) = match &routh.reduced {
        Some(r) => {
            let h = r.rho_hessian(rho);
            (log_det(&h).value(), crate::linalg::hermitian_inertia(&h, NULL_TOL))
        }
        None => (C64::new(1.0, 0.0), Inertia { negative: 0, zero: 0, positive: 0 }),
    };
    let reduced = red_det * g_rho_determinant(&routh.g, rho).value();
    let fi = crate::linalg::hermitian_inertia(&hr, NULL_TOL);
    let sum_g: usize = routh.g.iter().map(|g| inertia(g).negative).sum();
    let out = RhoReduction {
        rho: [rho.re, rho.im],
        full_side: [full.re, full.im],
        reduced_side: [reduced.re, reduced.im],
        residual: (full - reduced).norm() / full.norm().max(reduced.norm()).max(1e-300),
        index: fi.negative,
        index_reduced: red_inertia.negative,
        nullity: fi.zero,
        nullity_reduced: red_inertia.zero,
        sum_index_g: sum_g,
    };
    if (out.index + out.index_reduced + sum_g) % 2 != 0 || out.nullity != out.nullity_reduced {
        return Err(Error::TheoremViolation(format!(
            "twisted index relation failed at rho = {rho}: ind {} vs reduced {} (+{sum_g}), null {} vs {}",
            out.index, out.index_reduced, out.nullity, out.nullity_reduced
        )));
    }
    Ok(out)
}
