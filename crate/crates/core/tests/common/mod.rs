#![allow(dead_code)]

pub mod cases;

use hillkit_core::Chain;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, amp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-amp..amp))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, m: usize, amp: f64) -> DMatrix<f64> {
    let x = random_matrix(rng, m, m, amp);
    (&x + x.transpose()) * 0.5
}

/// Random periodic chain whose periodic solutions contain a prescribed
/// isotropic `k`-dimensional space, returned as the columns of an
/// `nm × k` matrix.
///
/// In suitable coordinates the first `k` directions are cyclic: the top-left
/// block of every `B_i` is symmetric and the first `k` columns of `A_i` are
/// those of `B_{i-1} + B_i^T`. A random coordinate change per point hides
/// the structure.
pub fn chain_with_symmetry(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> (Chain, DMatrix<f64>) {
    let mut b: Vec<DMatrix<f64>> = Vec::new();
    for _ in 0..n {
        let mut bi = DMatrix::identity(m, m) * 1.5 + random_matrix(rng, m, m, 0.6);
        let tl = bi.view((0, 0), (k, k)).into_owned();
        bi.view_mut((0, 0), (k, k)).copy_from(&((&tl + tl.transpose()) * 0.5));
        b.push(bi);
    }
    let mut a = Vec::new();
    for i in 0..n {
        let p = (i + n - 1) % n;
        let s = &b[p] + b[i].transpose();
        let mut ai = DMatrix::zeros(m, m);
        ai.columns_mut(0, k).copy_from(&s.columns(0, k));
        let side = s.view((k, 0), (m - k, k)).into_owned();
        ai.view_mut((0, k), (k, m - k)).copy_from(&side.transpose());
        let r = DMatrix::identity(m - k, m - k) * 3.0 + random_symmetric(rng, m - k, 1.5);
        ai.view_mut((k, k), (m - k, m - k)).copy_from(&r);
        a.push(ai);
    }
    let t: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::identity(m, m) + random_matrix(rng, m, m, 0.3)).collect();
    let a2 = (0..n).map(|i| t[i].transpose() * &a[i] * &t[i]).map(|x| (&x + x.transpose()) * 0.5).collect();
    let b2 = (0..n).map(|i| t[(i + 1) % n].transpose() * &b[i] * &t[i]).collect();
    let mut gamma = DMatrix::zeros(n * m, k);
    for i in 0..n {
        let inv = t[i].clone().try_inverse().unwrap();
        gamma.view_mut((i * m, 0), (m, k)).copy_from(&inv.columns(0, k));
    }
    (Chain::new(a2, b2).unwrap(), gamma)
}
