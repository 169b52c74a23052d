use hillkit_core::dls::{action_gradient, advance, gradients, orbit_chain, refine_orbit, second_derivatives, NewtonOptions};
use hillkit_core::hill::{default_rho_grid, hill_sweep, multipliers, rho_inertia, stability_verdicts, Verdict};
use hillkit_core::linalg::C64;
use hillkit_core::models::{Billiard, StandardMap, TrigPotential};
use hillkit_core::{DiscreteLagrangian, PeriodicOrbit, Point, Step};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn pt(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

#[test]
fn standard_map_fixed_point_at_zero() {
    let l = StandardMap::classic(1.0);
    let orbit = PeriodicOrbit::new(vec![pt(&[0.0])]);
    let (chain, fd) = orbit_chain(&l, &orbit).unwrap();
    assert!(!fd);
    assert!((chain.a[0][(0, 0)] - 3.0).abs() < 1e-15);
    assert!((chain.b[0][(0, 0)] - 1.0).abs() < 1e-15);
    let p = chain.monodromy().unwrap();
    assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 3.0]));
    let checks = hill_sweep(&chain, &default_rho_grid(64)).unwrap();
    assert!(checks.iter().all(|c| c.residual < 1e-12));
    let at_one = checks.iter().find(|c| c.rho == [1.0, 0.0]).unwrap();
    assert!((at_one.characteristic[0] + 1.0).abs() < 1e-14);
}

#[test]
fn standard_map_fixed_point_at_pi_is_elliptic_with_index_one() {
    for k in [0.5, 1.0, 3.0] {
        let l = StandardMap::classic(k);
        let orbit = PeriodicOrbit::new(vec![pt(&[PI])]);
        let (chain, _) = orbit_chain(&l, &orbit).unwrap();
        let h = chain.hessian();
        assert!((h[(0, 0)] + k).abs() < 1e-12);
        let inertia = rho_inertia(&chain, C64::new(1.0, 0.0));
        assert_eq!((inertia.negative, inertia.zero), (1, 0));
        let p = chain.monodromy().unwrap();
        assert!(((p.clone() - DMatrix::identity(2, 2)).determinant() - k).abs() < 1e-12);
        assert!((p.trace() - (2.0 - k)).abs() < 1e-12);
        let v = stability_verdicts(&chain);
        assert_eq!(v.multiplier_above_one, Verdict::NotPredicted);
        assert_eq!(v.hyperbolic_by_doubled_parity, Some(false));
        assert_eq!(v.index_doubled % 2, 1);
    }
}

#[test]
fn free_chain_has_one_dimensional_kernel() {
    let l = StandardMap::new(DMatrix::identity(1, 1), TrigPotential::default()).unwrap();
    let orbit = PeriodicOrbit::new(vec![pt(&[0.0]); 3]);
    let (chain, _) = orbit_chain(&l, &orbit).unwrap();
    let i = rho_inertia(&chain, C64::new(1.0, 0.0));
    assert_eq!((i.negative, i.zero, i.positive), (0, 1, 2));
}

#[test]
fn circle_twist_quarter_chord() {
    let l = Billiard::circle(1.0);
    let step = Step::new(0, 0, 0);
    let (s, _) = second_derivatives(&l, step, &pt(&[0.0]), &pt(&[PI / 2.0])).unwrap();
    let b = -s.d12[(0, 0)];
    assert!((b + 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-14);
}

#[test]
fn parallel_segments_twist() {
    let l = Billiard::new(vec![
        std::sync::Arc::new(hillkit_core::models::Segment::new(&[0.0, 0.0], &[1.0, 0.0]).unwrap()),
        std::sync::Arc::new(hillkit_core::models::Segment::new(&[0.0, 2.0], &[1.0, 2.0]).unwrap()),
    ])
    .unwrap();
    let (s, _) = second_derivatives(&l, Step::new(0, 0, 1), &pt(&[0.5]), &pt(&[0.5])).unwrap();
    assert!((-s.d12[(0, 0)] - 0.5).abs() < 1e-15);
}

#[test]
fn coincident_billiard_points_are_rejected() {
    let l = Billiard::circle(1.0);
    let err = l.value(Step::new(3, 0, 0), &pt(&[0.4]), &pt(&[0.4])).unwrap_err();
    assert_eq!(err, hillkit_core::Error::CoincidentPoints(3));
}

#[test]
fn ellipse_major_axis_orbit_from_rough_guess() {
    let (a, b) = (2.0, 1.0);
    let l = Billiard::ellipse(a, b);
    let guess = PeriodicOrbit::new(vec![pt(&[(0.05f64 / b).atan2(1.9 / a)]), pt(&[(-0.05f64 / b).atan2(-1.9 / a)])]);
    let r = refine_orbit(&l, &guess, &NewtonOptions::default()).unwrap();
    assert!(r.residual <= 1e-12);
    let p0 = l.ambient_point(0, &r.orbit.points[0]).unwrap();
    let p1 = l.ambient_point(0, &r.orbit.points[1]).unwrap();
    assert!((p0 - pt(&[2.0, 0.0])).norm() < 1e-12);
    assert!((p1 - pt(&[-2.0, 0.0])).norm() < 1e-12);
    assert!(r.log.windows(2).all(|w| w[1] < w[0]));
}

/// Feet of the altitudes of the triangle, as arclength along each side.
fn orthic_parameters(v: &[[f64; 2]; 3]) -> Vec<f64> {
    (0..3)
        .map(|k| {
            let (p, q, opp) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
            let d = [q[0] - p[0], q[1] - p[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            ((opp[0] - p[0]) * d[0] + (opp[1] - p[1]) * d[1]) / len
        })
        .collect()
}

#[test]
fn orthic_triangle_orbit_is_parabolic_with_no_verdict() {
    let v = [[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]];
    let l = Billiard::polygon(&v).unwrap();
    let midpoints = (0..3)
        .map(|k| {
            let (p, q) = (v[k], v[(k + 1) % 3]);
            pt(&[0.5 * ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()])
        })
        .collect();
    let guess = PeriodicOrbit::with_charts(midpoints, vec![0, 1, 2]);
    let r = refine_orbit(&l, &guess, &NewtonOptions::default()).unwrap();
    let oracle = orthic_parameters(&v);
    for k in 0..3 {
        assert!((r.orbit.points[k][0] - oracle[k]).abs() < 1e-10, "side {k}");
    }
    let (chain, _) = orbit_chain(&l, &r.orbit).unwrap();
    let p = chain.monodromy().unwrap();
    assert!((p.trace() + 2.0).abs() <= 1e-8);
    for z in multipliers(&chain).unwrap() {
        assert!((z + 1.0).norm() <= 1e-8, "{z}");
    }
    let verdicts = stability_verdicts(&chain);
    assert_eq!(verdicts.twist_sign, -1.0);
    assert!(!verdicts.exponentially_unstable);
    assert_eq!(verdicts.multiplier_above_one, Verdict::NotPredicted);
}

#[test]
fn circle_advance_reflects_with_equal_angles() {
    let l = Billiard::circle(1.0);
    let s = Step::new(0, 0, 0);
    let (x, y) = (pt(&[0.3]), pt(&[1.7]));
    let z = advance(&l, s, &x, &y, s, None).unwrap();
    // Chords of a circle subtend equal arcs before and after a reflection.
    assert!(((y[0] - x[0]) - (z[0] - y[0])).abs() < 1e-10);
}

fn fd_symplectic_defect(l: &dyn DiscreteLagrangian, x: &Point, y: &Point) -> f64 {
    let s = Step::new(0, 0, 0);
    let m = l.dim();
    let z0 = advance(l, s, x, y, s, None).unwrap();
    let h = 1e-6;
    // Jacobian of (x, y) -> (y, z).
    let mut dz = DMatrix::zeros(m, 2 * m);
    for k in 0..2 * m {
        let (mut xp, mut yp, mut xm, mut ym) = (x.clone(), y.clone(), x.clone(), y.clone());
        if k < m {
            xp[k] += h;
            xm[k] -= h;
        } else {
            yp[k - m] += h;
            ym[k - m] -= h;
        }
        let zp = advance(l, s, &xp, &yp, s, Some(&z0)).unwrap();
        let zm = advance(l, s, &xm, &ym, s, Some(&z0)).unwrap();
        dz.set_column(k, &((zp - zm) / (2.0 * h)));
    }
    let mut t = DMatrix::zeros(2 * m, 2 * m);
    t.view_mut((0, m), (m, m)).copy_from(&DMatrix::identity(m, m));
    t.view_mut((m, 0), (m, 2 * m)).copy_from(&dz);
    let form = |b: &DMatrix<f64>| {
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        j.view_mut((0, m), (m, m)).copy_from(&b.transpose());
        j.view_mut((m, 0), (m, m)).copy_from(&(-b));
        j
    };
    let (s1, _) = second_derivatives(l, s, x, y).unwrap();
    let (s2, _) = second_derivatives(l, s, y, &z0).unwrap();
    let j1 = form(&(-s1.d12.transpose()));
    let j2 = form(&(-s2.d12.transpose()));
    (t.transpose() * j2 * t - &j1).amax() / j1.amax()
}

#[test]
fn twist_map_is_symplectic() {
    let sm = StandardMap::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]),
        TrigPotential { terms: vec![hillkit_core::models::TrigTerm { wave: vec![1.0, -1.0], cos: 0.7, sin: 0.2 }] },
    )
    .unwrap();
    assert!(fd_symplectic_defect(&sm, &pt(&[0.1, 0.2]), &pt(&[0.5, -0.3])) < 1e-7);
    assert!(fd_symplectic_defect(&Billiard::ellipse(2.0, 1.0), &pt(&[0.3]), &pt(&[2.1])) < 1e-7);
}

/// `L + f(x) - f(y)` has the same trajectories and multipliers.
struct Gauged<L> {
    base: L,
}

impl<L: DiscreteLagrangian> DiscreteLagrangian for Gauged<L> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, step: Step, x: &Point, y: &Point) -> hillkit_core::Result<f64> {
        let f = |p: &Point| p.iter().map(|v| (2.0 * v).sin() + 0.3 * v * v).sum::<f64>();
        Ok(self.base.value(step, x, y)? + f(x) - f(y))
    }
}

#[test]
fn gauge_transformation_preserves_dynamics() {
    let base = StandardMap::classic(0.8);
    let g = Gauged { base: base.clone() };
    let s = Step::new(0, 0, 0);
    let (x, y) = (pt(&[0.2]), pt(&[0.9]));
    let z0 = advance(&base, s, &x, &y, s, None).unwrap();
    let z1 = advance(&g, s, &x, &y, s, None).unwrap();
    assert!((z0 - z1).norm() < 1e-8);
    let orbit = PeriodicOrbit::new(vec![pt(&[0.0])]);
    let m0 = multipliers(&orbit_chain(&base, &orbit).unwrap().0).unwrap();
    let m1 = multipliers(&orbit_chain(&g, &orbit).unwrap().0).unwrap();
    for (a, b) in m0.iter().zip(&m1) {
        assert!((a - b).norm() < 1e-4 * a.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_and_fd_derivatives_agree(u in 0.0..6.2f64, du in 0.3..5.9f64) {
        let l = Billiard::ellipse(2.0, 1.0);
        let s = Step::new(0, 0, 0);
        let (x, y) = (pt(&[u]), pt(&[u + du]));
        let (g1, g2) = l.gradients(s, &x, &y).unwrap().unwrap();
        struct ValueOnly<'a>(&'a Billiard);
        impl DiscreteLagrangian for ValueOnly<'_> {
            fn dim(&self) -> usize { 1 }
            fn value(&self, s: Step, x: &Point, y: &Point) -> hillkit_core::Result<f64> { self.0.value(s, x, y) }
        }
        let v = ValueOnly(&l);
        let (f1, f2, fd) = gradients(&v, s, &x, &y).unwrap();
        prop_assert!(fd);
        prop_assert!((g1 - f1).norm() < 1e-8 && (g2 - f2).norm() < 1e-8);
        let (a, _) = second_derivatives(&l, s, &x, &y).unwrap();
        let (b, _) = second_derivatives(&v, s, &x, &y).unwrap();
        prop_assert!((a.d12 - b.d12).amax() < 1e-4 && (a.d11 - b.d11).amax() < 1e-4);
    }

    #[test]
    fn billiard_twist_is_negative_and_sign_law(n in 1usize..7, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let l = Billiard::ellipsoid(2.0, 1.5, 1.0);
        let pts: Vec<Point> = (0..n.max(2)).map(|_| pt(&[rng.gen_range(0.2..2.9), rng.gen_range(0.0..6.28)])).collect();
        let orbit = PeriodicOrbit::new(pts);
        let (chain, _) = orbit_chain(&l, &orbit).unwrap();
        for b in &chain.b {
            prop_assert!(b.determinant() < 0.0);
        }
        let sign = if orbit.n() % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(chain.twist_sign(), sign);
        let _ = action_gradient(&l, &orbit).unwrap();
    }
}
