mod common;

use common::{chain_with_symmetry, random_matrix, random_symmetric};
use hillkit_core::dls::{advance, gradients, orbit_chain, second_derivatives};
use hillkit_core::error::Error;
use hillkit_core::hill::default_rho_grid;
use hillkit_core::linalg::{det_real, log_det, C64};
use hillkit_core::models::{Billiard, StandardMap, TrigPotential};
use hillkit_core::routh::symmetry::FieldFn;
use hillkit_core::routh::*;
use hillkit_core::{Chain, DiscreteLagrangian, PeriodicOrbit, Point, Step};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn pt(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

fn s0() -> Step {
    Step::new(0, 0, 0)
}

fn kinetic() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9])
}

#[test]
fn standard_map_noether_integral_is_conserved() {
    let l = StandardMap::cyclic_2d(kinetic(), 0.8);
    let spec = SymmetrySpec::cyclic(2, &[1]).unwrap();
    let (mut x, mut y) = (pt(&[0.3, -0.2]), pt(&[0.9, 0.4]));
    let j0 = noether_integral(&l, &spec, s0(), &x, &y).unwrap();
    let expected = (kinetic() * (&x - &y))[1];
    assert!((j0[0] - expected).abs() < 1e-14);
    for _ in 0..20 {
        let z = advance(&l, s0(), &x, &y, s0(), None).unwrap();
        x = y;
        y = z;
        let j = noether_integral(&l, &spec, s0(), &x, &y).unwrap();
        assert!((j[0] - j0[0]).abs() < 1e-10);
    }
}

#[test]
fn circle_billiard_noether_integral_matches_chord_geometry() {
    let l = Billiard::circle(1.0);
    let spec = SymmetrySpec::cyclic(1, &[0]).unwrap();
    let (mut x, mut y) = (pt(&[0.2]), pt(&[1.9]));
    let delta: f64 = 1.7;
    let j0 = noether_integral(&l, &spec, s0(), &x, &y).unwrap()[0];
    assert!((j0 + (delta / 2.0).sin().signum() * (delta / 2.0).cos()).abs() < 1e-13);
    for _ in 0..10 {
        let z = advance(&l, s0(), &x, &y, s0(), Some(&(&y + pt(&[delta])))).unwrap();
        x = y;
        y = z;
        assert!((noether_integral(&l, &spec, s0(), &x, &y).unwrap()[0] - j0).abs() < 1e-10);
    }
}

#[test]
fn broken_symmetry_is_rejected() {
    let l = StandardMap::new(kinetic(), TrigPotential::cosine(2, 1, 0.5)).unwrap();
    let spec = SymmetrySpec::cyclic(2, &[1]).unwrap();
    let r = noether_integral(&l, &spec, s0(), &pt(&[0.1, 0.2]), &pt(&[0.4, 0.9]));
    assert!(matches!(r, Err(Error::SymmetryViolation(_))));
}

#[test]
fn non_commuting_fields_are_rejected() {
    let rot: FieldFn = Arc::new(|x: &Point| pt(&[-x[1], x[0]]));
    let shift: FieldFn = Arc::new(|_x: &Point| pt(&[1.0, 0.0]));
    let spec = SymmetrySpec::new(2, vec![rot, shift], vec![None, None]).unwrap();
    assert!(spec.commutator_defect(&pt(&[0.3, 0.2])) > 0.5);
    let l = StandardMap::new(DMatrix::identity(2, 2), TrigPotential { terms: vec![] }).unwrap();
    let r = spec.check(&l, &[(s0(), pt(&[0.3, 0.2]), pt(&[0.5, -0.1]))]);
    assert!(matches!(r, Err(Error::SymmetryViolation(_))));
    // Rotation alone is a symmetry of free motion, with a numerical flow.
    let rot: FieldFn = Arc::new(|x: &Point| pt(&[-x[1], x[0]]));
    let spec = SymmetrySpec::new(2, vec![rot], vec![None]).unwrap();
    spec.check(&l, &[(s0(), pt(&[0.3, 0.2]), pt(&[0.5, -0.1]))]).unwrap();
    let y = spec.flow(0, &pt(&[1.0, 0.0]), PI / 2.0);
    assert!((y - pt(&[0.0, 1.0])).amax() < 1e-9);
}

#[test]
fn zero_level_reduction_of_cyclic_standard_map_is_one_dimensional_map() {
    let k = kinetic();
    let l = Arc::new(StandardMap::cyclic_2d(k.clone(), 0.8));
    let spec = SymmetrySpec::cyclic(2, &[1]).unwrap();
    let red = RouthReduced::new(l, &spec, pt(&[0.0])).unwrap();
    let schur = k[(0, 0)] - k[(0, 1)] * k[(0, 1)] / k[(1, 1)];
    let direct = StandardMap::new(DMatrix::from_element(1, 1, schur), TrigPotential::cosine(1, 0, 0.8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (x, y) = (pt(&[rng.gen_range(-2.0..2.0)]), pt(&[rng.gen_range(-2.0..2.0)]));
        assert!((red.value(s0(), &x, &y).unwrap() - direct.value(s0(), &x, &y).unwrap()).abs() < 1e-12);
        let (a, b) = (red.gradients(s0(), &x, &y).unwrap().unwrap(), direct.gradients(s0(), &x, &y).unwrap().unwrap());
        assert!((a.0 - b.0).amax() < 1e-12 && (a.1 - b.1).amax() < 1e-12);
        let (sa, _) = second_derivatives(&red, s0(), &x, &y).unwrap();
        let (sb, _) = second_derivatives(&direct, s0(), &x, &y).unwrap();
        assert!((sa.d12 - sb.d12).amax() < 1e-12 && (sa.d11 - sb.d11).amax() < 1e-12);
    }
}

#[test]
fn empty_reduction_is_identity() {
    let l = Arc::new(Billiard::ellipsoid(1.0, 1.2, 0.8));
    let red = RouthReduced::new(l.clone(), &SymmetrySpec::empty(2), DVector::zeros(0)).unwrap();
    let (x, y) = (pt(&[1.0, 0.3]), pt(&[2.0, 2.5]));
    assert_eq!(red.value(s0(), &x, &y).unwrap(), l.value(s0(), &x, &y).unwrap());
}

fn reduced_twist_law(l: Arc<dyn DiscreteLagrangian>, spec: &SymmetrySpec, level: f64, x: &Point, y: &Point) {
    let red = RouthReduced::new(l.clone(), spec, pt(&[level])).unwrap();
    let (yx, yy) = (pt(&[x[0]]), pt(&[y[0]]));
    let u = red.increment(s0(), &yx, &yy).unwrap();
    let (full, _) = second_derivatives(l.as_ref(), s0(), &red.embed(&yx, &pt(&[0.0])), &red.embed(&yy, &u)).unwrap();
    let (reduced, _) = second_derivatives(&red, s0(), &yx, &yy).unwrap();
    let g = full.d22[(1, 1)];
    let lhs = det_real(&(-reduced.d12.transpose()));
    let rhs = det_real(&(-full.d12.transpose())) / g;
    assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    // Reduced gradients agree with finite differences of the reduced value.
    let h = 1e-6;
    let fd = (red.value(s0(), &pt(&[yx[0] + h]), &yy).unwrap() - red.value(s0(), &pt(&[yx[0] - h]), &yy).unwrap()) / (2.0 * h);
    let (gx, _, _) = gradients(&red, s0(), &yx, &yy).unwrap();
    assert!((fd - gx[0]).abs() < 1e-7 * (1.0 + fd.abs()));
}

#[test]
fn reduced_twist_is_full_twist_over_g() {
    let spec = SymmetrySpec::cyclic(2, &[1]).unwrap();
    reduced_twist_law(Arc::new(StandardMap::cyclic_2d(kinetic(), 0.8)), &spec, 0.3, &pt(&[0.2, 0.0]), &pt(&[0.7, 0.5]));
    let spheroid = Arc::new(Billiard::ellipsoid(1.0, 1.0, 0.7));
    reduced_twist_law(spheroid, &spec, 0.1, &pt(&[1.2, 0.0]), &pt(&[1.9, 2.0]));
}

#[test]
fn full_trajectories_at_a_level_project_to_reduced_trajectories() {
    let l = Arc::new(StandardMap::cyclic_2d(kinetic(), 0.8));
    let spec = SymmetrySpec::cyclic(2, &[1]).unwrap();
    let (x0, x1) = (pt(&[0.3, -0.2]), pt(&[0.9, 0.4]));
    let x2 = advance(l.as_ref(), s0(), &x0, &x1, s0(), None).unwrap();
    let c = noether_integral(l.as_ref(), &spec, s0(), &x0, &x1).unwrap();
    let red = RouthReduced::new(l, &spec, c).unwrap();
    let (y0, y1, y2) = (pt(&[x0[0]]), pt(&[x1[0]]), pt(&[x2[0]]));
    let (_, p, _) = gradients(&red, s0(), &y0, &y1).unwrap();
    let (q, _, _) = gradients(&red, s0(), &y1, &y2).unwrap();
    assert!((p + q).amax() < 1e-10);
    assert!((red.increment(s0(), &y0, &y1).unwrap()[0] - (x1[1] - x0[1])).abs() < 1e-10);
}

#[test]
fn free_cyclic_chain_fails_condition_c() {
    for n in [1, 3, 5] {
        let chain = Chain::new(vec![DMatrix::from_element(1, 1, 2.0); n], vec![DMatrix::from_element(1, 1, 1.0); n]).unwrap();
        let gamma = DMatrix::from_element(n, 1, 1.0);
        let routh = linear_routh(&chain, &gamma).unwrap();
        assert!(routh.reduced.is_none());
        assert!((routh.g_bar[(0, 0)] - n as f64).abs() < 1e-12);
        let eig = generalized_unit_eigendata(&chain, &routh).unwrap();
        assert!((eig.s[(0, 0)] - n as f64).abs() < 1e-9);
        assert!(eig.a_perp[(0, 0)].abs() < 1e-9);
        assert!(!eig.condition_c);
        let r = index_relation_report(&chain, &routh, &eig, &default_rho_grid(8)).unwrap();
        assert!(!r.condition_c && r.index_difference.is_none());
        assert!(r.z_index && r.reduced_sign);
    }
}

#[test]
fn shear_block_gives_s_as_shear_entry() {
    // Decoupled: a free cyclic direction with twist 2 and a hyperbolic one.
    let n = 2;
    let a = vec![DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]); n];
    let b = vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]); n];
    let chain = Chain::new(a, b).unwrap();
    let mut gamma = DMatrix::zeros(2 * n, 1);
    for i in 0..n {
        gamma[(2 * i, 0)] = 1.0;
    }
    let routh = linear_routh(&chain, &gamma).unwrap();
    let eig = generalized_unit_eigendata(&chain, &routh).unwrap();
    // u_i = i / 2 is the conjugate solution; P q - q = (n / 2) w.
    assert!((eig.s[(0, 0)] - n as f64 / 2.0).abs() < 1e-10);
    assert!(eig.s_asymmetry < 1e-12);
}

#[test]
fn excess_degeneracy_is_reported() {
    let chain = Chain::new(vec![DMatrix::identity(2, 2) * 2.0; 3], vec![DMatrix::identity(2, 2); 3]).unwrap();
    let mut gamma = DMatrix::zeros(6, 1);
    for i in 0..3 {
        gamma[(2 * i, 0)] = 1.0;
    }
    let routh = linear_routh(&chain, &gamma).unwrap();
    assert!(matches!(generalized_unit_eigendata(&chain, &routh), Err(Error::ExcessDegeneracy { expected: 2, .. })));
}

#[test]
fn g_rho_determinant_law() {
    let g = [DMatrix::from_element(1, 1, 1.0)];
    let d = g_rho_determinant(&g, C64::new(-1.0, 0.0)).value();
    assert!((d - C64::new(4.0, 0.0)).norm() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 1..=2 {
        for n in 1..=5 {
            let g: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::identity(k, k) + random_symmetric(&mut rng, k, 0.8)).collect();
            let chain = Chain::new(
                (0..n).map(|i| &g[(i + n - 1) % n] + &g[i]).collect(),
                g.clone(),
            )
            .unwrap();
            for theta in [0.4, 1.5, PI, 4.0] {
                let rho = C64::from_polar(1.0, theta);
                let direct = log_det(&chain.rho_hessian(rho)).value();
                let law = g_rho_determinant(&g, rho).value();
                assert!((direct - law).norm() <= 1e-9 * direct.norm().max(1.0));
            }
        }
    }
}

fn circle_polygon(n: usize, winding: usize) -> (Chain, DMatrix<f64>) {
    let l = Billiard::circle(1.0);
    let pts = (0..n).map(|i| pt(&[2.0 * PI * (winding * i) as f64 / n as f64])).collect();
    let (chain, _) = orbit_chain(&l, &PeriodicOrbit::new(pts)).unwrap();
    (chain, DMatrix::from_element(n, 1, 1.0))
}

#[test]
fn circle_polygons_reduce_to_nothing() {
    for (n, w) in [(3, 1), (4, 1), (5, 2), (7, 3)] {
        let (chain, gamma) = circle_polygon(n, w);
        let routh = linear_routh(&chain, &gamma).unwrap();
        assert!(routh.reduced.is_none());
        let psi = 2.0 * PI * w as f64 / n as f64;
        for g in &routh.g {
            assert!((g[(0, 0)] + (psi / 2.0).sin() / 2.0).abs() < 1e-12);
        }
        let eig = generalized_unit_eigendata(&chain, &routh).unwrap();
        // With k = m the reduced form vanishes, so A⊥ = 0.
        assert!(!eig.condition_c);
        let rel = index_relation_report(&chain, &routh, &eig, &default_rho_grid(32)).unwrap();
        assert!(rel.factorization_residual <= 1e-8, "{}", rel.factorization_residual);
        assert_eq!(rel.nullity, 1);
        assert_eq!(eig.generalized_dim, 2);
        for theta in [0.5, 2.0, PI] {
            let r = rho_reduction_check(&chain, &routh, C64::from_polar(1.0, theta)).unwrap();
            assert!(r.residual < 1e-9);
        }
    }
}

#[test]
fn cyclic_standard_map_reduces_to_direct_chain() {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.7]);
    let l = StandardMap::cyclic_2d(k, 0.6);
    let orbit = PeriodicOrbit::new(vec![pt(&[PI, 0.0]); 3]);
    let (chain, _) = orbit_chain(&l, &orbit).unwrap();
    let mut gamma = DMatrix::zeros(6, 1);
    for i in 0..3 {
        gamma[(2 * i + 1, 0)] = 1.0;
    }
    let routh = linear_routh(&chain, &gamma).unwrap();
    let red = routh.reduced.as_ref().unwrap();
    let (direct, _) = orbit_chain(&StandardMap::classic(0.6), &PeriodicOrbit::new(vec![pt(&[PI]); 3])).unwrap();
    for i in 0..3 {
        assert!((&red.a[i] - &direct.a[i]).amax() < 1e-10);
        assert!((&red.b[i] - &direct.b[i]).amax() < 1e-10);
    }
    let rho = C64::new(0.0, 1.0);
    let r = rho_reduction_check(&chain, &routh, rho).unwrap();
    assert!(r.residual < 1e-9);
    // The cyclic direction is free, so A⊥ vanishes.
    let eig = generalized_unit_eigendata(&chain, &routh).unwrap();
    assert!(!eig.condition_c);
}

#[test]
fn coupled_cyclic_standard_map_satisfies_twisted_reduction() {
    let l = StandardMap::cyclic_2d(kinetic(), 0.6);
    let orbit = PeriodicOrbit::new(vec![pt(&[0.0, 0.0]); 3]);
    let (chain, _) = orbit_chain(&l, &orbit).unwrap();
    let gamma = periodic_solutions(&chain);
    assert_eq!(gamma.ncols(), 1);
    let routh = linear_routh(&chain, &gamma).unwrap();
    for theta in [0.3, PI / 2.0, 2.5, PI] {
        let r = rho_reduction_check(&chain, &routh, C64::from_polar(1.0, theta)).unwrap();
        assert!(r.residual < 1e-9, "{r:?}");
    }
}

fn spheroid_polygon(n: usize, c: f64) -> (Chain, DMatrix<f64>) {
    let l = Billiard::ellipsoid(1.0, 1.0, c);
    let pts = (0..n).map(|i| pt(&[PI / 2.0, 2.0 * PI * i as f64 / n as f64])).collect();
    let (chain, _) = orbit_chain(&l, &PeriodicOrbit::new(pts)).unwrap();
    let mut gamma = DMatrix::zeros(2 * n, 1);
    for i in 0..n {
        gamma[(2 * i + 1, 0)] = 1.0;
    }
    (chain, gamma)
}

#[test]
fn spheroid_equatorial_polygons_satisfy_routh_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, c) in [(3, 0.7), (4, 0.7), (5, 1.4), (4, 1.3)] {
        let (chain, gamma) = spheroid_polygon(n, c);
        let routh = linear_routh(&chain, &gamma).unwrap();
        let eig = generalized_unit_eigendata(&chain, &routh).unwrap();
        assert!(eig.s_asymmetry < 1e-9);
        // Changing the angular momentum keeps the orbit in the equator, so
        // the conjugate solution projects to zero and A⊥ vanishes.
        assert!(!eig.condition_c);
        let rel = index_relation_report(&chain, &routh, &eig, &default_rho_grid(32)).unwrap();
        assert!(rel.factorization_residual <= 1e-8);
        assert!(rel.reduced_hill.as_ref().unwrap().residual <= 1e-8);
        let samples: Vec<DVector<f64>> = (0..50).map(|_| random_matrix(&mut rng, 2 * n, 1, 1.0).column(0).into_owned()).collect();
        let orth = orthogonality_checks(&chain, &routh, &eig, &samples).unwrap();
        assert!(orth.hat_q_orthogonal <= 1e-9 && orth.hat_q_gram <= 1e-9, "{orth:?}");
        assert!(orth.perp_q_orthogonal <= 1e-9 && orth.perp_q_gram <= 1e-9, "{orth:?}");
        for theta in [0.9, PI] {
            assert!(rho_reduction_check(&chain, &routh, C64::from_polar(1.0, theta)).unwrap().residual < 1e-9);
        }
    }
}

#[test]
fn random_chains_satisfy_all_routh_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for case in 0..40 {
        let k = 1 + case % 2;
        let m = k + 1 + (case / 2) % 3;
        let n = 2 + case % 4;
        let (chain, gamma) = chain_with_symmetry(&mut rng, n, m, k);
        let routh = linear_routh(&chain, &gamma).unwrap();
        for theta in [0.7, 2.1, PI] {
            let r = rho_reduction_check(&chain, &routh, C64::from_polar(1.0, theta)).unwrap();
            assert!(r.residual <= 1e-9, "case {case}: {r:?}");
        }
        let eig = match generalized_unit_eigendata(&chain, &routh) {
            Ok(e) => e,
            Err(Error::ExcessDegeneracy { .. }) => continue,
            Err(e) => panic!("case {case}: {e}"),
        };
        if !eig.condition_c {
            continue;
        }
        assert!(eig.s_asymmetry < 1e-8, "case {case}: {}", eig.s_asymmetry);
        let rel = index_relation_report(&chain, &routh, &eig, &default_rho_grid(16)).unwrap();
        assert_eq!(rel.index_difference, Some(true));
        assert!(rel.factorization_residual <= 1e-8);
        let samples: Vec<DVector<f64>> = (0..20).map(|_| random_matrix(&mut rng, n * m, 1, 1.0).column(0).into_owned()).collect();
        let orth = orthogonality_checks(&chain, &routh, &eig, &samples).unwrap();
        assert!(orth.hat_q_orthogonal <= 1e-9 && orth.hat_q_gram <= 1e-9, "case {case}: {orth:?}");
        assert!(orth.perp_q_orthogonal <= 1e-9 && orth.perp_q_gram <= 1e-9, "case {case}: {orth:?}");
        assert!(orth.hat_q_periodicity <= 1e-9);
        checked += 1;
    }
    assert!(checked >= 30, "only {checked} cases were nondegenerate");
}

#[test]
fn level_space_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (chain, gamma) = chain_with_symmetry(&mut rng, 4, 3, 1);
    let routh = linear_routh(&chain, &gamma).unwrap();
    let h = chain.hessian();
    let z = routh.z_basis();
    let (n, m) = (4, 3);
    for _ in 0..20 {
        let v = random_matrix(&mut rng, n * m, 1, 1.0).column(0).into_owned();
        let (u, c) = routh.lift_to_level(&chain, &v);
        // Integrals of u are all equal to c.
        for i in 0..n {
            let ui = u.rows(i * m, m).into_owned();
            let un = u.rows(((i + 1) % n) * m, m).into_owned();
            assert!((routh.integrals(&chain, i, &ui, &un) - &c).amax() < 1e-10);
        }
        // Lifted sequences are h-orthogonal to Z.
        assert!((z.transpose() * (&h * &u)).amax() < 1e-9 * (1.0 + u.norm() * h.amax()));
        // h on the lift of a reduced sequence exceeds h⊥ by Ḡ(c, c).
        let a = random_matrix(&mut rng, n * (m - 1), 1, 1.0).column(0).into_owned();
        let v = routh.embed_reduced(&a);
        let (u, c) = routh.lift_to_level(&chain, &v);
        let full = u.dot(&(&h * &u));
        let red = a.dot(&(routh.reduced.as_ref().unwrap().hessian() * &a));
        let extra = c.dot(&(&routh.g_bar * &c));
        assert!((full - red - extra).abs() < 1e-9 * (1.0 + full.abs()));
    }
    // h restricted to Z is Σ G_i Δλ_i · Δλ_i.
    let lam = random_matrix(&mut rng, n, 1, 1.0);
    let v = &z * &lam;
    let direct: f64 = (0..n).map(|i| routh.g[i][(0, 0)] * (lam[((i + 1) % n, 0)] - lam[(i, 0)]).powi(2)).sum();
    assert!((v.dot(&(&h * &v)) - direct).abs() < 1e-10 * (1.0 + direct.abs()));
}
