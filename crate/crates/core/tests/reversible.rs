mod common;

use common::cases::{built_in_cases, mirror_pair_operator, orthic_orbit, standard_map_two_orbit, two_disk_orbit, Case};
use common::random_matrix;
use hillkit_core::dls::{action, action_gradient, orbit_chain, refine_orbit, NewtonOptions, PeriodicOrbit, Point, Step};
use hillkit_core::hill::{analyze_orbit, default_rho_grid, multipliers, Verdict};
use hillkit_core::linalg::{log_det_real, symmetric_eigenvalues};
use hillkit_core::models::{Billiard, StandardMap};
use hillkit_core::reversible::{
    classify_reversible, conjugacy_defect, half_action_gradient, reconstruct, refine_reversible, reversible_verdicts, split_hessian,
    InvolutionSpec, ReversibleOrbit,
};
use hillkit_core::{DiscreteLagrangian, Error};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn pt(v: &[f64]) -> Point {
    Point::from_column_slice(v)
}

#[test]
fn involutions_preserve_the_lagrangian() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in built_in_cases() {
        let m = case.l.dim();
        let samples: Vec<_> = (0..20)
            .map(|_| {
                let mut draw = || {
                    let u = random_matrix(&mut rng, m, 1, 1.0).column(0).into_owned();
                    let chart = case.orbit.charts[rng.gen_range(0..case.orbit.n())];
                    let base = &case.orbit.points[case.orbit.charts.iter().position(|&c| c == chart).unwrap()];
                    (chart, base + u * 0.3)
                };
                (draw(), draw())
            })
            .collect();
        let samples: Vec<_> = samples.into_iter().filter(|((cx, x), (cy, y))| case.l.point_distance(*cx, x, *cy, y) > 1e-3).collect();
        let defect = case.s.check(case.l.as_ref(), &samples).unwrap_or_else(|e| panic!("{}: {e}", case.name));
        assert!(defect <= 1e-10, "{}: {defect}", case.name);
    }
}

#[test]
fn odd_lagrangian_is_rejected_by_the_check() {
    let l = StandardMap::new(DMatrix::identity(1, 1), hillkit_core::models::TrigPotential::cosine(1, 0, 1.0)).unwrap();
    let mut shifted = l.clone();
    shifted.potential.terms[0].sin = 0.5;
    let s = InvolutionSpec::negation(1);
    let samples = vec![((0, pt(&[0.3])), (0, pt(&[1.1])))];
    assert!(s.check(&l, &samples).is_ok());
    assert!(matches!(s.check(&shifted, &samples), Err(Error::SymmetryViolation(_))));
}

#[test]
fn classification_finds_types_and_reconstructs() {
    for case in built_in_cases() {
        let rev = classify_reversible(case.l.as_ref(), &case.orbit, &case.s).unwrap_or_else(|e| panic!("{}: {e}", case.name));
        assert_eq!(rev.orbit_type, case.orbit_type, "{}", case.name);
        assert_eq!(rev.anchors.len(), rev.orbit_type);
        let rebuilt = reconstruct(&case.s, rev.orbit_type, &rev.half, &rev.half_charts).unwrap();
        let canonical = rev.canonical();
        for i in 0..canonical.n() {
            let d = case.l.point_distance(rebuilt.charts[i], &rebuilt.points[i], canonical.charts[i], &canonical.points[i]);
            assert!(d <= 1e-9, "{}: slot {i}", case.name);
        }
        for &a in &rev.anchors {
            let (c, sx) = case.s.apply(case.orbit.charts[a], &case.orbit.points[a]).unwrap();
            assert!(case.l.point_distance(c, &sx, case.orbit.charts[a], &case.orbit.points[a]) <= 1e-9);
        }
    }
}

#[test]
fn ellipse_major_axis_under_minor_mirror_is_type_zero_with_one_half_point() {
    let l = Billiard::ellipse(2.0, 1.0);
    let s = InvolutionSpec::billiard_reflection(&l, &[1.0, 0.0]).unwrap();
    let rev = classify_reversible(&l, &PeriodicOrbit::new(vec![pt(&[0.0]), pt(&[PI])]), &s).unwrap();
    assert_eq!((rev.orbit_type, rev.k()), (0, 1));
    let (value, grad) = half_action_gradient(&l, &s, 0, &rev.half, &rev.half_charts).unwrap();
    // Twice the chord from the vertex to its mirror image.
    assert!((value - 8.0).abs() < 1e-12);
    assert!(grad.norm() < 1e-12);
}

#[test]
fn two_disk_half_action_is_twice_the_gap() {
    let l = Billiard::two_disks(1.0, 4.0).unwrap();
    let s = InvolutionSpec::identity(1);
    let rev = classify_reversible(&l, &two_disk_orbit(), &s).unwrap();
    assert_eq!((rev.orbit_type, rev.k()), (2, 2));
    let (value, grad) = half_action_gradient(&l, &s, 2, &rev.half, &rev.half_charts).unwrap();
    assert!((value - 4.0).abs() < 1e-12);
    assert!(grad.norm() < 1e-12);
}

#[test]
fn asymmetric_orbits_are_not_reversible() {
    let l = Billiard::ellipse(2.0, 1.0);
    let s = InvolutionSpec::billiard_reflection(&l, &[1.0, 0.0]).unwrap();
    let perturbed = PeriodicOrbit::new(vec![pt(&[0.01]), pt(&[PI])]);
    assert_eq!(classify_reversible(&l, &perturbed, &s).unwrap_err(), Error::NotReversible);
    // A scalene orthic triangle reversed in time is not a cyclic shift of itself.
    let v = [[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]];
    let tri = Billiard::polygon(&v).unwrap();
    let orbit = refine_orbit(&tri, &orthic_orbit(&v), &NewtonOptions::default()).unwrap().orbit;
    assert_eq!(classify_reversible(&tri, &orbit, &InvolutionSpec::identity(1)).unwrap_err(), Error::NotReversible);
}

#[test]
fn identity_involution_on_a_palindromic_orbit_gives_type_two() {
    let (l, orbit) = standard_map_two_orbit();
    let rev = classify_reversible(&l, &orbit, &InvolutionSpec::identity(1)).unwrap();
    assert_eq!(rev.orbit_type, 2);
    let (value, _) = half_action_gradient(&l, &InvolutionSpec::identity(1), 2, &rev.half, &rev.half_charts).unwrap();
    let b = l.value(Step::default(), &rev.half[0], &rev.half[1]).unwrap();
    assert!((value - 2.0 * b).abs() < 1e-12);
}

#[test]
fn boundary_terms_need_fixed_end_points() {
    let l = StandardMap::classic(1.0);
    let s = InvolutionSpec::negation(1);
    let r = half_action_gradient(&l, &s, 1, &[pt(&[0.2]), pt(&[0.5])], &[0, 0]);
    assert!(matches!(r, Err(Error::DomainError(_))));
}

fn fd_gradient(f: impl Fn(&[Point]) -> f64, y: &[Point]) -> Vec<f64> {
    let mut out = Vec::new();
    for a in 0..y.len() {
        for c in 0..y[a].len() {
            let h = 1e-6;
            let (mut p, mut q) = (y.to_vec(), y.to_vec());
            p[a][c] += h;
            q[a][c] -= h;
            out.push((f(&p) - f(&q)) / (2.0 * h));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn half_action_equals_action_of_reconstruction(k in 1usize..5, seed in 0u64..1000, t in 0usize..3) {
        prop_assume!(t != 2 || k >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = StandardMap::new(
            DMatrix::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.9]),
            hillkit_core::models::TrigPotential::cosine(2, 0, 0.7),
        ).unwrap();
        let s = if t == 0 { InvolutionSpec::negation(2) } else { InvolutionSpec::identity(2) };
        let half: Vec<Point> = (0..k).map(|_| random_matrix(&mut rng, 2, 1, 2.0).column(0).into_owned()).collect();
        let charts = vec![0; k];
        let (value, grad) = half_action_gradient(&l, &s, t, &half, &charts).unwrap();
        let x = reconstruct(&s, t, &half, &charts).unwrap();
        prop_assert!((value - action(&l, &x).unwrap()).abs() <= 1e-12 * value.abs().max(1.0));
        let fd = fd_gradient(|y| half_action_gradient(&l, &s, t, y, &charts).unwrap().0, &half);
        for (g, f) in grad.iter().zip(&fd) {
            prop_assert!((g - f).abs() <= 1e-6 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn reversing_symmetry_conjugates_the_map_to_its_inverse(x in -2.0..2.0f64, y in -2.0..2.0f64, negate in any::<bool>()) {
        let l = StandardMap::classic(0.9);
        let s = if negate { InvolutionSpec::negation(1) } else { InvolutionSpec::identity(1) };
        prop_assert!(conjugacy_defect(&l, &s, &pt(&[x]), &pt(&[y])).unwrap() <= 1e-9);
    }
}

fn classify_case(case: &Case) -> ReversibleOrbit {
    classify_reversible(case.l.as_ref(), &case.orbit, &case.s).unwrap()
}

#[test]
fn hessian_splits_into_even_and_odd_parts() {
    for case in built_in_cases() {
        let rev = classify_case(&case);
        let split = split_hessian(case.l.as_ref(), &case.s, &rev).unwrap();
        let name = case.name;
        assert!(split.det_residual <= 1e-8, "{name}: {}", split.det_residual);
        assert!(split.restriction_residual <= 1e-10, "{name}: {}", split.restriction_residual);
        assert!(split.cross_term <= 1e-10, "{name}: {}", split.cross_term);
        assert!(split.c_asymmetry <= 1e-10, "{name}: {}", split.c_asymmetry);
        let (f, p, m) = (split.inertia_full, split.inertia_plus, split.inertia_minus);
        assert_eq!(f.negative, p.negative + m.negative, "{name}");
        assert_eq!(f.zero, p.zero + m.zero, "{name}");

        // Independent route: with U = [U+ U-], det(UᵀHU) = det H det(U)².
        let (chain, _) = orbit_chain(case.l.as_ref(), &rev.canonical()).unwrap();
        let u = DMatrix::from_columns(
            &split.embed_plus.column_iter().chain(split.embed_minus.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>(),
        );
        let h = chain.hessian();
        let lhs = log_det_real(&(u.transpose() * &h * &u));
        let rhs = log_det_real(&h).mul(&log_det_real(&u).powi(2));
        assert!((lhs.value() - rhs.value()).norm() <= 1e-8 * lhs.value().norm().max(rhs.value().norm()), "{name}");
    }
}

#[test]
fn odd_domain_of_identity_type_two_pins_the_end_points() {
    let (l, orbit) = standard_map_two_orbit();
    let s = InvolutionSpec::identity(1);
    let rev = classify_reversible(&l, &orbit, &s).unwrap();
    let split = split_hessian(&l, &s, &rev).unwrap();
    assert_eq!(split.domain_plus.ncols(), 2);
    assert_eq!(split.domain_minus.ncols(), 0);
}

#[test]
fn mirror_pairs_have_negative_definite_boundary_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let mut count = 0;
    while count < 200 {
        let (l, normal, x, chart): (Billiard, Vec<f64>, Point, usize) = match count % 3 {
            0 => {
                let (a, b, c) = (rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.5));
                let mut e = vec![0.0; 3];
                e[rng.gen_range(0..3)] = 1.0;
                (Billiard::ellipsoid(a, b, c), e, pt(&[rng.gen_range(0.2..PI - 0.2), rng.gen_range(-PI..PI)]), 0)
            }
            1 => {
                let (a, b) = (rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.5));
                let mut e = vec![0.0; 2];
                e[rng.gen_range(0..2)] = 1.0;
                (Billiard::ellipse(a, b), e, pt(&[rng.gen_range(-PI..PI)]), 0)
            }
            _ => {
                let l = Billiard::two_disks(1.0, rng.gen_range(2.5..6.0)).unwrap();
                (l, vec![1.0, 0.0], pt(&[rng.gen_range(-PI..PI)]), rng.gen_range(0..2))
            }
        };
        let s = InvolutionSpec::billiard_reflection(&l, &normal).unwrap();
        let Some(c) = mirror_pair_operator(&l, &s, chart, &x) else { continue };
        let asym = (&c - c.transpose()).amax() / c.amax();
        assert!(asym <= 1e-10, "asymmetry {asym}");
        let e = symmetric_eigenvalues(&c);
        assert!(*e.last().unwrap() < 0.0, "{e:?}");
        count += 1;
    }
}

fn verdicts_for(case: &Case) -> Result<hillkit_core::reversible::ReversibleVerdicts, Error> {
    let rev = classify_case(case);
    let split = split_hessian(case.l.as_ref(), &case.s, &rev)?;
    let report = analyze_orbit(case.l.as_ref(), &case.orbit, &default_rho_grid(64))?;
    reversible_verdicts(&rev, &case.s, &split, &report)
}

fn find(name: &str) -> Case {
    built_in_cases().into_iter().find(|c| c.name == name).unwrap()
}

#[test]
fn two_disk_orbit_is_a_hyperbolic_minimum() {
    let case = find("two disks, identity");
    let v = verdicts_for(&case).unwrap();
    assert!(v.plus_minimum);
    assert_eq!(v.full_minimum, Verdict::Predicted);
    assert_eq!(v.hyperbolic, Verdict::Predicted);
    assert!(v.min_rho_eigenvalue.unwrap() > 0.0);
    assert_eq!(v.multiplier_above_one, Verdict::Predicted);
    let (chain, _) = orbit_chain(case.l.as_ref(), &case.orbit).unwrap();
    for z in multipliers(&chain).unwrap() {
        assert!(z.im.abs() < 1e-12 && (z.norm() - 1.0).abs() > 1e-6, "{z}");
    }
    // Two convex mirrors of radius r at distance g: the round trip has
    // λ + 1/λ = 2(2G² - 1) with G = 1 + g/r.
    let (g, r) = (2.0f64, 1.0f64);
    let lambda = multipliers(&chain).unwrap().iter().map(|z| z.re).fold(0.0f64, f64::max);
    assert!((lambda + 1.0 / lambda - 2.0 * (2.0 * (1.0 + g / r).powi(2) - 1.0)).abs() < 1e-9, "{lambda}");
}

#[test]
fn swapped_two_disk_orbit_satisfies_the_mirror_parity_rule() {
    let v = verdicts_for(&find("two disks, swap")).unwrap();
    assert_eq!(v.orbit_type, 0);
    assert_eq!(v.c_first_nonpositive, Some(true));
    assert_eq!(v.c_last_nonpositive, Some(true));
    assert_eq!(v.full_minimum, Verdict::Predicted);
    assert_eq!(v.billiard_parity_rule, Verdict::Predicted);
    assert_eq!(v.multiplier_above_one, Verdict::Predicted);
}

#[test]
fn ellipse_major_axis_is_maximal_and_gets_no_prediction() {
    let case = find("ellipse major axis, minor mirror");
    let v = verdicts_for(&case).unwrap();
    assert!(!v.plus_minimum && v.plus_maximum);
    assert_eq!(v.multiplier_above_one, Verdict::Abstained);
    assert_eq!(v.billiard_parity_rule, Verdict::Abstained);
    let (chain, _) = orbit_chain(case.l.as_ref(), &case.orbit).unwrap();
    let m = multipliers(&chain).unwrap();
    assert!(m.iter().any(|z| z.re > 1.0 + 1e-3));
}

#[test]
fn ellipse_minor_axis_with_empty_even_domain_is_not_called_unstable() {
    // Under the minor-axis mirror both bounce points are fixed and the even
    // domain is trivial, so minimality of the half action says nothing.
    let case = find("ellipse minor axis, minor mirror");
    let v = verdicts_for(&case).unwrap();
    assert!(v.plus_minimum && !v.minus_positive);
    assert_eq!(v.full_minimum, Verdict::Abstained);
    assert_eq!(v.billiard_parity_rule, Verdict::Abstained);
    let (chain, _) = orbit_chain(case.l.as_ref(), &case.orbit).unwrap();
    for z in multipliers(&chain).unwrap() {
        assert!((z.norm() - 1.0).abs() < 1e-9 && z.im.abs() > 1e-3, "elliptic: {z}");
    }
}

#[test]
fn circle_diameter_has_degenerate_even_form_and_unit_multiplier() {
    let l = Billiard::circle(1.0);
    let s = InvolutionSpec::identity(1);
    let orbit = PeriodicOrbit::new(vec![pt(&[0.3]), pt(&[0.3 + PI])]);
    let rev = classify_reversible(&l, &orbit, &s).unwrap();
    let split = split_hessian(&l, &s, &rev).unwrap();
    let report = analyze_orbit(&l, &orbit, &default_rho_grid(16)).unwrap();
    let v = reversible_verdicts(&rev, &s, &split, &report).unwrap();
    assert!(v.plus_degenerate);
    assert_eq!(v.unit_multiplier, Verdict::Predicted);
}

#[test]
fn orthic_triangle_gets_no_instability_prediction() {
    let v = verdicts_for(&find("isosceles orthic triangle")).unwrap();
    assert_eq!(v.orbit_type, 1);
    assert_ne!(v.multiplier_above_one, Verdict::Predicted);
    assert_ne!(v.billiard_parity_rule, Verdict::Predicted);
    assert_eq!(v.hyperbolic, Verdict::Abstained);
}

#[test]
fn identity_type_one_is_flagged() {
    let l = StandardMap::classic(0.8);
    let s = InvolutionSpec::identity(1);
    let orbit = PeriodicOrbit::new(vec![pt(&[0.0])]);
    let rev = classify_reversible(&l, &orbit, &s).unwrap();
    assert_eq!(rev.orbit_type, 1);
    let split = split_hessian(&l, &s, &rev).unwrap();
    let report = analyze_orbit(&l, &orbit, &default_rho_grid(16)).unwrap();
    let v = reversible_verdicts(&rev, &s, &split, &report).unwrap();
    assert!(v.identity_type_one);
}

#[test]
fn all_built_in_verdicts_are_consistent() {
    for case in built_in_cases() {
        verdicts_for(&case).unwrap_or_else(|e| panic!("{}: {e}", case.name));
    }
}

#[test]
fn symmetric_refinement_finds_reversible_orbits() {
    let disks = Billiard::two_disks(1.0, 4.0).unwrap();
    let s = InvolutionSpec::identity(1);
    let r = refine_reversible(&disks, &s, 2, &[pt(&[0.4]), pt(&[PI - 0.3])], &[0, 1], &NewtonOptions::default()).unwrap();
    assert!(r.residual <= 1e-12);
    assert!((disks.ambient_point(0, &r.orbit.half[0]).unwrap() - pt(&[-1.0, 0.0])).norm() < 1e-10);

    let ellipse = Billiard::ellipse(2.0, 1.0);
    let s = InvolutionSpec::billiard_reflection(&ellipse, &[1.0, 0.0]).unwrap();
    let r = refine_reversible(&ellipse, &s, 0, &[pt(&[0.25])], &[0], &NewtonOptions::default()).unwrap();
    assert!(r.residual <= 1e-12);
    assert_eq!(r.orbit.orbit_type, 0);
    assert!(r.orbit.half[0][0].sin().abs() < 1e-10);

    let (l, orbit) = standard_map_two_orbit();
    let s = InvolutionSpec::negation(1);
    let r = refine_reversible(&l, &s, 0, &[pt(&[1.2])], &[0], &NewtonOptions::default()).unwrap();
    assert!((r.orbit.half[0][0].abs() - orbit.points[0][0].abs()).abs() < 1e-10, "{r:?}");
    assert!(action_gradient(&l, &r.orbit.orbit).unwrap().norm() <= 1e-12);
}
