//! Reversible orbits shared by the reversible and acceptance suites.

use hillkit_core::dls::{refine_orbit, step_blocks, NewtonOptions, PeriodicOrbit, Point, Step};
use hillkit_core::models::{Billiard, StandardMap};
use hillkit_core::reversible::InvolutionSpec;
use hillkit_core::DiscreteLagrangian;
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn pt(v: &[f64]) -> Point {
    Point::from_column_slice(v)
}

pub fn two_disk_orbit() -> PeriodicOrbit {
    PeriodicOrbit::with_charts(vec![pt(&[0.0]), pt(&[PI])], vec![0, 1])
}

/// Period-2 orbit `(x, -x)` of the standard map with `K = -6`: `4x = 6 sin x`.
pub fn standard_map_two_orbit() -> (StandardMap, PeriodicOrbit) {
    let l = StandardMap::classic(-6.0);
    let mut x = 1.5f64;
    for _ in 0..50 {
        x -= (4.0 * x - 6.0 * x.sin()) / (4.0 - 6.0 * x.cos());
    }
    (l, PeriodicOrbit::new(vec![pt(&[x]), pt(&[-x])]))
}

/// Feet of the altitudes of the triangle, as arclength along each side.
pub fn orthic_orbit(v: &[[f64; 2]; 3]) -> PeriodicOrbit {
    let points = (0..3)
        .map(|k| {
            let (p, q, opp) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
            let d = [q[0] - p[0], q[1] - p[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            pt(&[((opp[0] - p[0]) * d[0] + (opp[1] - p[1]) * d[1]) / len])
        })
        .collect();
    PeriodicOrbit::with_charts(points, vec![0, 1, 2])
}

pub struct Case {
    pub name: &'static str,
    pub l: Box<dyn DiscreteLagrangian>,
    pub s: InvolutionSpec,
    pub orbit: PeriodicOrbit,
    pub orbit_type: usize,
}

pub fn built_in_cases() -> Vec<Case> {
    let ellipse = Billiard::ellipse(2.0, 1.0);
    let disks = Billiard::two_disks(1.0, 4.0).unwrap();
    let (sm, sm_orbit) = standard_map_two_orbit();
    let iso = [[-2.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
    let tri = Billiard::polygon(&iso).unwrap();
    let spheroid = Billiard::ellipsoid(1.5, 1.2, 1.0);
    let major = PeriodicOrbit::new(vec![pt(&[0.0]), pt(&[PI])]);
    let minor = PeriodicOrbit::new(vec![pt(&[PI / 2.0]), pt(&[-PI / 2.0])]);
    let polar = PeriodicOrbit::new(vec![pt(&[PI / 2.0, 0.0]), pt(&[PI / 2.0, PI])]);
    vec![
        Case { name: "two disks, identity", s: InvolutionSpec::identity(1), l: Box::new(disks.clone()), orbit: two_disk_orbit(), orbit_type: 2 },
        Case {
            name: "two disks, swap",
            s: InvolutionSpec::billiard_reflection(&disks, &[1.0, 0.0]).unwrap(),
            l: Box::new(disks.clone()),
            orbit: two_disk_orbit(),
            orbit_type: 0,
        },
        Case {
            name: "two disks, axis",
            s: InvolutionSpec::billiard_reflection(&disks, &[0.0, 1.0]).unwrap(),
            l: Box::new(disks),
            orbit: two_disk_orbit(),
            orbit_type: 2,
        },
        Case {
            name: "ellipse major axis, minor mirror",
            s: InvolutionSpec::billiard_reflection(&ellipse, &[1.0, 0.0]).unwrap(),
            l: Box::new(ellipse.clone()),
            orbit: major.clone(),
            orbit_type: 0,
        },
        Case {
            name: "ellipse major axis, major mirror",
            s: InvolutionSpec::billiard_reflection(&ellipse, &[0.0, 1.0]).unwrap(),
            l: Box::new(ellipse.clone()),
            orbit: major.clone(),
            orbit_type: 2,
        },
        Case { name: "ellipse major axis, identity", s: InvolutionSpec::identity(1), l: Box::new(ellipse.clone()), orbit: major, orbit_type: 2 },
        Case {
            name: "ellipse minor axis, minor mirror",
            s: InvolutionSpec::billiard_reflection(&ellipse, &[1.0, 0.0]).unwrap(),
            l: Box::new(ellipse.clone()),
            orbit: minor.clone(),
            orbit_type: 2,
        },
        Case {
            name: "ellipse minor axis, major mirror",
            s: InvolutionSpec::billiard_reflection(&ellipse, &[0.0, 1.0]).unwrap(),
            l: Box::new(ellipse),
            orbit: minor,
            orbit_type: 0,
        },
        Case {
            name: "isosceles orthic triangle",
            s: InvolutionSpec::billiard_reflection(&tri, &[1.0, 0.0]).unwrap(),
            orbit: refine_orbit(&tri, &orthic_orbit(&iso), &NewtonOptions::default()).unwrap().orbit,
            l: Box::new(tri),
            orbit_type: 1,
        },
        Case {
            name: "ellipsoid long axis, vertical mirror",
            s: InvolutionSpec::billiard_reflection(&spheroid, &[1.0, 0.0, 0.0]).unwrap(),
            l: Box::new(spheroid.clone()),
            orbit: polar.clone(),
            orbit_type: 0,
        },
        Case {
            name: "ellipsoid long axis, equator mirror",
            s: InvolutionSpec::billiard_reflection(&spheroid, &[0.0, 0.0, 1.0]).unwrap(),
            l: Box::new(spheroid),
            orbit: polar,
            orbit_type: 2,
        },
        Case { name: "standard map 2-orbit, identity", s: InvolutionSpec::identity(1), l: Box::new(sm.clone()), orbit: sm_orbit.clone(), orbit_type: 2 },
        Case { name: "standard map 2-orbit, negation", s: InvolutionSpec::negation(1), l: Box::new(sm), orbit: sm_orbit, orbit_type: 0 },
        Case {
            name: "standard map fixed point, negation",
            s: InvolutionSpec::negation(1),
            l: Box::new(StandardMap::classic(0.8)),
            orbit: PeriodicOrbit::new(vec![pt(&[0.0])]),
            orbit_type: 1,
        },
    ]
}

pub fn mirror_pair_operator(l: &Billiard, s: &InvolutionSpec, chart: usize, x: &Point) -> Option<DMatrix<f64>> {
    let (c, sx) = s.apply(chart, x).ok()?;
    if l.point_distance(c, &sx, chart, x) < 0.1 {
        return None;
    }
    let blocks = step_blocks(l, Step::new(0, c, chart), &sx, x).ok()?;
    Some(-blocks.twist * s.jacobian(chart, x).ok()?)
}
