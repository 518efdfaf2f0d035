use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistor_optics::closed_forms::{gallery, SurfaceGalleryEntry};
use twistor_optics::euclid::trace_reflection;
use twistor_optics::reflection::*;
use twistor_optics::twistor::{line_from_point_dir, EuclidPoint, MobiusRotation, OrientedLine};
use twistor_optics::TwistorError;

fn surfaces() -> Vec<SurfaceGalleryEntry> {
    vec![
        gallery("plane", &[0.3]).unwrap(),
        gallery("sphere", &[0.2, -0.1, 0.4, 1.3]).unwrap(),
        gallery("torus", &[2.0, 1.0]).unwrap(),
    ]
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A ray from far away aimed at a random point near the surface.
fn random_ray(rng: &mut ChaCha8Rng, s: &SurfaceGalleryEntry) -> (Vector3<f64>, Vector3<f64>) {
    let (c, radius) = s.implicit().bounds().unwrap_or((Vector3::new(0.0, 0.0, 0.3), 3.0));
    let target = c + radius * Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let mut from = random_unit(rng);
    if s.name == "plane" {
        from.z = from.z.abs().max(0.05);
    }
    let origin = target + (radius + 6.0) * from;
    (origin, (target - origin).normalize())
}

#[test]
fn thousand_events_match_vector_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for s in surfaces() {
        let mut solved = 0;
        let mut masked = 0;
        while solved < 400 {
            let (o, d) = random_ray(&mut rng, &s);
            let Ok(traced) = trace_reflection(&twistor_optics::euclid::Ray::new(o, d), &s.implicit()) else { continue };
            let ray = IncomingRay::from_point_dir(&o, &d, Some(0.0)).unwrap();
            let e = match solve_incidence(&ray, &s, IncidenceOptions::default()) {
                Ok(e) => e,
                Err(TwistorError::OutsideDomain(_)) => {
                    masked += 1;
                    continue;
                }
                Err(err) => panic!("{}: {err} for ray {o:?} {d:?}", s.name),
            };
            solved += 1;
            assert!((e.outgoing_direction() - traced.outgoing.dir).norm() < 1e-10, "{}", s.name);
            let hit = e.frame.apply_point(EuclidPoint::from_vector(&traced.hit.point));
            assert!(e.outgoing().distance_to(hit) < 1e-9, "{}", s.name);
            assert!(e.incoming().distance_to(hit) < 1e-9, "{}", s.name);
            assert!((e.point.to_vector() - traced.hit.point).norm() < 1e-9);
            // Recorded lines are the lines through the incidence point.
            let local = e.frame.apply_point(e.point);
            assert!((line_from_point_dir(local, e.xi1).eta - e.eta1).norm() < 1e-9);
            assert!((line_from_point_dir(local, e.xi2).eta - e.eta2).norm() < 1e-9);
            assert!(local.distance(&e.normal().point_at(e.r0)) < 1e-9);
        }
        assert!(masked < 10, "{}: {masked} masked hits", s.name);
        compared += solved;
    }
    assert!(compared >= 1000);
}

#[test]
fn reversing_the_outgoing_ray_returns_the_incoming_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for s in surfaces() {
        for _ in 0..50 {
            let (o, d) = random_ray(&mut rng, &s);
            let ray = IncomingRay::from_point_dir(&o, &d, Some(0.0)).unwrap();
            let Ok(e) = solve_incidence(&ray, &s, IncidenceOptions::default()) else { continue };
            let back = reflect_line(e.xi0, e.eta0, e.r0, e.outgoing().reversed().unwrap().xi).unwrap();
            let expected = e.incoming().reversed().unwrap();
            assert!((back.xi2 - expected.xi).norm() < 1e-10 * (1.0 + expected.xi.norm_sqr()));
            assert!((back.eta2 - expected.eta).norm() < 1e-10 * (1.0 + expected.eta.norm()) * (1.0 + expected.xi.norm_sqr()));
        }
    }
}

#[test]
fn vertical_ray_onto_unit_sphere() {
    let s = gallery("sphere", &[]).unwrap();
    let ray = IncomingRay::from_point_dir(&Vector3::new(0.0, 0.0, 5.0), &Vector3::new(0.0, 0.0, -1.0), None).unwrap();
    let e = solve_incidence(&ray, &s, IncidenceOptions::default()).unwrap();
    let up = Vector3::new(0.0, 0.0, 1.0);
    assert!((e.normal_direction() - up).norm() < 1e-12);
    assert!((e.point.to_vector() - up).norm() < 1e-12);
    assert!((e.outgoing_direction() - up).norm() < 1e-12);
    let out = e.outgoing_in(&MobiusRotation::IDENTITY).unwrap();
    assert!(out.xi.norm() < 1e-12 && out.eta.norm() < 1e-12);
    assert!(e.in_frame(&MobiusRotation::IDENTITY).is_err());
}

#[test]
fn horizontal_ray_onto_torus_equator() {
    let s = gallery("torus", &[2.0, 1.0]).unwrap();
    let ray = IncomingRay::from_point_dir(&Vector3::new(10.0, 0.0, 0.0), &Vector3::new(-1.0, 0.0, 0.0), None).unwrap();
    let e = solve_incidence(&ray, &s, IncidenceOptions { frame: Some(MobiusRotation::IDENTITY), ..Default::default() }).unwrap();
    assert_eq!(e.sheet, 0);
    assert!((e.xi0 - 1.0).norm() < 1e-10);
    assert!((e.point.to_vector() - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-10);
}

#[test]
fn ray_through_origin_hits_near_cap() {
    let s = gallery("sphere", &[0.0, 0.0, -2.0, 1.0]).unwrap();
    let d = Vector3::new(0.2, -0.1, -1.0).normalize();
    let ray = IncomingRay::from_point_dir(&Vector3::zeros(), &d, Some(0.0)).unwrap();
    let e = solve_incidence(&ray, &s, IncidenceOptions::default()).unwrap();
    let p = e.point.to_vector();
    // Smaller root of |s d - c|² = 1.
    let c = Vector3::new(0.0, 0.0, -2.0);
    let b = d.dot(&c);
    let s_near = b - (b * b - c.norm_squared() + 1.0).sqrt();
    assert!((p - s_near * d).norm() < 1e-10);
}

#[test]
fn misses_report_no_intersection() {
    let s = gallery("sphere", &[]).unwrap();
    let ray = IncomingRay::from_point_dir(&Vector3::new(3.0, 0.0, 5.0), &Vector3::new(0.0, 0.0, -1.0), None).unwrap();
    assert_eq!(solve_incidence(&ray, &s, IncidenceOptions::default()), Err(TwistorError::NoIntersection));
}

#[test]
fn grazing_events_are_flagged_and_finite() {
    let e = reflect_line(Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.1), 0.0, Complex64::new(0.6, 0.8)).unwrap();
    assert!(e.grazing);
    assert!(e.outgoing().is_finite());
}

#[test]
fn world_line_rays_use_identity_frame() {
    let s = gallery("plane", &[0.0]).unwrap();
    let xi1 = Complex64::new(1.5, 0.5);
    let line = OrientedLine::through(EuclidPoint::from_xyz(0.2, 0.1, 2.0), xi1);
    let e = solve_incidence(&IncomingRay::world(line), &s, IncidenceOptions::default()).unwrap();
    let w = e.in_frame(&MobiusRotation::IDENTITY).unwrap();
    assert!((w.xi2 - 1.0 / xi1.conj()).norm() < 1e-12);
    assert!(w.point.t.abs() < 1e-12);
}
