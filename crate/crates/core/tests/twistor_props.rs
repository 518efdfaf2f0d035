use num_complex::Complex64;
use proptest::prelude::*;
use twistor_optics::twistor::*;

fn complex(bound: f64) -> impl Strategy<Value = Complex64> {
    (-bound..bound, -bound..bound).prop_map(|(a, b)| Complex64::new(a, b))
}

fn rotation() -> impl Strategy<Value = MobiusRotation> {
    (complex(1.0), complex(1.0))
        .prop_filter("nonzero", |(a, b)| a.norm() + b.norm() > 1e-3)
        .prop_map(|(a, b)| MobiusRotation::normalized(a, b))
}

proptest! {
    #[test]
    fn point_line_round_trip(z in complex(10.0), t in -10.0..10.0f64, xi in complex(4.0)) {
        let p = EuclidPoint::new(z, t);
        let line = line_from_point_dir(p, xi);
        let back = point_from_line(xi, line.eta, affine_param(p, xi));
        prop_assert!(back.distance(&p) < 1e-10);
    }

    #[test]
    fn chord_is_direction(xi in complex(4.0), eta in complex(5.0), r in -5.0..5.0f64, dr in -3.0..3.0f64) {
        let a = point_from_line(xi, eta, r).to_vector();
        let b = point_from_line(xi, eta, r + dr).to_vector();
        prop_assert!(((b - a) - dr * dir_to_vector(xi)).norm() < 1e-10);
        prop_assert!((dir_to_vector(xi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn points_re_encode_to_same_line(xi in complex(4.0), eta in complex(5.0), r in -5.0..5.0f64) {
        let p = point_from_line(xi, eta, r);
        let again = line_from_point_dir(p, xi);
        prop_assert!((again.eta - eta).norm() < 1e-12 * (1.0 + eta.norm()) * (1.0 + xi.norm_sqr()));
    }

    #[test]
    fn foot_point_is_closest(xi in complex(4.0), eta in complex(5.0)) {
        let foot = point_from_line(xi, eta, 0.0).norm();
        for k in 0..=20 {
            let r = -1.0 + 0.1 * k as f64;
            prop_assert!(point_from_line(xi, eta, r).norm() >= foot - 1e-12);
        }
    }

    #[test]
    fn rotation_commutes_with_points(rot in rotation(), xi in complex(3.0), eta in complex(3.0), r in -3.0..3.0f64) {
        let line = OrientedLine::new(xi, eta);
        let Ok((moved, r2)) = rotate_line(&rot, &line, r) else { return Ok(()); };
        prop_assume!(moved.xi.norm() < 1e3);
        prop_assert_eq!(r2, r);
        let expected = rot.apply_point(line.point_at(r));
        prop_assert!(moved.point_at(r2).distance(&expected) < 1e-10);
        let dir = rot.apply_vector(&dir_to_vector(xi));
        prop_assert!((dir - dir_to_vector(moved.xi)).norm() < 1e-10);
    }

    #[test]
    fn rotation_inverse_and_compose(a in rotation(), b in rotation(), xi in complex(2.0)) {
        let ab = a.compose(&b);
        let m = ab.matrix() - a.matrix() * b.matrix();
        prop_assert!(m.norm() < 1e-12);
        let id = a.compose(&a.inverse()).matrix() - nalgebra::Matrix3::identity();
        prop_assert!(id.norm() < 1e-12);
        if let (Ok(x1), true) = (a.apply(xi), true) {
            if let Ok(x0) = a.inverse().apply(x1) {
                prop_assert!((x0 - xi).norm() < 1e-9 * (1.0 + xi.norm_sqr()));
            }
        }
        let det = a.matrix().determinant();
        prop_assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_commutes_with_points(z0 in complex(5.0), t0 in -5.0..5.0f64, xi in complex(3.0), eta in complex(3.0), r in -3.0..3.0f64) {
        let tr = Translation::new(z0, t0);
        let (moved, r2) = translate_line(&tr, &OrientedLine::new(xi, eta), r);
        prop_assert_eq!(moved.xi, xi);
        let p = point_from_line(xi, eta, r);
        let q = moved.point_at(r2);
        prop_assert!((q.z - (p.z + z0)).norm() < 1e-12 * (1.0 + z0.norm() + eta.norm()) && (q.t - (p.t + t0)).abs() < 1e-12 * (1.0 + t0.abs() + eta.norm()));
    }

    #[test]
    fn antipode_is_involution(xi in complex(50.0)) {
        prop_assume!(xi.norm() > 1e-3);
        let back = antipode(antipode(xi).unwrap()).unwrap();
        prop_assert!((back - xi).norm() < 1e-12 * (1.0 + xi.norm()));
        prop_assert!((dir_to_vector(antipode(xi).unwrap()) + dir_to_vector(xi)).norm() < 1e-12);
    }
}

#[test]
fn ten_thousand_round_trips() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = EuclidPoint::from_xyz(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let xi = Complex64::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        if xi.norm() > 4.0 {
            continue;
        }
        let line = line_from_point_dir(p, xi);
        worst = worst.max(point_from_line(xi, line.eta, affine_param(p, xi)).distance(&p));
    }
    assert!(worst < 1e-10, "worst round trip {worst:e}");
}
