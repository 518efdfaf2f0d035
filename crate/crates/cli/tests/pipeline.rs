use std::process::Command;

use nalgebra::Vector3;
use num_complex::Complex64;
use twistor_cli::export::ExportRecord;
use twistor_cli::run::{reflect_records, wavefront_records, RunOptions};
use twistor_cli::scene::{parse_scene, Branch, PlaneDirection, WaveSpec};
use twistor_cli::verify::{scene_checks, tol};
use twistor_optics::closed_forms::Shape;
use twistor_optics::euclid::{wavefront_by_path_length, Ray};
use twistor_optics::twistor::{antipode, dir_to_vector};

const SPHERE_AXIS: &str = "[surface]\nname = sphere\n[wave]\nkind = plane\ndirection = 0, 0, -1\n[grid]\nu = -0.6, 0.6\nv = -0.6, 0.6\nsize = 15x15\n[output]\noffsets = 2.5, 3\n";

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn hits(rows: &[ExportRecord]) -> impl Iterator<Item = &ExportRecord> {
    rows.iter().filter(|r| r.xi.is_some())
}

#[test]
fn steep_torus_scene_parses() {
    let cfg = parse_scene("[surface]\nname = torus\nparams = 2, 1\n[wave]\nkind = plane\nxi1 = 2.4\n").unwrap();
    assert_eq!(cfg.surface_entry().unwrap().shape, Shape::Torus { a: 2.0, b: 1.0 });
    assert_eq!(cfg.wave, WaveSpec::Plane { direction: PlaneDirection::Chart(c(2.4, 0.0)) });
    // About 45 degrees below the horizontal.
    let d = dir_to_vector(c(2.4, 0.0));
    assert!((d.z.acos().to_degrees() - 135.0).abs() < 1.0);
}

#[test]
fn sphere_axis_reflect_matches_closed_form() {
    let rows = reflect_records(&parse_scene(SPHERE_AXIS).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 225);
    assert!(rows.iter().all(|r| !r.shadow));
    for r in hits(&rows) {
        let (xi, eta) = (r.xi.unwrap(), r.eta.unwrap());
        assert!((eta + 0.5 * xi * (1.0 + xi.norm_sqr()).sqrt()).norm() < 1e-12);
        // Incidence point on the unit sphere.
        assert!((r.point.unwrap().norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn torus_axis_shadow_is_an_annulus_complement() {
    let text = "[surface]\nname = torus\nparams = 2, 1\n[grid]\nu = -3.7, 3.7\nv = -3.7, 3.7\nsize = 38x38\n";
    let cfg = parse_scene(text).unwrap();
    let rows = reflect_records(&cfg, RunOptions::default()).unwrap();
    for r in &rows {
        let rho = r.nu.norm();
        if (rho - 1.0).abs() > 1e-3 && (rho - 3.0).abs() > 1e-3 {
            assert_eq!(r.shadow, !(1.0..3.0).contains(&rho), "rho = {rho}");
        }
    }
}

#[test]
fn plane_mirror_images_the_source() {
    let text = "[surface]\nname = plane\n[wave]\nkind = spherical\nsource = 0, 0, 2\n[grid]\nu = -0.7, 0.7\nv = -0.7, 0.7\nsize = 8x8\n";
    let rows = reflect_records(&parse_scene(text).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(hits(&rows).count(), 64);
    for r in hits(&rows) {
        assert!((r.eta.unwrap() / r.xi.unwrap() - 2.0).norm() < 1e-12);
    }
}

#[test]
fn minus_branch_reverses_lines() {
    let mut cfg = parse_scene(SPHERE_AXIS).unwrap();
    let plus = reflect_records(&cfg, RunOptions::default()).unwrap();
    cfg.output.branch = Branch::Minus;
    let minus = reflect_records(&cfg, RunOptions::default()).unwrap();
    for (p, m) in plus.iter().zip(minus.iter()) {
        let (Some(xp), Some(xm)) = (p.xi, m.xi) else { continue };
        assert!((antipode(xp).unwrap() - xm).norm() < 1e-12 * (1.0 + xm.norm_sqr()));
        assert_eq!(p.point, m.point);
    }
}

/// The twistor wavefronts against clouds built by tracing each ray and
/// walking the remaining path length along the reflection.
#[test]
fn wavefronts_match_equal_path_clouds() {
    let scenes = [
        (SPHERE_AXIS.to_string(), None),
        (
            "[surface]\nname = sphere\nparams = 0, 0, -2, 1\n[wave]\nkind = spherical\nsource = 0, 0, 0\n[grid]\nu = -0.2, 0.2\nv = -0.2, 0.2\nsize = 11x11\n[output]\noffsets = 2.5, 4\n".to_string(),
            Some(Vector3::zeros()),
        ),
        (
            "[surface]\nname = torus\nparams = 2, 1\n[wave]\nkind = plane\nxi1 = 1\n[grid]\nu = -0.6, 0.6\nv = -0.6, 0.6\nsize = 13x13\n[output]\noffsets = 1, 2\n".to_string(),
            None,
        ),
        // Whole tori: shadow, grazing rays and both sheets on one grid.
        (
            "[surface]\nname = torus\nparams = 2, 1\n[grid]\nu = -3.5, 3.5\nv = -3.5, 3.5\nsize = 40x40\n[output]\noffsets = 0, 2\n".to_string(),
            None,
        ),
        (
            "[surface]\nname = torus\nparams = 2, 1\n[wave]\nkind = plane\nxi1 = 2.4\n[grid]\nu = -3.5, 3.5\nv = -3.5, 3.5\nsize = 40x40\n[output]\noffsets = 0, 2\n".to_string(),
            None,
        ),
    ];
    for (text, source) in scenes {
        let cfg = parse_scene(&text).unwrap();
        let refl = twistor_cli::run::reflected(&cfg).unwrap();
        let surface = cfg.surface_entry().unwrap();
        let implicit = twistor_optics::reflection::ReflectingSurface::implicit(&surface);
        let sets = wavefront_records(&cfg, RunOptions::default()).unwrap();
        for (offset, rows) in sets {
            let mut compared = 0;
            for r in hits(&rows) {
                let ray = refl.incoming_ray(r.nu).unwrap();
                let d = ray.direction();
                // Plane waves start on the plane through the origin; back off so the ray starts outside.
                let (origin, extra) = match source {
                    Some(s) => (s, 0.0),
                    None => (ray.world_point(ray.emission.unwrap_or(0.0)) - 10.0 * d, 10.0),
                };
                let oracle = wavefront_by_path_length(&[Ray::new(origin, d)], Some(&implicit), offset + extra)[0].unwrap();
                let err = (r.point.unwrap().to_vector() - oracle).norm();
                assert!(err < tol::CLOSED_FORM_POTENTIAL, "{} at {}: {err:e}", cfg.name(), r.nu);
                compared += 1;
            }
            assert!(compared > 50, "{}: {compared}", cfg.name());
        }
    }
}

#[test]
fn exports_are_byte_stable() {
    let cfg = parse_scene(SPHERE_AXIS).unwrap();
    let a = twistor_cli::export::csv_bytes(&reflect_records(&cfg, RunOptions::default()).unwrap()).unwrap();
    let b = twistor_cli::export::csv_bytes(&reflect_records(&cfg, RunOptions::default()).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scene_verification_subset() {
    let report = scene_checks(&parse_scene(SPHERE_AXIS).unwrap());
    assert!(report.iter().all(|c| c.pass), "{report:#?}");
    let names: Vec<&str> = report.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"sphere_axis_f2") && names.contains(&"oracle_equivalence"));
    assert!(!names.contains(&"round_trip"));

    let unmasked = "[surface]\nname = torus\nparams = 2, 1\nmask = 0\n[grid]\nu = 1.5, 2.5\nv = -0.5, 0.5\nsize = 9x9\n";
    let report = scene_checks(&parse_scene(unmasked).unwrap());
    let mask = report.iter().find(|c| c.name == "torus_mask").unwrap();
    assert!(!mask.pass && mask.note.contains("config error"));
}

fn twistor(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_twistor")).args(args).env("TWISTOR_THREADS", "2").output().unwrap()
}

#[test]
fn command_line_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = twistor(&["gallery", "--out", d.to_str().unwrap()]);
    assert!(out.status.success());
    let scene = d.join("sphere-plane-axis.scene");
    assert!(scene.exists());

    let results = d.join("results");
    let args = ["--scene", scene.to_str().unwrap(), "--out", results.to_str().unwrap(), "--grid", "9x9", "--offsets", "-0.5,1"];
    let out = twistor(&[&["reflect"][..], &args].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(results.join("reflected.csv")).unwrap();
    assert_eq!(csv.lines().count(), 82);
    assert!(csv.starts_with("nu_re,nu_im,xi_re,xi_im,eta_re,eta_im,r,C,x1,x2,x3,shadow\n"));

    let out = twistor(&[&["wavefront"][..], &args].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..2 {
        assert!(results.join(format!("wavefront_{k}.csv")).exists());
    }
    let bad = d.join("bad.scene");
    std::fs::write(&bad, "[surface]\nname = sphere\ncolour = red\n").unwrap();
    let out = twistor(&["reflect", "--scene", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = twistor(&["verify", "--scene", scene.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let unmasked = d.join("unmasked.scene");
    std::fs::write(&unmasked, "[surface]\nname = torus\nparams = 2, 1\nmask = 0\n[grid]\nu = 1.5, 2.5\nv = -0.5, 0.5\nsize = 9x9\n").unwrap();
    let out = twistor(&["verify", "--scene", unmasked.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("torus_mask"));
}

#[test]
fn obj_output_is_vertices_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_scene(SPHERE_AXIS).unwrap();
    cfg.output.path = dir.path().to_path_buf();
    cfg.output.format = twistor_cli::scene::Format::Obj;
    let written = twistor_cli::run::run_wavefront(&cfg, RunOptions::default()).unwrap();
    assert_eq!(written.len(), 2);
    let text = std::fs::read_to_string(&written[0]).unwrap();
    assert!(text.lines().all(|l| l.starts_with("v ") || l.starts_with('#')));
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 225);
    assert!(text.contains(&twistor_cli::export::scene_hash(&cfg)));
}
