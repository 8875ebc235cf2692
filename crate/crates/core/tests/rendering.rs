mod common;

use cdm::data::{sample_shape, ShapeKind, ShapeSpec};
use cdm::geometry::{orbit_viewpoints, Camera};
use cdm::rasterizer::{hard_zbuffer, render_depth, render_silhouette, SplatConfig};
use cdm::{rng, PointCloud};
use nalgebra::{Rotation3, Unit};
use rand::Rng as _;

fn random_motion(r: &mut rng::Rng) -> Camera {
    let axis = Unit::new_normalize(rng::normal_rows(r, 1)[0]);
    let rot = Rotation3::from_axis_angle(&axis, r.random_range(0.0..6.28));
    let t = rng::normal_rows(r, 1)[0] * 0.3;
    Camera::identity(1, 1).with_extrinsics(*rot.matrix(), t).unwrap()
}

#[test]
fn rigid_motion_consistency() {
    for seed in 0..20 {
        let mut r = rng::stream(seed, 50);
        let cloud = PointCloud::new(rng::normal_rows(&mut r, 200).into_iter().map(|p| p * 0.4).collect()).unwrap();
        let cam = Camera::look_at_orbit(r.random_range(0.0..6.28), 0.4, 3.0, 24.0, [12.0, 12.0], 24, 24).unwrap();
        let cfg = SplatConfig::for_orbit(24, 3.0);
        let m = random_motion(&mut r);
        let moved = cloud.map_positions(|p| m.rotation() * p + m.translation());
        let a = render_depth(&moved, &cam, &cfg).unwrap();
        let b = render_depth(&cloud, &cam.compose(&m), &cfg).unwrap();
        for (x, y) in a.depth().iter().zip(b.depth()) {
            assert!((x - y).abs() <= 1e-9, "seed {seed}: {x} vs {y}");
        }
    }
}

#[test]
fn on_axis_point_depth_is_exact() {
    // The principal point sits on the center of pixel (7, 7).
    let cam = Camera::look_at_orbit(1.1, 0.2, 2.5, 16.0, [7.5, 7.5], 16, 16).unwrap();
    let mut cfg = SplatConfig::for_orbit(16, 2.5);
    cfg.point_size = 0.1;
    let p = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
    let d = render_depth(&p, &cam, &cfg).unwrap();
    for (row, col) in [(6, 7), (7, 6), (7, 7), (7, 8), (8, 7)] {
        assert!((d.at(row, col) - 2.5).abs() < 1e-15, "{row},{col}: {}", d.at(row, col));
    }
    assert_eq!(d.at(0, 0), cfg.far);
    assert!(!d.covered(0, 0));
}

#[test]
fn zbuffer_and_silhouette_match_brute_force() {
    let cloud = sample_shape(&ShapeSpec {
        kind: ShapeKind::Torus { major: 1.0, minor: 0.3 },
        n_points: 600,
        seed: 2,
    })
    .unwrap();
    let cam = Camera::look_at_orbit(0.4, 0.6, 3.0, 20.0, [10.0, 10.0], 20, 20).unwrap();
    for views in orbit_viewpoints(&cam, 3, 3.0, 0.6).unwrap().cameras() {
        let cfg = SplatConfig::for_orbit(20, 3.0);
        let z = hard_zbuffer(&cloud, views, &cfg).unwrap();
        assert_eq!(z, common::brute_zbuffer(&cloud, views, &cfg));
        let sil = render_silhouette(&cloud, views, &cfg).unwrap();
        let mask = render_depth(&cloud, views, &cfg).unwrap().mask().to_vec();
        assert_eq!(sil, mask);
    }
}

#[test]
fn depth_is_bounded_by_contributing_points() {
    let mut r = rng::stream(3, 51);
    let cloud = PointCloud::new(rng::normal_rows(&mut r, 300).into_iter().map(|p| p * 0.5).collect()).unwrap();
    let cam = Camera::look_at_orbit(0.0, 0.0, 3.0, 20.0, [10.0, 10.0], 20, 20).unwrap();
    let cfg = SplatConfig::for_orbit(20, 3.0);
    let d = render_depth(&cloud, &cam, &cfg).unwrap();
    let (lo, hi) = cloud
        .positions()
        .iter()
        .map(|p| (cam.rotation() * p + cam.translation()).z)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
    for (k, &z) in d.depth().iter().enumerate() {
        if d.mask()[k] {
            assert!(z >= lo - 1e-12 && z <= hi + 1e-12);
        }
    }
}

#[test]
fn moving_a_point_along_its_ray_increases_depth() {
    let cam = Camera::look_at_orbit(0.7, 0.1, 3.0, 16.0, [8.0, 8.0], 16, 16).unwrap();
    let cfg = SplatConfig::for_orbit(16, 3.0);
    let c = cam.center();
    let p = nalgebra::Vector3::new(0.1, -0.2, 0.15);
    let mut last = 0.0;
    for s in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let q = c + (p - c) * s;
        let d = render_depth(&PointCloud::new(vec![q]).unwrap(), &cam, &cfg).unwrap();
        let covered: Vec<f64> = (0..256).filter(|&k| d.mask()[k]).map(|k| d.depth()[k]).collect();
        assert!(!covered.is_empty());
        assert!(covered[0] > last);
        last = covered[0];
    }
}

#[test]
fn silhouette_is_invariant_under_radial_scaling() {
    let mut r = rng::stream(9, 52);
    let cloud = PointCloud::new(rng::normal_rows(&mut r, 150).into_iter().map(|p| p * 0.4).collect()).unwrap();
    let cam = Camera::look_at_orbit(2.0, -0.3, 3.0, 24.0, [12.0, 12.0], 24, 24).unwrap();
    let cfg = SplatConfig::for_orbit(24, 3.0);
    // Scaling about the camera center keeps every projection fixed.
    let c = cam.center();
    let scaled = cloud.map_positions(|p| c + (p - c) * 0.8);
    assert_eq!(
        render_silhouette(&cloud, &cam, &cfg).unwrap(),
        render_silhouette(&scaled, &cam, &cfg).unwrap()
    );
}
