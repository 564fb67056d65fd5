use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3};
use nfpae_core::geometry::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA_28: f64 = 0.010_706_873_5;

/// Rz(yaw) * Ry(pitch) * Rx(roll) from elementary rotations.
fn oracle_rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vec3::x_axis(), roll);
    let ry = Rotation3::from_axis_angle(&Vec3::y_axis(), pitch);
    let rz = Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
    (rz * ry * rx).into_inner()
}

fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
    (a - b).amax() <= tol
}

#[test]
fn wavelength_at_28_ghz() {
    assert!((wavelength(28e9).unwrap() - LAMBDA_28).abs() < 1e-15);
}

#[test]
fn bs_grid_positions() {
    let odd = UraSpec::half_wavelength(3, 3, 0.004).unwrap();
    assert_eq!(bs_antenna_position(&odd, 2, 2).unwrap(), Vec3::zeros());
    let two = UraSpec::half_wavelength(2, 2, 0.004).unwrap();
    assert!(close(&bs_antenna_position(&two, 1, 1).unwrap(), &Vec3::new(-0.001, -0.001, 0.0), 1e-15));
    let big = UraSpec::half_wavelength(120, 120, LAMBDA_28).unwrap();
    let p = bs_antenna_position(&big, 120, 1).unwrap();
    assert!((p.x - 0.318_529_486_625).abs() < 1e-14);
    assert!(bs_antenna_position(&big, 0, 1).is_err());
    assert!(bs_antenna_position(&big, 121, 1).is_err());
}

#[test]
fn ms_grid_positions() {
    let five = UraSpec::half_wavelength(5, 5, 0.004).unwrap();
    assert_eq!(ms_local_antenna_position(&five, 3, 3).unwrap(), Vec2::zeros());
    let two = UraSpec::half_wavelength(2, 2, 0.004).unwrap();
    let q = ms_local_antenna_position(&two, 1, 2).unwrap();
    assert!((q - Vec2::new(-0.001, 0.001)).amax() < 1e-15);
    let hundred = UraSpec::half_wavelength(100, 100, LAMBDA_28).unwrap();
    let c = ms_local_antenna_position(&hundred, 1, 1).unwrap();
    assert!((c.x + 0.264_995_119_125).abs() < 1e-14);
    assert!((c.y + 0.264_995_119_125).abs() < 1e-14);
}

#[test]
fn basis_examples() {
    let id = rotation_basis(&EulerAngles::zero());
    assert_eq!(id.ex, Vec3::x());
    assert_eq!(id.ey, Vec3::y());
    let quarter = rotation_basis(&EulerAngles::new(0.0, 0.0, FRAC_PI_2).unwrap());
    assert!(close(&quarter.ex, &Vec3::y(), 1e-15));
    assert!(close(&quarter.ey, &-Vec3::x(), 1e-15));
}

#[test]
fn antenna_position_examples() {
    let pose = Pose::new(Vec3::new(1.0, -2.0, 4.0), EulerAngles::new(0.3, -0.2, 1.1).unwrap()).unwrap();
    assert_eq!(ms_antenna_global_position(&pose, &Vec2::zeros()), pose.position);
    let level = Pose::new(pose.position, EulerAngles::zero()).unwrap();
    let p = ms_antenna_global_position(&level, &Vec2::new(0.02, -0.03));
    assert!(close(&p, &Vec3::new(1.02, -2.03, 4.0), 1e-15));
}

#[test]
fn hundred_thousand_random_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_ortho: f64 = 0.0;
    let mut worst_pos: f64 = 0.0;
    for _ in 0..100_000 {
        let (r, p, y) = (
            rng.random_range(-PI..PI),
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            rng.random_range(-PI..PI),
        );
        let b = rotation_basis(&EulerAngles::new(r, p, y).unwrap());
        worst_ortho = worst_ortho
            .max((b.ex.norm() - 1.0).abs())
            .max((b.ey.norm() - 1.0).abs())
            .max(b.ex.dot(&b.ey).abs());
        let pose = Pose::new(
            Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..10.0)),
            EulerAngles::new(r, p, y).unwrap(),
        )
        .unwrap();
        let q = Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let oracle = pose.position + oracle_rotation(r, p, y) * Vec3::new(q.x, q.y, 0.0);
        worst_pos = worst_pos.max((ms_antenna_global_position(&pose, &q) - oracle).amax());
    }
    assert!(worst_ortho < 1e-12, "orthonormality error {worst_ortho}");
    assert!(worst_pos < 1e-12, "position error {worst_pos}");
}

#[test]
fn fresnel_examples() {
    assert_eq!(fresnel_distance(0.5, 0.004).unwrap(), 1.25);
    assert_eq!(fresnel_distance(0.0, 0.004).unwrap(), 0.0);
    assert!((fresnel_distance(1e-9, 0.004).unwrap()) < 1e-9);
    assert!((fresnel_distance(0.5, LAMBDA_28).unwrap() - 0.900_276_235_472_667).abs() < 1e-12);
    assert!(fresnel_distance(0.5, 0.0).is_err());
}

#[test]
fn rayleigh_examples() {
    assert_eq!(rayleigh_distance(0.5, 0.004).unwrap(), 125.0);
    let sub = (0.01_f64 + 0.01).sqrt();
    assert!((rayleigh_distance(sub, 0.004).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(rayleigh_distance(1.0, 2.0).unwrap(), 1.0);
    assert!(rayleigh_distance(-1.0, 2.0).is_err());
}

#[test]
fn cosine_examples() {
    assert_eq!(aoa_cosines(&Vec3::new(0.0, 0.0, 3.0), &Vec3::zeros()).unwrap(), (0.0, 0.0));
    assert_eq!(aoa_cosines(&Vec3::new(3.0, 0.0, 0.0), &Vec3::zeros()).unwrap(), (1.0, 0.0));
    assert!(aoa_cosines(&Vec3::zeros(), &Vec3::zeros()).is_err());
}

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

proptest! {
    #[test]
    fn basis_matches_elementary_rotations(r in angle(), p in -FRAC_PI_2..FRAC_PI_2, y in angle()) {
        let b = rotation_basis(&EulerAngles::new(r, p, y).unwrap());
        let o = oracle_rotation(r, p, y);
        prop_assert!((b.ex - o.column(0)).amax() < 1e-12);
        prop_assert!((b.ey - o.column(1)).amax() < 1e-12);
    }

    #[test]
    fn cosines_are_normalized_dot_products(
        t in prop::array::uniform3(-10.0..10.0f64),
        r in prop::array::uniform3(-1.0..1.0f64),
    ) {
        let target = Vec3::from(t);
        let reference = Vec3::from(r);
        let d = target - reference;
        prop_assume!(d.norm() > 1e-6);
        let (cx, cy) = aoa_cosines(&target, &reference).unwrap();
        prop_assert!((cx - d.dot(&Vec3::x()) / d.norm()).abs() < 1e-12);
        prop_assert!((cy - d.dot(&Vec3::y()) / d.norm()).abs() < 1e-12);
    }

    #[test]
    fn euler_matrix_roundtrip(r in angle(), p in -1.5..1.5f64, y in angle()) {
        let e = EulerAngles::new(r, p, y).unwrap();
        let back = EulerAngles::from_matrix(&rotation_matrix(&e.as_array())).unwrap();
        prop_assert!((rotation_matrix(&back.as_array()) - rotation_matrix(&e.as_array())).amax() < 1e-12);
    }

    #[test]
    fn basis_derivatives_match_differences(a in prop::array::uniform3(-3.0..3.0f64)) {
        let d = basis_derivatives(&a);
        let h = 1e-6;
        for (i, di) in d.iter().enumerate() {
            let mut hi = a;
            let mut lo = a;
            hi[i] += h;
            lo[i] -= h;
            let fd = (basis_from_angles(&hi).matrix() - basis_from_angles(&lo).matrix()) / (2.0 * h);
            prop_assert!((fd - di).amax() < 1e-6);
        }
    }
}
