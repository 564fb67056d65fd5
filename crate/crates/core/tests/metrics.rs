use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nfpae_core::geometry::{rotation_basis, EulerAngles, Pose, RotationBasis, Vec3};
use nfpae_core::metrics::*;

fn pose(p: [f64; 3], a: [f64; 3]) -> Pose {
    Pose::new(Vec3::new(p[0], p[1], p[2]), EulerAngles::new(a[0], a[1], a[2]).unwrap()).unwrap()
}

#[test]
fn perfect_estimates_score_zero() {
    let truth = [pose([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]), pose([-1.0, 0.5, 4.0], [-2.0, 0.4, 1.0])];
    let est: Vec<ScoredPose> = truth.iter().map(ScoredPose::from).collect();
    let e = score(&est, &truth).unwrap();
    assert_eq!((e.position_sq, e.rotation_nmse), (0.0, 0.0));
    let s = summarize(&[e, e]).unwrap();
    assert_eq!((s.rmse_position, s.nmse_rotation), (0.0, 0.0));
}

#[test]
fn constant_offset() {
    let truth = [pose([1.0, 2.0, 3.0], [0.1, 0.2, 0.3])];
    let mut est = ScoredPose::from(&truth[0]);
    est.position += Vec3::new(0.01, 0.01, 0.01);
    let e = score(&[est], &truth).unwrap();
    let s = summarize(&[e; 4]).unwrap();
    assert!((s.rmse_position - 0.01 * 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(s.nmse_rotation, 0.0);
    assert_eq!(s.sq_error_std_err, 0.0);
}

#[test]
fn rotation_error_matches_frobenius_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..1000 {
        let a: [f64; 3] = [rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)];
        let b: [f64; 3] = [rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)];
        let ra = Rotation3::from_euler_angles(a[0], a[1], a[2]);
        let rb = Rotation3::from_euler_angles(b[0], b[1], b[2]);
        // first two columns of each rotation, squared norm 2
        let gap: f64 = (0..3).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (ra[(i, j)] - rb[(i, j)]).powi(2)).sum();
        let want = gap / 2.0;
        let ba = rotation_basis(&EulerAngles::new(a[0], a[1], a[2]).unwrap());
        let bb = rotation_basis(&EulerAngles::new(b[0], b[1], b[2]).unwrap());
        assert!((rotation_nmse(&ba, &bb) - want).abs() < 1e-12);
    }
}

#[test]
fn labels_are_matched_before_scoring() {
    let truth = [pose([1.0, 0.0, 3.0], [0.0, 0.0, 0.0]), pose([-1.0, 0.0, 3.0], [1.0, 0.0, 0.0])];
    let est: Vec<ScoredPose> = truth.iter().rev().map(ScoredPose::from).collect();
    let e = score(&est, &truth).unwrap();
    assert_eq!((e.position_sq, e.rotation_nmse), (0.0, 0.0));
}

#[test]
fn standard_error_of_squared_error() {
    let errors = [
        TrialError { position_sq: 1.0, rotation_nmse: 0.1 },
        TrialError { position_sq: 3.0, rotation_nmse: 0.3 },
    ];
    let s = summarize(&errors).unwrap();
    assert!((s.rmse_position - 2f64.sqrt()).abs() < 1e-15);
    assert!((s.nmse_rotation - 0.2).abs() < 1e-15);
    assert!((s.sq_error_std_err - 1.0).abs() < 1e-15);
    assert!(summarize(&[]).is_none());
}

#[test]
fn count_mismatch_rejected() {
    let truth = [pose([1.0, 0.0, 3.0], [0.0, 0.0, 0.0])];
    assert!(score(&[], &truth).is_err());
    let b = RotationBasis {
        ex: Vector3::x(),
        ey: Vector3::y(),
    };
    assert_eq!(rotation_nmse(&b, &b), 0.0);
}
