use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use num_complex::Complex64;

use nfpae_core::channel::{exact_mean, Scenario};
use nfpae_core::geometry::{EulerAngles, Pose, TransmitPattern, UraSpec};
use nfpae_core::mcrb::*;
use nfpae_core::partition::{uniform_partition, PartitionPlan};
use nfpae_core::scene::{spherical_position, SceneTemplate};

fn small_scene(ms_count: usize) -> Scenario {
    let mut t = SceneTemplate::desk(ms_count, 20.0).unwrap();
    let lambda = t.wavelength();
    t.bs = UraSpec::half_wavelength(8, 8, lambda).unwrap();
    t.ms = UraSpec::half_wavelength(4, 4, lambda).unwrap();
    t.pattern = TransmitPattern::t3(&t.ms).unwrap();
    let poses = [
        Pose::new(spherical_position(0.6, 0.7, 1.0), EulerAngles::new(0.3, -0.4, 1.1).unwrap()).unwrap(),
        Pose::new(spherical_position(0.8, 2.9, 0.9), EulerAngles::new(-1.2, 0.2, -0.6).unwrap()).unwrap(),
    ];
    t.with_poses(poses[..ms_count].to_vec()).unwrap()
}

/// Plane-wave signal built per antenna from a flat `[positions, angles, re/im gains]` vector.
fn oracle_mean(plan: &PartitionPlan, sc: &Scenario, theta: &DVector<f64>) -> DMatrix<Complex64> {
    let kk = sc.ms_count();
    let locals = sc.local_positions();
    let slots = locals.len();
    let mut y = DMatrix::zeros(plan.bs().len(), slots);
    for m in 1..=plan.len() {
        let s = plan.subarray(m);
        for k in 0..kk {
            let p = Vector3::new(theta[3 * k], theta[3 * k + 1], theta[3 * k + 2]);
            let a = 3 * kk + 3 * k;
            let rot = Rotation3::from_euler_angles(theta[a], theta[a + 1], theta[a + 2]);
            for (t, l) in locals.iter().enumerate() {
                let antenna = p + rot * Vector3::new(l.x, l.y, 0.0);
                let d = antenna - s.phase_position;
                let (cx, cy) = (d.x / d.norm(), d.y / d.norm());
                let link = ((m - 1) * kk + k) * slots + t;
                let g = Complex64::new(theta[6 * kk + 2 * link], theta[6 * kk + 2 * link + 1]);
                for i in 1..=s.nx {
                    for j in 1..=s.ny {
                        let (u, v) = plan.global_index(m, i, j).unwrap();
                        y[(plan.row(u, v), t)] += g * Complex64::from_polar(1.0, PI * (i as f64 * cx + j as f64 * cy));
                    }
                }
            }
        }
    }
    y
}

fn steps(theta: &DVector<f64>, pose_dim: usize, gain_scale: f64) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| if i < pose_dim { 1e-6 } else { 1e-6 * gain_scale })
}

/// Columns of `d mean / d theta` by central differences.
fn oracle_jacobian(plan: &PartitionPlan, sc: &Scenario, theta: &DVector<f64>, h: &DVector<f64>) -> Vec<DMatrix<Complex64>> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h[i];
            down[i] -= h[i];
            (oracle_mean(plan, sc, &up) - oracle_mean(plan, sc, &down)) / Complex64::new(2.0 * h[i], 0.0)
        })
        .collect()
}

fn re_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Gradient of the expected log-likelihood, `(2 / s2) Re <J, y - mu>`.
fn oracle_score(plan: &PartitionPlan, sc: &Scenario, theta: &DVector<f64>, y: &DMatrix<Complex64>, s2: f64, h: &DVector<f64>) -> DVector<f64> {
    let eps = y - oracle_mean(plan, sc, theta);
    let jac = oracle_jacobian(plan, sc, theta, h);
    DVector::from_iterator(theta.len(), jac.iter().map(|c| 2.0 / s2 * re_inner(c, &eps)))
}

fn oracle_information(plan: &PartitionPlan, sc: &Scenario, theta: &DVector<f64>, y: &DMatrix<Complex64>, s2: f64, h: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = theta.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let step = 100.0 * h[i];
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[i] += step;
        down[i] -= step;
        let col = (oracle_score(plan, sc, &up, y, s2, h) - oracle_score(plan, sc, &down, y, s2, h)) / (2.0 * step);
        a.set_column(i, &col);
    }
    let jac = oracle_jacobian(plan, sc, theta, h);
    let eps = y - oracle_mean(plan, sc, theta);
    let s = DVector::from_iterator(n, jac.iter().map(|c| re_inner(c, &eps)));
    let fim = DMatrix::from_fn(n, n, |i, j| re_inner(&jac[i], &jac[j]));
    let b = &s * s.transpose() * (4.0 / (s2 * s2)) + fim * (2.0 / s2);
    ((&a + a.transpose()) * 0.5, b)
}

/// Relative Frobenius gap after scaling both matrices by `1 / sqrt(|diag(a)|)`.
fn equilibrated_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..a.nrows()).map(|i| 1.0 / a[(i, i)].abs().sqrt()).collect();
    let scale = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j]);
    let (sa, sb) = (scale(a), scale(b));
    (&sa - &sb).norm() / sa.norm()
}

fn max_gain(p: &ParamVector) -> f64 {
    p.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[test]
fn model_mean_matches_per_antenna_oracle() {
    let sc = small_scene(2);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let got = model.mean(&truth);
    let want = oracle_mean(&plan, &sc, &truth.full());
    assert!((&got - &want).norm() < 1e-12 * want.norm());
}

#[test]
fn single_element_blocks_fit_exactly() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 8, 8, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = exact_mean(&sc);
    let fit = pseudotrue_fit(&model, &y, &truth, &McrbOptions::default()).unwrap();
    assert!(fit.residual < 1e-20 * y.norm_squared(), "residual {}", fit.residual);
    let r = bound_from_mean(&model, &y, &truth, sc.noise_var, &McrbOptions::default()).unwrap();
    // every pose fits exactly, so the search only drifts by finite-difference noise
    assert!(r.bias_norm.0 < 1e-6 && r.bias_norm.1 < 1e-6, "{:?}", r.bias_norm);
}

#[test]
fn gain_fit_matches_normal_equations() {
    let sc = small_scene(2);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = exact_mean(&sc);
    let got = model.fit_coefficients(truth.pose(), &y).unwrap();
    let kk = sc.ms_count();
    let locals = sc.local_positions();
    let slots = locals.len();
    for m in 1..=plan.len() {
        let s = plan.subarray(m);
        for t in 0..slots {
            // unit-gain columns of the oracle mean, one per MS
            let mut cols = DMatrix::<Complex64>::zeros(s.len(), kk);
            for k in 0..kk {
                let mut theta = truth.full();
                for c in 6 * kk..theta.len() {
                    theta[c] = 0.0;
                }
                theta[6 * kk + 2 * (((m - 1) * kk + k) * slots + t)] = 1.0;
                let full = oracle_mean(&plan, &sc, &theta);
                for (e, &r) in plan.rows_of(m).iter().enumerate() {
                    cols[(e, k)] = full[(r, t)];
                }
            }
            let obs = DVector::from_iterator(s.len(), plan.rows_of(m).iter().map(|&r| y[(r, t)]));
            let g = (cols.adjoint() * &cols).try_inverse().unwrap() * cols.adjoint() * obs;
            for k in 0..kk {
                let idx = ((m - 1) * kk + k) * slots + t;
                assert!((got[idx] - g[k]).norm() < 1e-10 * g[k].norm());
            }
        }
    }
}

#[test]
fn matched_model_gives_fisher_information() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = model.mean(&truth);
    let s2 = sc.noise_var;
    let info = information_matrices(&model, &truth, &y, s2, &McrbOptions::default()).unwrap();
    assert!(equilibrated_gap(&info.a, &(-&info.b)) < 1e-12);
    let theta = truth.full();
    let h = steps(&theta, 6, max_gain(&truth));
    let jac = oracle_jacobian(&plan, &sc, &theta, &h);
    let fim = DMatrix::from_fn(theta.len(), theta.len(), |i, j| 2.0 / s2 * re_inner(&jac[i], &jac[j]));
    assert!(equilibrated_gap(&info.b, &fim) < 1e-6);
    let r = lower_bound(&info, &truth, &truth, &McrbOptions::default()).unwrap();
    let crb = info.b.clone().try_inverse().unwrap();
    assert!(equilibrated_gap(&crb.view((0, 0), (6, 6)).into_owned(), &r.lb) < 1e-6);
}

#[test]
fn information_matches_brute_force_differentiation() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = exact_mean(&sc);
    let fit = pseudotrue_fit(&model, &y, &truth, &McrbOptions::default()).unwrap();
    let s2 = sc.noise_var;
    let info = information_matrices(&model, &fit.params, &y, s2, &McrbOptions::default()).unwrap();
    let theta = fit.params.full();
    let h = steps(&theta, 6, max_gain(&fit.params));
    let (a, b) = oracle_information(&plan, &sc, &theta, &y, s2, &h);
    let ga = equilibrated_gap(&info.a, &a);
    let gb = equilibrated_gap(&info.b, &b);
    assert!(ga < 1e-4 && gb < 1e-4, "A gap {ga}, B gap {gb}");
}

#[test]
fn information_scales_with_noise() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = exact_mean(&sc);
    let opts = McrbOptions::default();
    let fit = pseudotrue_fit(&model, &y, &truth, &opts).unwrap();
    let s2 = sc.noise_var;
    let full = information_matrices(&model, &fit.params, &y, s2, &opts).unwrap();
    let half = information_matrices(&model, &fit.params, &y, s2 / 2.0, &opts).unwrap();
    assert!(equilibrated_gap(&(&full.a * 2.0), &half.a) < 1e-12);
    // B carries a 1/s2^2 bias-score term, so only the Fisher part scales linearly
    let lb_full = lower_bound(&full, &fit.params, &fit.params, &opts).unwrap();
    let lb_half = lower_bound(&half, &fit.params, &fit.params, &opts).unwrap();
    for (f, h) in lb_full.position_trace.iter().zip(&lb_half.position_trace) {
        assert!(*h < *f);
    }
    let matched = model.mean(&truth);
    let a1 = information_matrices(&model, &truth, &matched, s2, &opts).unwrap();
    let a2 = information_matrices(&model, &truth, &matched, s2 / 2.0, &opts).unwrap();
    assert!(equilibrated_gap(&(&a1.b * 2.0), &a2.b) < 1e-12);
    let l1 = lower_bound(&a1, &truth, &truth, &opts).unwrap();
    let l2 = lower_bound(&a2, &truth, &truth, &opts).unwrap();
    assert!(equilibrated_gap(&(&l1.lb * 0.5), &l2.lb) < 1e-9);
}

#[test]
fn zero_bias_bound_is_the_sandwich() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    let y = exact_mean(&sc);
    let opts = McrbOptions::default();
    let fit = pseudotrue_fit(&model, &y, &truth, &opts).unwrap();
    let info = information_matrices(&model, &fit.params, &y, sc.noise_var, &opts).unwrap();
    let r = lower_bound(&info, &fit.params, &fit.params, &opts).unwrap();
    let ai = info.a.clone().try_inverse().unwrap();
    let sandwich = &ai * &info.b * &ai;
    assert!(equilibrated_gap(&sandwich.view((0, 0), (6, 6)).into_owned(), &r.lb) < 1e-6);
    assert!(r.bias_norm == (0.0, 0.0));
}

#[test]
fn bound_is_symmetric_positive_semidefinite() {
    let sc = small_scene(2);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let r = bound_for_scenario(&sc, &plan, &McrbOptions::default()).unwrap();
    assert_eq!(r.lb.nrows(), 12);
    assert!((&r.lb - r.lb.transpose()).amax() <= 1e-12 * r.lb.amax());
    let eig = r.lb.clone().symmetric_eigen().eigenvalues;
    assert!(eig.iter().all(|&l| l >= -1e-9 * eig.amax()));
    assert!(r.position_bound() > 0.0 && r.attitude_bound() > 0.0);
    assert!(r.fit_converged);
}

#[test]
fn pseudo_inverse_keeps_regular_part() {
    let full = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]));
    let (inv, pinv) = symmetric_inverse(&full, 1e12).unwrap();
    assert!(pinv);
    assert!((inv[(0, 0)] - 0.25).abs() < 1e-15 && (inv[(1, 1)] - 1.0).abs() < 1e-15 && inv[(2, 2)] == 0.0);
    let (inv, pinv) = symmetric_inverse(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), 1e12).unwrap();
    assert!(!pinv);
    assert!((inv - DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0).amax() < 1e-15);
}

#[test]
fn noise_variance_must_be_positive() {
    let sc = small_scene(1);
    let plan = uniform_partition(&sc.bs, 2, 2, sc.wavelength).unwrap();
    let model = SwffModel::for_scenario(&sc, &plan).unwrap();
    let truth = truth_params(&sc, &plan).unwrap();
    assert!(information_matrices(&model, &truth, &exact_mean(&sc), 0.0, &McrbOptions::default()).is_err());
}
