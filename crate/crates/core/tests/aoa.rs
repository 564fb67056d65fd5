use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use nfpae_core::aoa::*;
use nfpae_core::apple::assignment;
use nfpae_core::channel::{subarray_snapshot, swff_coefficients, swff_mean, ReceivedSignal};
use nfpae_core::circular::{VmPair, VonMises};
use nfpae_core::geometry::{EulerAngles, Pose};
use nfpae_core::partition::uniform_partition;
use nfpae_core::scene::{spherical_position, SceneTemplate};

fn uniform_prior(coeff_var: f64) -> SourcePrior {
    SourcePrior {
        aoa: VmPair::uniform(),
        coeff_var,
    }
}

fn plane_waves(n: usize, sources: &[((f64, f64), Complex64)]) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| {
        sources
            .iter()
            .map(|&((cx, cy), a)| a * Complex64::from_polar(1.0, PI * ((i + 1) as f64 * cx + (j + 1) as f64 * cy)))
            .sum()
    })
}

fn noise(rng: &mut ChaCha8Rng, n: usize, var: f64) -> DMatrix<Complex64> {
    let s = (var / 2.0).sqrt();
    DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

#[test]
fn noiseless_subarray_snapshot_recovers_cosines() {
    let sc = SceneTemplate::desk(1, 20.0)
        .unwrap()
        .with_poses(vec![Pose::new(spherical_position(3.0, 1.0, 1.0), EulerAngles::new(0.2, 0.3, -0.5).unwrap()).unwrap()])
        .unwrap();
    let plan = uniform_partition(&sc.bs, 4, 4, sc.wavelength).unwrap();
    let coeffs = swff_coefficients(&sc, &plan).unwrap();
    let y = ReceivedSignal {
        samples: swff_mean(&coeffs, &plan),
    };
    for m in [1, 7, 16] {
        for t in 0..sc.slots() {
            let snap = SubarraySnapshot {
                samples: subarray_snapshot(&y, &plan, m, t),
                noise_var: sc.noise_var,
            };
            let link = coeffs.get(m, 0, t);
            let post = estimate_aoa_posteriors(&snap, &[uniform_prior(link.gain.norm_sqr())], &AoaOptions::default()).unwrap();
            let (cx, cy) = post[0].aoa.cosines();
            assert!((cx - link.cosines.0).abs() < 1e-6 && (cy - link.cosines.1).abs() < 1e-6);
            assert!((post[0].coeff_mean - link.gain).norm() < 1e-3 * link.gain.norm());
        }
    }
}

#[test]
fn pure_noise_leaves_prior_nearly_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let var = 1e-7;
    let prior = SourcePrior {
        aoa: VmPair {
            x: VonMises::new(0.4, 5.0),
            y: VonMises::new(-1.0, 5.0),
        },
        coeff_var: 1e-5 * var,
    };
    for _ in 0..20 {
        let snap = SubarraySnapshot {
            samples: noise(&mut rng, 8, var),
            noise_var: var,
        };
        let post = estimate_aoa_posteriors(&snap, &[prior], &AoaOptions::default()).unwrap()[0];
        for (p, q) in [(post.aoa.x, prior.aoa.x), (post.aoa.y, prior.aoa.y)] {
            assert!((p.kappa - q.kappa).abs() / q.kappa < 0.05);
            assert!((p.mean - q.mean).abs() < 0.05);
        }
        assert!(post.coeff_mean.norm_sqr() < 1e-2 * prior.coeff_var.max(var / 64.0));
        let ext = extrinsic_from_posterior(&[post], &[prior])[0];
        assert!(ext.x.kappa < 0.25 && ext.y.kappa < 0.25);
    }
}

#[test]
fn two_separated_sources_at_twenty_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let n = 8;
    let var = 0.01;
    let snr = 1.0 / var;
    let mut sq = 0.0;
    let trials = 100;
    for _ in 0..trials {
        let a: (f64, f64) = (rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
        let b = loop {
            let c: (f64, f64) = (rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let gap = f64::max((c.0 - a.0).abs(), (c.1 - a.1).abs());
            if gap > 4.0 / n as f64 {
                break c;
            }
        };
        let gains = [
            Complex64::from_polar(1.0, rng.random_range(-PI..PI)),
            Complex64::from_polar(1.0, rng.random_range(-PI..PI)),
        ];
        let samples = plane_waves(n, &[(a, gains[0]), (b, gains[1])]) + noise(&mut rng, n, var);
        let snap = SubarraySnapshot { samples, noise_var: var };
        let post = estimate_aoa_posteriors(&snap, &[uniform_prior(1.0), uniform_prior(1.0)], &AoaOptions::default()).unwrap();
        let est: Vec<(f64, f64)> = post.iter().map(|p| p.aoa.cosines()).collect();
        let truth = [a, b];
        let cost: Vec<Vec<f64>> = truth
            .iter()
            .map(|t| est.iter().map(|e| (e.0 - t.0).powi(2) + (e.1 - t.1).powi(2)).collect())
            .collect();
        let pick = assignment(&cost);
        sq += pick.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / 2.0;
    }
    let rmse = (sq / trials as f64).sqrt();
    let limit = 10.0 / (n as f64 * snr.sqrt());
    assert!(rmse < limit, "cosine RMSE {rmse} vs {limit}");
}

#[test]
fn extrinsic_from_uniform_prior_is_posterior() {
    let snap = SubarraySnapshot {
        samples: plane_waves(6, &[((0.2, -0.3), Complex64::new(1.0, 0.5))]),
        noise_var: 1e-3,
    };
    let prior = uniform_prior(1.0);
    let post = estimate_aoa_posteriors(&snap, &[prior], &AoaOptions::default()).unwrap();
    let ext = extrinsic_from_posterior(&post, &[prior])[0];
    assert!((ext.x.kappa - post[0].aoa.x.kappa).abs() <= 1e-9 * post[0].aoa.x.kappa);
    assert!((ext.y.mean - post[0].aoa.y.mean).abs() < 1e-12);
}

#[test]
fn objective_prefers_the_truth() {
    let truth = (0.1, 0.45);
    let gain = Complex64::new(0.3, -0.8);
    let snap = SubarraySnapshot {
        samples: plane_waves(8, &[(truth, gain)]),
        noise_var: 1e-4,
    };
    let prior = uniform_prior(1.0);
    let post = estimate_aoa_posteriors(&snap, &[prior], &AoaOptions::default()).unwrap();
    let mut off = post.clone();
    off[0].aoa.x = VonMises::new(off[0].aoa.x.mean + 0.05, off[0].aoa.x.kappa);
    assert!(variational_objective(&snap, &[prior], &post) > variational_objective(&snap, &[prior], &off));
}

#[test]
fn empty_prior_list_rejected() {
    let snap = SubarraySnapshot {
        samples: DMatrix::zeros(4, 4),
        noise_var: 1.0,
    };
    assert!(estimate_aoa_posteriors(&snap, &[], &AoaOptions::default()).is_err());
}
