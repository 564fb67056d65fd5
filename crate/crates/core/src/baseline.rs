//! Two-stage far-field benchmark: whole-array plane-wave directions per slot,
//! then a pose fit to those directions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::alignment::align;
use crate::aoa::{estimate_aoa_posteriors, AoaOptions, SourcePrior, SubarraySnapshot};
use crate::apple::{assignment, mirrored_tilt};
use crate::channel::ReceivedSignal;
use crate::circular::VmPair;
use crate::error::{invalid, Error, Result};
use crate::geometry::{basis_from_angles, rotation_basis, EulerAngles, RotationBasis, UraSpec, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    pub aoa: AoaOptions,
    /// Peak power over noise power below which a peak is flagged.
    pub detection_threshold: f64,
    pub max_iter: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            aoa: AoaOptions::default(),
            detection_threshold: 25.0,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldAoa {
    pub cosines: (f64, f64),
    /// Periodogram peak over the noise power.
    pub peak_snr: f64,
    /// Mean power left after removing every estimated plane wave.
    pub residual_power: f64,
    pub low_power: bool,
}

/// `K` plane waves fitted to one slot of the whole array.
pub fn farfield_aoa(
    column: &DVector<Complex64>,
    bs: &UraSpec,
    sources: usize,
    noise_var: f64,
    opts: &BaselineOptions,
) -> Result<Vec<FarFieldAoa>> {
    if column.len() != bs.len() {
        return Err(invalid("signal length does not match the array"));
    }
    if sources == 0 {
        return Err(invalid("at least one source required"));
    }
    let samples = DMatrix::from_column_slice(bs.nx, bs.ny, column.as_slice());
    let snapshot = SubarraySnapshot {
        samples: samples.clone(),
        noise_var,
    };
    let priors = vec![
        SourcePrior {
            aoa: VmPair::uniform(),
            coeff_var: f64::INFINITY,
        };
        sources
    ];
    let posts = estimate_aoa_posteriors(&snapshot, &priors, &opts.aoa)?;
    let n = bs.len() as f64;
    let mut residual = samples;
    for p in &posts {
        let w = (p.aoa.x.mean, p.aoa.y.mean);
        residual -= DMatrix::from_fn(bs.nx, bs.ny, |i, j| {
            Complex64::from_polar(1.0, (i + 1) as f64 * w.0 + (j + 1) as f64 * w.1)
        }) * p.coeff_mean;
    }
    let residual_power = residual.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    let floor = noise_var.max(f64::MIN_POSITIVE);
    Ok(posts
        .iter()
        .map(|p| {
            let peak_snr = p.coeff_mean.norm_sqr() * n / floor;
            FarFieldAoa {
                cosines: p.aoa.cosines(),
                peak_snr,
                residual_power,
                low_power: peak_snr < opts.detection_threshold,
            }
        })
        .collect())
}

/// Unit direction with the given cosines on the front side of the array.
fn direction(c: (f64, f64)) -> Vec3 {
    let z2 = 1.0 - c.0 * c.0 - c.1 * c.1;
    Vec3::new(c.0, c.1, z2.max(0.0).sqrt()).normalize()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePose {
    pub position: Vec3,
    pub attitude: EulerAngles,
    pub basis: RotationBasis,
    /// Sum of squared cosine residuals at the fit.
    pub cost: f64,
    pub converged: bool,
}

fn residuals(x: &DVector<f64>, locals: &[Vec2], aoas: &[(f64, f64)]) -> DVector<f64> {
    let b = basis_from_angles(&[x[3], x[4], x[5]]);
    let p = Vec3::new(x[0], x[1], x[2]);
    let mut r = DVector::zeros(2 * aoas.len());
    for (t, (q, c)) in locals.iter().zip(aoas).enumerate() {
        let a = p + b.apply(q);
        let u = a / a.norm();
        r[2 * t] = u.x - c.0;
        r[2 * t + 1] = u.y - c.1;
    }
    r
}

/// Damped Gauss-Newton on the cosine residuals with a central-difference Jacobian.
fn fit(start: DVector<f64>, locals: &[Vec2], aoas: &[(f64, f64)], max_iter: usize) -> (DVector<f64>, f64, bool) {
    let mut x = start;
    let mut r = residuals(&x, locals, aoas);
    let mut f = r.norm_squared();
    let mut damping = 1e-3;
    for _ in 0..max_iter {
        let mut jac = DMatrix::zeros(r.len(), 6);
        for i in 0..6 {
            let h = 1e-7 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            jac.set_column(i, &((residuals(&xp, locals, aoas) - residuals(&xm, locals, aoas)) / (2.0 * h)));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let mut lhs = jtj.clone();
            for i in 0..6 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-300);
            }
            if let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&g))) {
                let cand = &x + &step;
                let rc = residuals(&cand, locals, aoas);
                let fc = rc.norm_squared();
                if fc.is_finite() && fc < f && cand.rows(0, 3).norm() > 0.0 {
                    let done = f - fc <= 1e-14 * f || step.norm() <= 1e-13 * (1.0 + x.norm());
                    x = cand;
                    r = rc;
                    f = fc;
                    damping = (damping / 10.0).max(1e-12);
                    if done {
                        return (x, f, true);
                    }
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e14 {
                return (x, f, true);
            }
        }
    }
    (x, f, false)
}

fn pose_vector(rotation: &nalgebra::Matrix3<f64>, translation: &Vec3) -> Result<DVector<f64>> {
    let [r, p, y] = EulerAngles::from_matrix(rotation)?.as_array();
    Ok(DVector::from_vec(vec![translation.x, translation.y, translation.z, r, p, y]))
}

/// Pose of one MS from the directions of its activated antennas, seen from the array centre.
pub fn pose_from_aoas(aoas: &[(f64, f64)], locals: &[Vec2], opts: &BaselineOptions) -> Result<BaselinePose> {
    if aoas.len() != locals.len() || aoas.len() < 3 {
        return Err(invalid("need one direction per slot and at least three slots"));
    }
    let dirs: Vec<Vec3> = aoas.iter().map(|&c| direction(c)).collect();
    // the MS aperture fixes the range: directions span it at scale 1 / range
    let sim = align(locals, &dirs, None, true)?;
    if !(sim.scale > 0.0) {
        return Err(Error::Numerical("direction spread does not fix a range".into()));
    }
    let range = 1.0 / sim.scale;
    let points: Vec<Vec3> = dirs.iter().map(|d| d * range).collect();
    let rigid = align(locals, &points, None, false)?;
    let start = pose_vector(&rigid.rotation, &rigid.translation)?;
    let twin = mirrored_tilt(&start);
    let (mut x, mut cost, mut converged) = fit(start, locals, aoas, opts.max_iter);
    if let Some(twin) = twin {
        let alt = fit(twin, locals, aoas, opts.max_iter);
        if alt.1 < cost {
            (x, cost, converged) = alt;
        }
    }

    let b = basis_from_angles(&[x[3], x[4], x[5]]);
    let p = Vec3::new(x[0], x[1], x[2]);
    let on_rays: Vec<Vec3> = locals
        .iter()
        .zip(&dirs)
        .map(|(q, d)| d * d.dot(&(p + b.apply(q))))
        .collect();
    let attitude = match align(locals, &on_rays, None, false) {
        Ok(a) => EulerAngles::from_matrix(&a.rotation)?,
        Err(_) => EulerAngles::from_unconstrained([x[3], x[4], x[5]])?,
    };
    Ok(BaselinePose {
        position: p,
        attitude,
        basis: rotation_basis(&attitude),
        cost,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub poses: Vec<BaselinePose>,
    /// Per slot, the plane waves in MS label order.
    pub aoas: Vec<Vec<FarFieldAoa>>,
    pub low_power_peaks: usize,
}

fn angular_gap(a: &FarFieldAoa, b: &FarFieldAoa) -> f64 {
    (a.cosines.0 - b.cosines.0).abs() + (a.cosines.1 - b.cosines.1).abs()
}

/// Full baseline: directions per slot, labels linked across slots, one pose fit per MS.
pub fn run(
    signal: &ReceivedSignal,
    bs: &UraSpec,
    locals: &[Vec2],
    ms_count: usize,
    noise_var: f64,
    opts: &BaselineOptions,
) -> Result<BaselineOutput> {
    if signal.slots() != locals.len() {
        return Err(invalid("one slot per activated antenna expected"));
    }
    let mut per_slot = Vec::with_capacity(locals.len());
    for t in 0..signal.slots() {
        let col = signal.samples.column(t).into_owned();
        per_slot.push(farfield_aoa(&col, bs, ms_count, noise_var, opts)?);
    }
    per_slot[0].sort_by(|a, b| b.peak_snr.total_cmp(&a.peak_snr));
    for t in 1..per_slot.len() {
        let cost: Vec<Vec<f64>> = per_slot[0]
            .iter()
            .map(|r| per_slot[t].iter().map(|c| angular_gap(r, c)).collect())
            .collect();
        let pick = assignment(&cost);
        per_slot[t] = pick.iter().map(|&j| per_slot[t][j]).collect();
    }
    let low_power_peaks = per_slot.iter().flatten().filter(|a| a.low_power).count();
    let poses = (0..ms_count)
        .map(|k| {
            let aoas: Vec<(f64, f64)> = per_slot.iter().map(|s| s[k].cosines).collect();
            pose_from_aoas(&aoas, locals, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineOutput {
        poses,
        aoas: per_slot,
        low_power_peaks,
    })
}

