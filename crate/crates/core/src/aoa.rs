//! Per-subarray multi-source direction estimation with von Mises priors.
//!
//! Each snapshot is modelled as a sum of `K` plane waves with complex gains,
//! `y(i, j) = sum_k a_k exp(j (i wx_k + j wy_k)) + noise`, where `w = pi * phi`.
//! Gains get a zero-mean complex Gaussian prior; directions get the supplied
//! von Mises priors. Sources are updated one at a time: the gain is integrated
//! out in closed form, the direction maximizes the resulting profile, and the
//! posterior concentration is read off the curvature at the maximum.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::circular::{pair_extrinsic, VmPair, VonMises};
use crate::error::{invalid, Result};
use crate::geometry::wrap_angle;
use crate::laplace::{maximize, AscentOptions, Objective};

#[derive(Debug, Clone, PartialEq)]
pub struct SubarraySnapshot {
    /// `nx x ny`, entry `(i-1, j-1)` holds local element `(i, j)`.
    pub samples: DMatrix<Complex64>,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePrior {
    pub aoa: VmPair,
    /// Prior variance of the complex gain.
    pub coeff_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaPosterior {
    pub aoa: VmPair,
    pub coeff_mean: Complex64,
    pub coeff_var: f64,
    /// Curvature was not informative on at least one axis; that axis keeps the prior.
    pub uninformative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaOptions {
    pub max_sweeps: usize,
    /// Stop once no cosine moves by more than this in a sweep.
    pub tol: f64,
    pub zero_pad: usize,
    pub ascent: AscentOptions,
}

impl Default for AoaOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 20,
            tol: 1e-6,
            zero_pad: 4,
            ascent: AscentOptions::default(),
        }
    }
}

/// `z = sum r_ij e^{-j(i wx + j wy)}` with 1-based `i, j`, and its derivatives.
#[derive(Debug, Clone, Copy)]
struct Moments {
    z: Complex64,
    zx: Complex64,
    zy: Complex64,
    zxx: Complex64,
    zyy: Complex64,
    zxy: Complex64,
}

fn moments(r: &DMatrix<Complex64>, w: (f64, f64)) -> Moments {
    let (nx, ny) = r.shape();
    let ex: Vec<Complex64> = (1..=nx).map(|i| Complex64::from_polar(1.0, -(i as f64) * w.0)).collect();
    let mut m = Moments {
        z: Complex64::default(),
        zx: Complex64::default(),
        zy: Complex64::default(),
        zxx: Complex64::default(),
        zyy: Complex64::default(),
        zxy: Complex64::default(),
    };
    let mj = Complex64::new(0.0, -1.0);
    for j in 0..ny {
        let (mut s0, mut s1, mut s2) = (Complex64::default(), Complex64::default(), Complex64::default());
        for (i, e) in ex.iter().enumerate() {
            let v = r[(i, j)] * e;
            let fi = (i + 1) as f64;
            s0 += v;
            s1 += v * fi;
            s2 += v * (fi * fi);
        }
        let fj = (j + 1) as f64;
        let ey = Complex64::from_polar(1.0, -fj * w.1);
        m.z += s0 * ey;
        m.zx += mj * s1 * ey;
        m.zy += mj * fj * s0 * ey;
        m.zxx -= s2 * ey;
        m.zyy -= fj * fj * s0 * ey;
        m.zxy -= fj * s1 * ey;
    }
    m
}

/// Gain-marginalized log likelihood of one source plus its direction prior,
/// as a function of the scaled cosines `(pi phi_x, pi phi_y)`.
pub struct Profile<'a> {
    /// Snapshot minus the other sources.
    pub residual: &'a DMatrix<Complex64>,
    /// Scale of `|z|^2` after the gain is integrated out.
    pub weight: f64,
    pub prior: VmPair,
}

impl Profile<'_> {
    fn parts(&self, x: &DVector<f64>) -> (Moments, (f64, f64)) {
        (moments(self.residual, (x[0], x[1])), (x[0], x[1]))
    }
}

impl Objective for Profile<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (m, w) = self.parts(x);
        self.weight * m.z.norm_sqr() + self.prior.x.log_kernel(w.0) + self.prior.y.log_kernel(w.1)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (m, w) = self.parts(x);
        let gx = 2.0 * (m.z.conj() * m.zx).re;
        let gy = 2.0 * (m.z.conj() * m.zy).re;
        DVector::from_vec(vec![
            self.weight * gx - self.prior.x.kappa * (w.0 - self.prior.x.mean).sin(),
            self.weight * gy - self.prior.y.kappa * (w.1 - self.prior.y.mean).sin(),
        ])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (m, w) = self.parts(x);
        let hxx = 2.0 * m.zx.norm_sqr() + 2.0 * (m.z.conj() * m.zxx).re;
        let hyy = 2.0 * m.zy.norm_sqr() + 2.0 * (m.z.conj() * m.zyy).re;
        let hxy = 2.0 * (m.zy.conj() * m.zx).re + 2.0 * (m.z.conj() * m.zxy).re;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                self.weight * hxx - self.prior.x.kappa * (w.0 - self.prior.x.mean).cos(),
                self.weight * hxy,
                self.weight * hxy,
                self.weight * hyy - self.prior.y.kappa * (w.1 - self.prior.y.mean).cos(),
            ],
        )
    }
}

fn steering_matrix(nx: usize, ny: usize, w: (f64, f64)) -> DMatrix<Complex64> {
    DMatrix::from_fn(nx, ny, |i, j| {
        Complex64::from_polar(1.0, (i + 1) as f64 * w.0 + (j + 1) as f64 * w.1)
    })
}

/// Coarse maximizer of the profile over a zero-padded FFT grid.
fn grid_peak(profile: &Profile, pad: usize) -> (f64, f64) {
    let (nx, ny) = profile.residual.shape();
    let (px, py) = (nx * pad, ny * pad);
    let mut grid = vec![Complex64::default(); px * py];
    // row-major [kx][ky]
    for i in 0..nx {
        for j in 0..ny {
            grid[i * py + j] = profile.residual[(i, j)];
        }
    }
    let mut planner = FftPlanner::new();
    let fy = planner.plan_fft_forward(py);
    for row in grid.chunks_mut(py) {
        fy.process(row);
    }
    let fx = planner.plan_fft_forward(px);
    let mut col = vec![Complex64::default(); px];
    for ky in 0..py {
        for kx in 0..px {
            col[kx] = grid[kx * py + ky];
        }
        fx.process(&mut col);
        for kx in 0..px {
            grid[kx * py + ky] = col[kx];
        }
    }
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0));
    for kx in 0..px {
        let wx = wrap_angle(2.0 * PI * kx as f64 / px as f64);
        let lx = profile.prior.x.log_kernel(wx);
        for ky in 0..py {
            let wy = wrap_angle(2.0 * PI * ky as f64 / py as f64);
            let v = profile.weight * grid[kx * py + ky].norm_sqr() + lx + profile.prior.y.log_kernel(wy);
            if v > best.0 {
                best = (v, (wx, wy));
            }
        }
    }
    best.1
}

struct Source {
    w: (f64, f64),
    gain: Complex64,
}

/// Objective of the whole snapshot at the current point estimates.
pub fn variational_objective(
    snapshot: &SubarraySnapshot,
    priors: &[SourcePrior],
    estimates: &[AoaPosterior],
) -> f64 {
    let (nx, ny) = snapshot.samples.shape();
    let var = effective_noise(snapshot);
    let mut r = snapshot.samples.clone();
    let mut value = 0.0;
    for (p, e) in priors.iter().zip(estimates) {
        let w = (e.aoa.x.mean, e.aoa.y.mean);
        r -= steering_matrix(nx, ny, w) * e.coeff_mean;
        if p.coeff_var > 0.0 {
            value -= e.coeff_mean.norm_sqr() / p.coeff_var;
        }
        value += p.aoa.x.log_kernel(w.0) + p.aoa.y.log_kernel(w.1);
    }
    value - r.iter().map(|v| v.norm_sqr()).sum::<f64>() / var
}

fn effective_noise(snapshot: &SubarraySnapshot) -> f64 {
    let n = snapshot.samples.len() as f64;
    let power = snapshot.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    snapshot.noise_var.max(power * 1e-24).max(f64::MIN_POSITIVE)
}

pub fn estimate_aoa_posteriors(
    snapshot: &SubarraySnapshot,
    priors: &[SourcePrior],
    opts: &AoaOptions,
) -> Result<Vec<AoaPosterior>> {
    if priors.is_empty() {
        return Err(invalid("at least one source required"));
    }
    let (nx, ny) = snapshot.samples.shape();
    if nx == 0 || ny == 0 {
        return Err(invalid("empty snapshot"));
    }
    if !snapshot.samples.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(invalid("non-finite snapshot"));
    }
    let n = (nx * ny) as f64;
    let var = effective_noise(snapshot);
    // shrinkage denominator of the gain posterior
    let denom = |p: &SourcePrior| {
        if p.coeff_var > 0.0 {
            Some(n + var / p.coeff_var)
        } else {
            None
        }
    };
    let weight = |p: &SourcePrior| denom(p).map_or(0.0, |d| 1.0 / (var * d));
    let gain_at = |r: &DMatrix<Complex64>, p: &SourcePrior, w: (f64, f64)| {
        denom(p).map_or(Complex64::default(), |d| moments(r, w).z / d)
    };

    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = priors[a].aoa.x.kappa + priors[a].aoa.y.kappa;
        let kb = priors[b].aoa.x.kappa + priors[b].aoa.y.kappa;
        kb.total_cmp(&ka)
    });

    let mut sources: Vec<Option<Source>> = (0..priors.len()).map(|_| None).collect();
    let mut model = DMatrix::<Complex64>::zeros(nx, ny);
    for &k in &order {
        let r = &snapshot.samples - &model;
        let profile = Profile {
            residual: &r,
            weight: weight(&priors[k]),
            prior: priors[k].aoa,
        };
        let start = grid_peak(&profile, opts.zero_pad.max(1));
        let best = maximize(&profile, &DVector::from_vec(vec![start.0, start.1]), &opts.ascent);
        let w = (wrap_angle(best.x[0]), wrap_angle(best.x[1]));
        let gain = gain_at(&r, &priors[k], w);
        model += steering_matrix(nx, ny, w) * gain;
        sources[k] = Some(Source { w, gain });
    }
    let mut sources: Vec<Source> = sources.into_iter().map(|s| s.expect("every source initialized")).collect();

    for _ in 0..opts.max_sweeps {
        let mut moved: f64 = 0.0;
        for k in 0..sources.len() {
            let own = steering_matrix(nx, ny, sources[k].w) * sources[k].gain;
            let r = &snapshot.samples - &model + &own;
            let profile = Profile {
                residual: &r,
                weight: weight(&priors[k]),
                prior: priors[k].aoa,
            };
            let best = maximize(
                &profile,
                &DVector::from_vec(vec![sources[k].w.0, sources[k].w.1]),
                &opts.ascent,
            );
            let w = (wrap_angle(best.x[0]), wrap_angle(best.x[1]));
            let gain = gain_at(&r, &priors[k], w);
            moved = moved
                .max(wrap_angle(w.0 - sources[k].w.0).abs() / PI)
                .max(wrap_angle(w.1 - sources[k].w.1).abs() / PI);
            model = model - own + steering_matrix(nx, ny, w) * gain;
            sources[k] = Source { w, gain };
        }
        if moved < opts.tol {
            break;
        }
    }

    let mut out = Vec::with_capacity(sources.len());
    for (k, s) in sources.iter().enumerate() {
        let own = steering_matrix(nx, ny, s.w) * s.gain;
        let r = &snapshot.samples - &model + &own;
        let p = &priors[k];
        let profile = Profile {
            residual: &r,
            weight: weight(p),
            prior: p.aoa,
        };
        let h = profile.hessian(&DVector::from_vec(vec![s.w.0, s.w.1]));
        let mut uninformative = false;
        let mut axis = |curv: f64, w: f64, pri: &VonMises| {
            if curv > 0.0 && curv.is_finite() {
                VonMises::new(w, curv)
            } else {
                uninformative = true;
                VonMises::new(w, pri.kappa)
            }
        };
        let aoa = VmPair {
            x: axis(-h[(0, 0)], s.w.0, &p.aoa.x),
            y: axis(-h[(1, 1)], s.w.1, &p.aoa.y),
        };
        let coeff_var = denom(p).map_or(0.0, |d| var / d).max(f64::MIN_POSITIVE);
        out.push(AoaPosterior {
            aoa,
            coeff_mean: s.gain,
            coeff_var,
            uninformative,
        });
    }
    Ok(out)
}

pub fn extrinsic_from_posterior(posteriors: &[AoaPosterior], priors: &[SourcePrior]) -> Vec<VmPair> {
    posteriors
        .iter()
        .zip(priors)
        .map(|(post, pri)| pair_extrinsic(&post.aoa, &pri.aoa))
        .collect()
}
