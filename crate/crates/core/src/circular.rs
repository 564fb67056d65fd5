//! Von Mises beliefs over scaled direction cosines, and Gaussian beliefs over positions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::geometry::{aoa_cosines, wrap_angle, Vec3};

pub const KAPPA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMises {
    pub mean: f64,
    pub kappa: f64,
}

impl VonMises {
    pub fn new(mean: f64, kappa: f64) -> Self {
        let kappa = if kappa.is_nan() { 0.0 } else { kappa.clamp(0.0, KAPPA_MAX) };
        Self {
            mean: wrap_angle(mean),
            kappa,
        }
    }

    pub fn uniform() -> Self {
        Self::new(0.0, 0.0)
    }

    fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.kappa, self.mean)
    }

    fn from_phasor(z: Complex64) -> Self {
        let kappa = z.norm();
        let mean = if kappa > 0.0 { z.arg() } else { 0.0 };
        Self::new(mean, kappa)
    }

    /// Unnormalized log density shifted to be zero at the mode.
    pub fn log_kernel(&self, theta: f64) -> f64 {
        let h = (theta - self.mean) / 2.0;
        let s = h.sin();
        -2.0 * self.kappa * s * s
    }
}

/// Beliefs over `pi * phi_x` and `pi * phi_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmPair {
    pub x: VonMises,
    pub y: VonMises,
}

impl VmPair {
    pub fn uniform() -> Self {
        Self {
            x: VonMises::uniform(),
            y: VonMises::uniform(),
        }
    }

    /// Cosines at the mean directions.
    pub fn cosines(&self) -> (f64, f64) {
        (self.x.mean / PI, self.y.mean / PI)
    }
}

/// `ln I0(kappa)`: power series up to 50, asymptotic expansion above.
pub fn log_i0(kappa: f64) -> f64 {
    let k = kappa.abs();
    if k <= 50.0 {
        let q = k * k / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term > sum * 1e-17 {
            term *= q / (n * n);
            sum += term;
            n += 1.0;
        }
        sum.ln()
    } else {
        let inv = 1.0 / (8.0 * k);
        // coefficients of (1 + 1/(8k) + 9/(2!(8k)^2) + 225/(3!(8k)^3) + ...)
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..8 {
            let odd = (2 * j - 1) as f64;
            term *= odd * odd * inv / j as f64;
            sum += term;
        }
        k - 0.5 * (2.0 * PI * k).ln() + sum.ln()
    }
}

pub fn vm_log_pdf(d: &VonMises, theta: f64) -> f64 {
    d.kappa * (theta - d.mean).cos() - (2.0 * PI).ln() - log_i0(d.kappa)
}

pub fn vm_multiply(a: &VonMises, b: &VonMises) -> VonMises {
    VonMises::from_phasor(a.phasor() + b.phasor())
}

/// Removes the prior's contribution from a posterior.
pub fn vm_extrinsic(post: &VonMises, pri: &VonMises) -> VonMises {
    VonMises::from_phasor(post.phasor() - pri.phasor())
}

pub fn pair_multiply(a: &VmPair, b: &VmPair) -> VmPair {
    VmPair {
        x: vm_multiply(&a.x, &b.x),
        y: vm_multiply(&a.y, &b.y),
    }
}

pub fn pair_extrinsic(post: &VmPair, pri: &VmPair) -> VmPair {
    VmPair {
        x: vm_extrinsic(&post.x, &pri.x),
        y: vm_extrinsic(&post.y, &pri.y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Smallest precision eigenvalue kept when inverting covariances.
const PRECISION_FLOOR: f64 = 1e-12;

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(invalid("covariance shape does not match mean"));
        }
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(invalid("non-finite Gaussian belief"));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: DVector<f64>, var: f64) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(n, n) * var,
        }
    }

    pub fn mean3(&self) -> Vec3 {
        Vec3::new(self.mean[0], self.mean[1], self.mean[2])
    }

    /// Inverse covariance; directions with vanishing variance are capped.
    pub fn precision(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.cov.clone());
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let vals = eig
            .eigenvalues
            .map(|l| 1.0 / l.max(scale * PRECISION_FLOOR).max(f64::MIN_POSITIVE));
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    }

    pub fn from_information(precision: &DMatrix<f64>, shift: &DVector<f64>) -> Result<Self> {
        let eig = SymmetricEigen::new((precision + precision.transpose()) * 0.5);
        let top = eig.eigenvalues.amax();
        if !(top > 0.0) {
            return Err(invalid("information matrix has no positive direction"));
        }
        let vals = eig.eigenvalues.map(|l| 1.0 / l.max(top * PRECISION_FLOOR));
        let cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let mean = &cov * shift;
        Self::new(mean, cov)
    }

    /// Product of densities, computed in information form.
    pub fn product(beliefs: &[&GaussianBelief]) -> Result<Self> {
        let n = beliefs.first().ok_or_else(|| invalid("empty product"))?.mean.len();
        let mut p = DMatrix::zeros(n, n);
        let mut h = DVector::zeros(n);
        for b in beliefs {
            let pi = b.precision();
            h += &pi * &b.mean;
            p += pi;
        }
        Self::from_information(&p, &h)
    }
}

/// Projects a position belief onto a von Mises belief over the cosines seen from `reference`.
///
/// The concentration is the inverse of the linearized variance of `pi * phi`.
/// When the line of sight lies along an axis the cosine is stationary to first
/// order and that axis gets the maximum concentration.
pub fn gaussian_to_vm(belief: &GaussianBelief, reference: &Vec3) -> Result<VmPair> {
    let mean = belief.mean3();
    let (phx, phy) = aoa_cosines(&mean, reference)?;
    let los = mean - reference;
    let d = los.norm();
    let u = los / d;
    let c = belief.cov.fixed_view::<3, 3>(0, 0).into_owned();
    let axis = |e: Vec3, phi: f64| -> VonMises {
        let perp = e - u * phi;
        let n = perp.norm();
        let one_minus = 1.0 - phi * phi;
        if n < 1e-12 || one_minus <= 0.0 {
            return VonMises::new(PI * phi.clamp(-1.0, 1.0), KAPPA_MAX);
        }
        let v = perp / n;
        let var = (v.transpose() * c * v)[(0, 0)];
        let kappa = if var > 0.0 {
            d * d / (PI * PI * one_minus * var)
        } else {
            KAPPA_MAX
        };
        VonMises::new(PI * phi, kappa)
    };
    Ok(VmPair {
        x: axis(Vec3::x(), phx),
        y: axis(Vec3::y(), phy),
    })
}
